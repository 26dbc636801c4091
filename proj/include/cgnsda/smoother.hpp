#pragma once

#include <vector>

#include "cgnsda/filter.hpp"

namespace cgnsda {

/// Per-step auxiliary matrices of the backward smoother recursion, built
/// from the filter state at step j and the observed increment j -> j+1.
/// E = I + O(dt); F carries the data coupling; b and P are the residual
/// terms so that mu_s^j = E mu_s^{j+1} + b and R_s^j = E R_s^{j+1} E^H + P.
template <typename S>
struct StepCoefficients {
    Mat<S> E;  ///< l x l
    Mat<S> F;  ///< l x k
    Mat<S> Gx; ///< k x l
    Mat<S> Gy; ///< l x l
    Mat<S> H;  ///< l x l
    Mat<S> K;  ///< k x l
    Vec<S> b;  ///< l
    Mat<S> P;  ///< l x l, symmetrized
    double rf_condition = 0.0; ///< condition estimate of the filter covariance solve
};

struct StepCoeffOptions {
    /// Drop the dt-proportional corrections inside F's bracket (ablation of
    /// the printed O(dt) terms). E keeps its leading O(dt) term.
    bool drop_dt_corrections = false;
    /// Condition-number threshold above which the filter covariance solve is
    /// considered degraded; callers may surface a warning.
    double rf_condition_warn = 1e12;
};

/// Auxiliary matrices at step j. `filt` is the filter state at t_j; x_prev
/// and x_next are the observations at t_j and t_{j+1}. When the model has no
/// noise cross-interaction (Sxy == 0) the reduced expressions are used; they
/// agree with the general ones exactly in that case.
template <typename S>
StepCoefficients<S> step_coeffs(const ModelSpec<S>& m, const GaussianState<S>& filt,
                                const std::type_identity_t<Vec<S>>& x_prev,
                                const std::type_identity_t<Vec<S>>& x_next, double dt,
                                const StepCoeffOptions& opts = {}) {
    const double t = filt.t;
    const auto c = detail::eval_coefficients(m, t, x_prev);
    const auto g = gramians_from(c);
    const Eigen::Index l = m.l;

    detail::HermitianSolver<S> rf(filt.cov, "filter covariance R_f");
    detail::HermitianSolver<S> sxx(g.Sxx, "observation Gramian Sxx");

    StepCoefficients<S> out;
    out.rf_condition = rf.condition_estimate();

    // Gx = Lx + Sxy R_f^{-1}; Gy = Ly + Syy R_f^{-1}; both via solves on the right.
    out.Gx = c.lambda_x + rf.solve(g.Sxy.adjoint()).adjoint().eval();
    out.Gy = c.lambda_y + rf.solve(g.Syy.adjoint()).adjoint().eval();
    out.H = rf.solve(
        (c.lambda_y * filt.cov + filt.cov * c.lambda_y.adjoint() + g.Syy).eval());
    out.K = sxx.solve(out.Gx);

    const bool no_cross = g.Sxy.isZero(0.0);
    if (no_cross) {
        out.E = Mat<S>::Identity(l, l) - out.Gy * dt;
        if (opts.drop_dt_corrections) {
            out.F = Mat<S>::Zero(l, m.k);
        } else {
            // Gy R_f Lx^H Sxx^{-1}, with Sxx applied through the solve.
            const Mat<S> lhs = out.Gy * filt.cov * c.lambda_x.adjoint(); // l x k
            out.F = sxx.solve(lhs.adjoint()).adjoint() * dt;
        }
    } else {
        const Mat<S> syx_sxxinv = sxx.solve(g.Syx.adjoint()).adjoint().eval(); // l x k
        out.E = Mat<S>::Identity(l, l) + (syx_sxxinv * out.Gx - out.Gy) * dt;

        const Mat<S> lx_sxxinv = sxx.solve(c.lambda_x).adjoint().eval(); // l x k = Lx^H Sxx^{-1}
        Mat<S> bracket = out.K.adjoint() - lx_sxxinv;
        if (!opts.drop_dt_corrections) {
            const Mat<S> krk = out.K * filt.cov * out.K.adjoint(); // k x k
            bracket += (out.Gx.adjoint() * krk -
                        Mat<S>(rf.solve(out.H.adjoint() * filt.cov)) * out.K.adjoint() +
                        c.lambda_y.adjoint() * out.K.adjoint() -
                        c.lambda_x.adjoint() * krk) *
                       dt;
        }
        out.F = -filt.cov * bracket;
    }

    // Residual terms: b absorbs the forecast and the data increment, P the
    // covariance counterpart.
    const Vec<S> forecast = (Mat<S>::Identity(l, l) + c.lambda_y * dt) * filt.mean + c.f_y * dt;
    const Vec<S> innovation =
        m.observed_increment(x_prev, x_next) - (c.lambda_x * filt.mean + c.f_x) * dt;
    out.b = filt.mean - out.E * forecast + out.F * innovation;
    out.P = filt.cov - out.E * (Mat<S>::Identity(l, l) + c.lambda_y * dt) * filt.cov -
            out.F * c.lambda_x * filt.cov * dt;
    detail::symmetrize(out.P);
    return out;
}

/// One backward smoother update: the smoother statistics at step j from the
/// statistics at step j+1 and the coefficients at j.
template <typename S>
GaussianState<S> smoother_step(const StepCoefficients<S>& coeffs,
                               const GaussianState<S>& next_smooth,
                               const GaussianState<S>& filt) {
    GaussianState<S> out;
    out.t = filt.t;
    out.mean = coeffs.E * next_smooth.mean + coeffs.b;
    out.cov = coeffs.E * next_smooth.cov * coeffs.E.adjoint() + coeffs.P;
    detail::symmetrize(out.cov);
    if (!detail::all_finite(out.mean) || !detail::all_finite_mat(out.cov))
        throw NumericalError("smoother diverged to a non-finite state");
    return out;
}

/// Offline smoother: forward filter pass, then backward sweep. The output is
/// indexed 0..n; the endpoint equals the filter state exactly.
template <typename S>
std::vector<GaussianState<S>> run_smoother(const ModelSpec<S>& m, const Trajectory<S>& traj,
                                           const GaussianState<S>& init,
                                           const StepCoeffOptions& opts = {}) {
    const FilterRun<S> fwd = run_filter(m, traj, init);
    std::vector<GaussianState<S>> smooth(fwd.states.size());
    smooth.back() = fwd.states.back();
    for (long j = static_cast<long>(fwd.states.size()) - 2; j >= 0; --j) {
        const auto coeffs = step_coeffs(m, fwd.states[j], traj.x_path[j], traj.x_path[j + 1],
                                        traj.dt, opts);
        smooth[j] = smoother_step(coeffs, smooth[j + 1], fwd.states[j]);
    }
    return smooth;
}

} // namespace cgnsda
