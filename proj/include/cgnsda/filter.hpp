#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cgnsda/model.hpp"
#include "cgnsda/trajectory.hpp"

namespace cgnsda {

/// Gaussian posterior of the unobserved state at one time step. Depending
/// on context it holds the filter statistics (mu_f, R_f) or the smoother
/// statistics (mu_s, R_s).
template <typename S>
struct GaussianState {
    Vec<S> mean;
    Mat<S> cov;
    double t = 0.0;
};

namespace detail {

template <typename S>
void symmetrize(Mat<S>& m) {
    m = ((m + m.adjoint()) * S(0.5)).eval();
}

template <typename S>
double min_eigenvalue(const Mat<S>& hermitian) {
    if (hermitian.rows() == 1) return std::real(hermitian(0, 0));
    Eigen::SelfAdjointEigenSolver<Mat<S>> es(hermitian, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Hermitian linear solver (LDLT) with a singularity guard and a cheap
/// condition estimate from the diagonal factor.
template <typename S>
class HermitianSolver {
public:
    HermitianSolver(const Mat<S>& m, const char* what, long step = -1) : ldlt_(m) {
        const auto dvec = ldlt_.vectorD();
        double dmin = std::numeric_limits<double>::infinity();
        double dmax = 0.0;
        for (Eigen::Index i = 0; i < dvec.size(); ++i) {
            const double a = std::abs(std::real(dvec[i]));
            dmin = std::min(dmin, a);
            dmax = std::max(dmax, a);
        }
        condition_ = (dmin > 0.0) ? dmax / dmin : std::numeric_limits<double>::infinity();
        if (ldlt_.info() != Eigen::Success || dmax == 0.0 || dmin <= dmax * 1e-15)
            throw ConditioningError(std::string("singular ") + what, step);
    }

    template <typename Rhs>
    auto solve(const Rhs& b) const {
        return ldlt_.solve(b);
    }

    /// log det, assuming positive-definiteness; throws otherwise.
    double log_det(const char* what) const {
        const auto dvec = ldlt_.vectorD();
        double s = 0.0;
        for (Eigen::Index i = 0; i < dvec.size(); ++i) {
            const double di = std::real(dvec[i]);
            if (di <= 0.0) throw ConditioningError(std::string(what) + " is not positive-definite");
            s += std::log(di);
        }
        return s;
    }

    double condition_estimate() const { return condition_; }

private:
    Eigen::LDLT<Mat<S>> ldlt_;
    double condition_ = 0.0;
};

} // namespace detail

/// Filter pass over a trajectory: one Gaussian state and one raw innovation
/// per processed observation.
template <typename S>
struct FilterRun {
    std::vector<GaussianState<S>> states; ///< indexed 0..n; states[0] is the init
    std::vector<Vec<S>> innovations;      ///< innovation consumed by update j-1 -> j
    double dt = 0.0;
};

namespace detail {

template <typename S>
struct FilterStepOutput {
    GaussianState<S> state;
    Vec<S> innovation;
};

template <typename S>
FilterStepOutput<S> filter_step_full(const ModelSpec<S>& m, const GaussianState<S>& prev,
                                     const Vec<S>& x_prev, const Vec<S>& x_next, double dt,
                                     long step = -1) {
    const double t = prev.t;
    const auto c = eval_coefficients(m, t, x_prev);
    const auto g = gramians_from(c);

    HermitianSolver<S> sxx(g.Sxx, "observation Gramian Sxx", step);

    const Vec<S> innovation =
        m.observed_increment(x_prev, x_next) - (c.lambda_x * prev.mean + c.f_x) * dt;

    // Kalman-type gain (Syx + R Lx^H) Sxx^{-1}, applied via a solve.
    const Mat<S> cross = g.Syx + prev.cov * c.lambda_x.adjoint();       // l x k
    const Mat<S> gain = sxx.solve(cross.adjoint()).adjoint().eval();    // l x k

    GaussianState<S> next;
    next.t = t + dt;
    next.mean = prev.mean + (c.lambda_y * prev.mean + c.f_y) * dt + gain * innovation;
    next.cov = prev.cov + (c.lambda_y * prev.cov + prev.cov * c.lambda_y.adjoint() + g.Syy -
                           gain * (c.lambda_x * prev.cov + g.Sxy)) *
                              dt;
    symmetrize(next.cov);

    if (!all_finite(next.mean) || !all_finite_mat(next.cov))
        throw NumericalError("filter diverged to a non-finite state", step);
    if (min_eigenvalue(next.cov) < -1e-10)
        throw NumericalError("filter covariance lost positive semidefiniteness", step);
    return {std::move(next), innovation};
}

} // namespace detail

/// One discrete filter update: the Gaussian statistics at t+dt given the
/// statistics at t and the observed increment x_prev -> x_next. The mean is
/// the one-step forecast corrected by the gain (Syx + R Lx^H) Sxx^{-1}
/// applied to the innovation; the covariance follows the Riccati difference
/// form. The result is symmetrized and its minimum eigenvalue must stay
/// above -1e-10.
template <typename S>
GaussianState<S> filter_step(const ModelSpec<S>& m, const GaussianState<S>& prev,
                             const std::type_identity_t<Vec<S>>& x_prev,
                             const std::type_identity_t<Vec<S>>& x_next, double dt) {
    return detail::filter_step_full(m, prev, x_prev, x_next, dt).state;
}

/// Default initialization when none is given: zero mean, identity covariance.
template <typename S>
GaussianState<S> default_init(const ModelSpec<S>& m) {
    GaussianState<S> s;
    s.mean = Vec<S>::Zero(m.l);
    s.cov = Mat<S>::Identity(m.l, m.l);
    s.t = 0.0;
    return s;
}

/// Sequential filter over the observed path of a trajectory.
template <typename S>
FilterRun<S> run_filter(const ModelSpec<S>& m, const Trajectory<S>& traj,
                        const GaussianState<S>& init) {
    if (traj.size() < 2) throw ParameterError("run_filter: trajectory must have at least 2 points");
    FilterRun<S> run;
    run.dt = traj.dt;
    run.states.reserve(traj.size());
    run.innovations.reserve(traj.size() - 1);
    GaussianState<S> state = init;
    state.t = traj.times.front();
    run.states.push_back(std::move(state));
    for (std::size_t j = 0; j + 1 < traj.size(); ++j) {
        auto out = detail::filter_step_full(m, run.states.back(), traj.x_path[j],
                                            traj.x_path[j + 1], traj.dt,
                                            static_cast<long>(j + 1));
        run.states.push_back(std::move(out.state));
        run.innovations.push_back(std::move(out.innovation));
    }
    return run;
}

/// Equilibrium filter variance of the two-dimensional linear Gaussian model
///   dx = (a11 x + a12 y) dt + s1 dW1,  dy = (a21 x + a22 y) dt + s2 dW2,
/// i.e. the positive root of the steady-state Riccati equation
///   2 a22 R + s2^2 = (R a12)^2 / s1^2.
inline double equilibrium_variance_2d(double a12, double a22, double s1, double s2) {
    if (a12 == 0.0)
        throw ParameterError("equilibrium_variance_2d: a12 = 0 decouples the observation");
    if (a22 >= 0.0) throw ParameterError("equilibrium_variance_2d: a22 must be negative");
    if (s1 <= 0.0) throw ParameterError("equilibrium_variance_2d: s1 must be positive");
    if (s2 < 0.0) throw ParameterError("equilibrium_variance_2d: s2 must be nonnegative");
    const double psi = a22 * a22 * s1 * s1 + a12 * a12 * s2 * s2;
    return (a22 * s1 * s1 + s1 * std::sqrt(psi)) / (a12 * a12);
}

} // namespace cgnsda
