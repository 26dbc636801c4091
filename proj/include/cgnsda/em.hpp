#pragma once

#include <deque>
#include <numbers>
#include <string>
#include <vector>

#include "cgnsda/models.hpp"
#include "cgnsda/online.hpp"

namespace cgnsda {

/// Drift parameter vector with a named layout (one name per regressor
/// column).
struct ThetaVector {
    Eigen::VectorXd values;
    std::vector<std::string> names;
};

/// theta_new = theta_prev + alpha (theta_next - theta_prev); alpha = 1 is a
/// pass-through.
inline ThetaVector accelerate(const ThetaVector& theta_prev, const ThetaVector& theta_next,
                              double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ParameterError("accelerate: alpha must be in (0, 1]");
    ThetaVector out = theta_next;
    out.values = theta_prev.values + alpha * (theta_next.values - theta_prev.values);
    return out;
}

/// Posterior moments of the unobserved path under the smoother distribution,
/// per step: E[y], E[y y^T] and the lag-one cross moment E[y^j y^{j+1}^T].
struct StepMoments {
    long j = 0;
    double t = 0.0;
    RealVec mean;
    RealMat second;       ///< E[y^j y^j^T]
    RealMat cross_next;   ///< E[y^j y^{j+1}^T]
    RealVec mean_next;    ///< E[y^{j+1}]
    bool has_cross = false;
};

struct PosteriorMoments {
    std::vector<StepMoments> steps;
};

/// Moments over the live window. The lag-one cross covariance is
/// Cov(y^j, y^{j+1} | obs) = E^j R_s^{j+1}, the backward-gain identity of
/// the smoother recursion.
inline PosteriorMoments e_step(const SmootherWindow<double>& window) {
    PosteriorMoments out;
    const auto& entries = window.entries();
    out.steps.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        StepMoments m;
        m.j = e.j;
        m.t = e.t;
        m.mean = e.mu_s;
        m.second = e.R_s + e.mu_s * e.mu_s.transpose();
        if (i + 1 < entries.size() && e.has_E) {
            const auto& nxt = entries[i + 1];
            m.cross_next = e.E * nxt.R_s + e.mu_s * nxt.mu_s.transpose();
            m.mean_next = nxt.mu_s;
            m.has_cross = true;
        }
        out.steps.push_back(std::move(m));
    }
    return out;
}

/// Drift linear in theta with regressors affine in the unobserved state:
///   drift_z(t, x, y) = c(t, x) + sum_c theta_c (alpha_c(t, x) + B_c(t, x) y)
/// over the stacked state z = (x; y). `eval` fills alpha ((k+l) x N) and the
/// per-column B matrices ((k+l) x l) in place.
struct RegressorLayout {
    Eigen::Index n_params = 0;
    Eigen::Index k = 0;
    Eigen::Index l = 0;
    std::vector<std::string> names;
    std::function<void(double, const RealVec&, RealMat&, std::vector<RealMat>&)> eval;
    std::function<RealVec(double, const RealVec&)> theta_free;    ///< c(t,x); null = zero
    std::function<RealMat(double, const RealVec&)> theta_free_lin; ///< B0(t,x), (k+l) x l; null = zero
};

/// Accumulates the generalized-least-squares normal equations
///   (sum_j E[Phi_j^T W Phi_j]) theta = sum_j E[Phi_j^T W (dz_j - c_j dt)] / dt
/// with expectations under the smoother posterior.
class GlsAccumulator {
public:
    explicit GlsAccumulator(const RegressorLayout& layout)
        : layout_(&layout),
          A_(RealMat::Zero(layout.n_params, layout.n_params)),
          rhs_(RealVec::Zero(layout.n_params)),
          alpha_(layout.k + layout.l, layout.n_params),
          B_(static_cast<std::size_t>(layout.n_params),
             RealMat::Zero(layout.k + layout.l, layout.l)) {}

    /// Contribution of step j spanning [t_j, t_{j+1}]. `dx_obs` is the
    /// observed increment of x; `m` carries the moments at j including the
    /// lag-one cross statistics.
    void add_step(const RealMat& W, double dt, double t, const RealVec& x_j,
                  const RealVec& dx_obs, const StepMoments& m) {
        if (!m.has_cross) throw ParameterError("GlsAccumulator: step lacks a cross moment");
        const Eigen::Index k = layout_->k;
        const Eigen::Index l = layout_->l;
        const Eigen::Index N = layout_->n_params;
        layout_->eval(t, x_j, alpha_, B_);

        RealVec c = layout_->theta_free ? layout_->theta_free(t, x_j) : RealVec::Zero(k + l);

        // E[dz]/dt - c - B0 E[y]  and  E[dz y^T]/dt - c mu^T - B0 E[y y^T].
        RealVec ez(k + l);
        ez.head(k) = dx_obs / dt;
        ez.tail(l) = (m.mean_next - m.mean) / dt;
        ez -= c;
        RealMat ezy(k + l, l);
        ezy.topRows(k) = (dx_obs / dt) * m.mean.transpose();
        ezy.bottomRows(l) = (m.cross_next.transpose() - m.second) / dt;
        ezy -= c * m.mean.transpose();
        if (layout_->theta_free_lin) {
            const RealMat B0 = layout_->theta_free_lin(t, x_j);
            ez -= B0 * m.mean;
            ezy -= B0 * m.second;
        }

        const RealMat Walpha = W * alpha_;
        const RealVec Wez = W * ez;
        const RealMat Wezy = W * ezy;
        std::vector<RealMat> WB(static_cast<std::size_t>(N));
        std::vector<RealVec> WBmu(static_cast<std::size_t>(N));
        for (Eigen::Index cidx = 0; cidx < N; ++cidx) {
            const auto c_sz = static_cast<std::size_t>(cidx);
            WB[c_sz] = W * B_[c_sz];
            WBmu[c_sz] = WB[c_sz] * m.mean;
        }

        for (Eigen::Index ci = 0; ci < N; ++ci) {
            const auto i_sz = static_cast<std::size_t>(ci);
            const auto& a_i = alpha_.col(ci);
            const auto& B_i = B_[i_sz];
            rhs_[ci] += a_i.dot(Wez) + (B_i.transpose() * Wezy).trace();
            for (Eigen::Index ce = ci; ce < N; ++ce) {
                const auto e_sz = static_cast<std::size_t>(ce);
                double v = a_i.dot(Walpha.col(ce));
                v += a_i.dot(WBmu[e_sz]);
                v += m.mean.dot(B_i.transpose() * Walpha.col(ce));
                v += (B_i.transpose() * WB[e_sz] * m.second).trace();
                A_(ci, ce) += v;
                if (ce != ci) A_(ce, ci) += v;
            }
        }
        ++n_steps_;
    }

    void merge(const GlsAccumulator& other) {
        A_ += other.A_;
        rhs_ += other.rhs_;
        n_steps_ += other.n_steps_;
    }

    /// Solve the normal equations; rank-deficient systems raise an error
    /// naming the dependent columns.
    ThetaVector solve() const {
        Eigen::ColPivHouseholderQR<RealMat> qr(A_);
        qr.setThreshold(1e-10);
        if (qr.rank() < layout_->n_params) {
            const auto perm = qr.colsPermutation().indices();
            std::string cols;
            for (Eigen::Index i = qr.rank(); i < layout_->n_params; ++i) {
                if (!cols.empty()) cols += ", ";
                cols += layout_->names[static_cast<std::size_t>(perm[i])];
            }
            throw ConditioningError("m_step: normal equations are rank-deficient; "
                                    "unidentifiable columns: " + cols);
        }
        ThetaVector theta;
        theta.values = qr.solve(rhs_);
        theta.names = layout_->names;
        return theta;
    }

    long steps() const { return n_steps_; }

private:
    const RegressorLayout* layout_;
    RealMat A_;
    RealVec rhs_;
    long n_steps_ = 0;
    // workspace
    mutable RealMat alpha_;
    mutable std::vector<RealMat> B_;
};

/// Closed-form M-step: generalized least squares on the Euler-discretized
/// full likelihood with posterior moments. `x_path` is indexed by the step
/// numbers carried in `moments`; W is the inverse of the stacked noise
/// Gramian (the noise amplitudes are known).
inline ThetaVector m_step(const PosteriorMoments& moments, const std::vector<RealVec>& x_path,
                          const RegressorLayout& layout, const RealMat& noise_gramian,
                          double dt) {
    detail::HermitianSolver<double> solver(noise_gramian, "noise Gramian");
    const RealMat W = solver.solve(RealMat::Identity(noise_gramian.rows(), noise_gramian.cols()));
    GlsAccumulator acc(layout);
    for (const auto& m : moments.steps) {
        if (!m.has_cross) continue;
        const std::size_t j = static_cast<std::size_t>(m.j);
        const RealVec dx = x_path.at(j + 1) - x_path.at(j);
        acc.add_step(W, dt, m.t, x_path.at(j), dx, m);
    }
    if (acc.steps() == 0) throw ParameterError("m_step: no usable steps");
    return acc.solve();
}

// ---------------------------------------------------------------------------
// Online EM driver
// ---------------------------------------------------------------------------

/// Everything the EM loop needs to know about a parametrized model family.
struct EmModel {
    RegressorLayout layout;
    std::function<ModelSpec<double>(const ThetaVector&)> model_of;
    std::function<RealMat(double, const RealVec&)> noise_gramian; ///< stacked (k+l)^2
};

struct EmConfig {
    ThetaVector theta0;
    double dt = 1e-3;
    double T_ini = 10.0;        ///< burn-in (time units) before any M-step
    LagPolicy policy = LagPolicy::adaptive(1000, 1e-4, 3, LagPolicy::Criterion::entropy);
    double alpha = 1.0;         ///< acceleration factor in (0, 1]
    double accel_fraction = 0.1; ///< fraction of updates with acceleration applied
    long update_every = 1;      ///< M-step cadence in observations
    long min_update_steps = 50; ///< skip M-steps until this many usable steps exist
    double divergence_norm = 1e7;
    double convergence_tol = 0.0; ///< stop early when ||dtheta|| drops below (0 = run all)
    std::optional<GaussianState<double>> init; ///< filter init; default when absent
};

struct EmTracePoint {
    long update_idx = 0;
    double t = 0.0;
    Eigen::VectorXd theta;
    long lag = 0;
    double loglik = 0.0;
};

struct EmResult {
    std::vector<EmTracePoint> trace;
    ThetaVector theta_final;
    PosteriorMoments final_moments;
    std::vector<long> lag_trace;
};

namespace detail {

/// One-step predictive log-density of the observed increment (the
/// innovation likelihood), used as the online likelihood proxy.
inline double innovation_loglik(const ModelSpec<double>& m, const WindowEntry<double>& prev,
                                const RealVec& x_prev, const RealVec& x_new, double dt) {
    const auto c = eval_coefficients(m, prev.t, x_prev);
    const auto g = gramians_from(c);
    const RealVec innov = m.observed_increment(x_prev, x_new) -
                          (c.lambda_x * prev.mu_f + c.f_x) * dt;
    RealMat cov = g.Sxx * dt + c.lambda_x * prev.R_f * c.lambda_x.transpose() * dt * dt;
    symmetrize(cov);
    HermitianSolver<double> s(cov, "innovation covariance");
    const double quad = innov.dot(RealVec(s.solve(innov)));
    const double logdet = s.log_det("innovation covariance");
    return -0.5 * (quad + logdet + innov.size() * std::log(2.0 * std::numbers::pi));
}

} // namespace detail

/// Online EM: burn-in with theta0, then per observation ingest into the
/// adaptive online smoother, accumulate the GLS statistics over the whole
/// record, and re-estimate theta. Evicted steps contribute final-valued
/// statistics once (when both endpoints of the step are final); the live
/// window's contribution is recomputed at each M-step.
inline EmResult run_online_em(const EmModel& em, const EmConfig& cfg,
                              const Trajectory<double>& traj) {
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
        throw ParameterError("run_online_em: alpha must be in (0, 1]");
    if (cfg.T_ini <= 0.0) throw ParameterError("run_online_em: T_ini must be positive");
    const long n_total = traj.steps();
    const long burn_steps = std::lround(cfg.T_ini / cfg.dt);
    if (n_total <= burn_steps)
        throw ParameterError("run_online_em: trajectory must extend beyond the burn-in");

    ThetaVector theta = cfg.theta0;
    ModelSpec<double> model = em.model_of(theta);
    const RealMat gramian = em.noise_gramian(0.0, traj.x_path.front());
    detail::HermitianSolver<double> gsolve(gramian, "noise Gramian");
    const RealMat W = gsolve.solve(RealMat::Identity(gramian.rows(), gramian.cols()));

    SmootherWindow<double> window(model, cfg.init ? *cfg.init : default_init(model),
                                  traj.x_path.front(), cfg.policy, cfg.dt);

    GlsAccumulator flushed_acc(em.layout);
    // Final values of the most recently evicted step, for pairing.
    struct FinalStep {
        long j;
        double t;
        RealVec mu;
        RealMat R;
        RealMat E;
        bool has_E;
    };
    std::optional<FinalStep> last_final;

    auto moments_of = [](const FinalStep& f) {
        StepMoments m;
        m.j = f.j;
        m.t = f.t;
        m.mean = f.mu;
        m.second = f.R + f.mu * f.mu.transpose();
        return m;
    };

    window.set_sink([&](const FlushedStep<double>& f) {
        FinalStep cur{f.j, f.t, f.mu_s, f.R_s, f.E, f.has_E};
        if (last_final && last_final->has_E && last_final->j + 1 == f.j) {
            StepMoments m = moments_of(*last_final);
            m.cross_next = last_final->E * f.R_s + last_final->mu * f.mu_s.transpose();
            m.mean_next = f.mu_s;
            m.has_cross = true;
            const std::size_t j = static_cast<std::size_t>(m.j);
            const RealVec dx = model.observed_increment(traj.x_path[j], traj.x_path[j + 1]);
            flushed_acc.add_step(W, cfg.dt, m.t, traj.x_path[j], dx, m);
        }
        last_final = std::move(cur);
    });

    EmResult result;
    result.lag_trace.reserve(static_cast<std::size_t>(n_total));
    const long em_updates_total = n_total - burn_steps;
    const long accel_until = static_cast<long>(cfg.accel_fraction * em_updates_total);
    long update_idx = 0;
    std::deque<double> loglik_window;
    double loglik_sum = 0.0;

    for (long n = 1; n <= n_total; ++n) {
        const double ll = detail::innovation_loglik(model, window.entries().back(),
                                                    traj.x_path[n - 1], traj.x_path[n], cfg.dt);
        loglik_window.push_back(ll);
        loglik_sum += ll;
        if (static_cast<long>(loglik_window.size()) > cfg.policy.capacity()) {
            loglik_sum -= loglik_window.front();
            loglik_window.pop_front();
        }

        const long lag = window.ingest(traj.x_path[n]);
        result.lag_trace.push_back(lag);
        if (n <= burn_steps) continue;
        if ((n - burn_steps) % cfg.update_every != 0) continue;

        // Live-window contribution on top of the flushed statistics.
        GlsAccumulator live(em.layout);
        const auto& entries = window.entries();
        if (last_final && last_final->has_E && !entries.empty() &&
            last_final->j + 1 == entries.front().j) {
            StepMoments m = moments_of(*last_final);
            m.cross_next = last_final->E * entries.front().R_s +
                           last_final->mu * entries.front().mu_s.transpose();
            m.mean_next = entries.front().mu_s;
            m.has_cross = true;
            const std::size_t j = static_cast<std::size_t>(m.j);
            const RealVec dx = model.observed_increment(traj.x_path[j], traj.x_path[j + 1]);
            live.add_step(W, cfg.dt, m.t, traj.x_path[j], dx, m);
        }
        for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
            const auto& e = entries[i];
            if (!e.has_E) continue;
            const auto& nxt = entries[i + 1];
            StepMoments m;
            m.j = e.j;
            m.t = e.t;
            m.mean = e.mu_s;
            m.second = e.R_s + e.mu_s * e.mu_s.transpose();
            m.cross_next = e.E * nxt.R_s + e.mu_s * nxt.mu_s.transpose();
            m.mean_next = nxt.mu_s;
            m.has_cross = true;
            const std::size_t j = static_cast<std::size_t>(e.j);
            const RealVec dx = model.observed_increment(traj.x_path[j], traj.x_path[j + 1]);
            live.add_step(W, cfg.dt, m.t, traj.x_path[j], dx, m);
        }
        live.merge(flushed_acc);
        if (live.steps() < std::max(cfg.min_update_steps, 2 * em.layout.n_params)) continue;

        ThetaVector theta_next = live.solve();
        const ThetaVector theta_prev = theta;
        if (update_idx < accel_until && cfg.alpha < 1.0) {
            theta = accelerate(theta_prev, theta_next, cfg.alpha);
        } else {
            theta = std::move(theta_next);
        }
        if (!theta.values.allFinite() || theta.values.norm() > cfg.divergence_norm)
            throw NumericalError("run_online_em: parameter estimate diverged", n);
        model = em.model_of(theta);
        window.set_model(model);

        ++update_idx;
        EmTracePoint tp;
        tp.update_idx = update_idx;
        tp.t = n * cfg.dt;
        tp.theta = theta.values;
        tp.lag = lag;
        tp.loglik = loglik_sum / static_cast<double>(loglik_window.size());
        result.trace.push_back(std::move(tp));

        if (cfg.convergence_tol > 0.0 &&
            (theta.values - theta_prev.values).norm() < cfg.convergence_tol)
            break;
    }

    result.theta_final = theta;
    result.final_moments = e_step(window);
    return result;
}

/// Batch EM: full offline smoother E-step over the whole record, closed-form
/// M-step, iterated to convergence. Used as the reference EM variant.
inline ThetaVector run_batch_em(const EmModel& em, const Trajectory<double>& traj,
                                const ThetaVector& theta0, int max_iter = 100,
                                double tol = 1e-8) {
    ThetaVector theta = theta0;
    const RealMat gramian = em.noise_gramian(0.0, traj.x_path.front());
    for (int it = 0; it < max_iter; ++it) {
        ModelSpec<double> model = em.model_of(theta);
        const FilterRun<double> fwd = run_filter(model, traj, default_init(model));
        const std::size_t n = fwd.states.size();
        PosteriorMoments moments;
        moments.steps.resize(n);
        std::vector<RealMat> e_mats(n - 1);
        std::vector<GaussianState<double>> smooth(n);
        smooth[n - 1] = fwd.states[n - 1];
        for (long j = static_cast<long>(n) - 2; j >= 0; --j) {
            const auto coeffs = step_coeffs(model, fwd.states[j], traj.x_path[j],
                                            traj.x_path[j + 1], traj.dt);
            e_mats[j] = coeffs.E;
            smooth[j] = smoother_step(coeffs, smooth[j + 1], fwd.states[j]);
        }
        for (std::size_t j = 0; j < n; ++j) {
            auto& m = moments.steps[j];
            m.j = static_cast<long>(j);
            m.t = traj.times[j];
            m.mean = smooth[j].mean;
            m.second = smooth[j].cov + smooth[j].mean * smooth[j].mean.transpose();
            if (j + 1 < n) {
                m.cross_next = e_mats[j] * smooth[j + 1].cov +
                               smooth[j].mean * smooth[j + 1].mean.transpose();
                m.mean_next = smooth[j + 1].mean;
                m.has_cross = true;
            }
        }
        ThetaVector next = m_step(moments, traj.x_path, em.layout, gramian, traj.dt);
        const double delta = (next.values - theta.values).norm();
        theta = std::move(next);
        if (delta < tol) break;
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Parameter-estimation dyad family
// ---------------------------------------------------------------------------

/// Regressor layout and model builder for the parameter-estimation dyad:
/// theta = (d_u, gamma1, F_u, d_v, gamma2, F_v), drift
///   u: -d_u u + gamma1 u v + F_u
///   v: -d_v v - gamma2 u^2 + F_v
/// Noise amplitudes are known. With `tie_gamma`, gamma1 = gamma2 is a single
/// column named "gamma".
inline EmModel em_dyad_factory(double sigma_u, double sigma_v, bool tie_gamma = false) {
    if (sigma_u <= 0 || sigma_v <= 0)
        throw ParameterError("em_dyad_factory: noise amplitudes must be positive");
    EmModel em;
    em.layout.k = 1;
    em.layout.l = 1;
    if (tie_gamma) {
        em.layout.n_params = 5;
        em.layout.names = {"d_u", "gamma", "F_u", "d_v", "F_v"};
    } else {
        em.layout.n_params = 6;
        em.layout.names = {"d_u", "gamma1", "F_u", "d_v", "gamma2", "F_v"};
    }
    em.layout.eval = [tie_gamma](double, const RealVec& x, RealMat& alpha,
                                 std::vector<RealMat>& B) {
        const double u = x[0];
        alpha.setZero();
        for (auto& b : B) b.setZero();
        if (tie_gamma) {
            alpha(0, 0) = -u;       // d_u
            B[1](0, 0) = u;         // gamma (u-equation)
            alpha(1, 1) = -u * u;   // gamma (v-equation)
            alpha(0, 2) = 1.0;      // F_u
            B[3](1, 0) = -1.0;      // d_v
            alpha(1, 4) = 1.0;      // F_v
        } else {
            alpha(0, 0) = -u;       // d_u
            B[1](0, 0) = u;         // gamma1
            alpha(0, 2) = 1.0;      // F_u
            B[3](1, 0) = -1.0;      // d_v
            alpha(1, 4) = -u * u;   // gamma2
            alpha(1, 5) = 1.0;      // F_v
        }
    };
    em.model_of = [sigma_u, sigma_v, tie_gamma](const ThetaVector& th) {
        EmDyadParams p;
        p.sigma_u = sigma_u;
        p.sigma_v = sigma_v;
        if (tie_gamma) {
            p.d_u = th.values[0];
            p.gamma1 = th.values[1];
            p.F_u = th.values[2];
            p.d_v = th.values[3];
            p.gamma2 = th.values[1];
            p.F_v = th.values[4];
        } else {
            p.d_u = th.values[0];
            p.gamma1 = th.values[1];
            p.F_u = th.values[2];
            p.d_v = th.values[3];
            p.gamma2 = th.values[4];
            p.F_v = th.values[5];
        }
        return em_dyad_model(p);
    };
    em.noise_gramian = [sigma_u, sigma_v](double, const RealVec&) {
        RealMat g = RealMat::Zero(2, 2);
        g(0, 0) = sigma_u * sigma_u;
        g(1, 1) = sigma_v * sigma_v;
        return g;
    };
    return em;
}

inline ThetaVector em_dyad_truth() {
    ThetaVector t;
    t.values = (Eigen::VectorXd(6) << 1.0, 3.0, 1.0, 1.0, 3.0, 0.8).finished();
    t.names = {"d_u", "gamma1", "F_u", "d_v", "gamma2", "F_v"};
    return t;
}

inline ThetaVector em_dyad_initial_guess() {
    ThetaVector t;
    t.values = (Eigen::VectorXd(6) << 2.0, 6.0, 2.0, 0.5, 6.0, 0.4).finished();
    t.names = {"d_u", "gamma1", "F_u", "d_v", "gamma2", "F_v"};
    return t;
}

} // namespace cgnsda
