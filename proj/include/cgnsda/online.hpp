#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "cgnsda/info.hpp"
#include "cgnsda/smoother.hpp"

namespace cgnsda {

/// Lag selection policy for the online smoother.
struct LagPolicy {
    enum class Kind { fixed, adaptive };
    enum class Criterion { lsdf, entropy };

    Kind kind = Kind::fixed;
    long fixed_lag = 0;      ///< L >= 0 (fixed)
    long max_lag = 1;        ///< b >= 1 (adaptive)
    double delta = 1e-6;     ///< tolerance in (0,1) (adaptive)
    int lsdf_window = 3;     ///< odd, >= 3 (adaptive, lsdf criterion)
    Criterion criterion = Criterion::lsdf;

    static LagPolicy fixed(long L) {
        if (L < 0) throw ParameterError("LagPolicy: fixed lag must be >= 0");
        LagPolicy p;
        p.kind = Kind::fixed;
        p.fixed_lag = L;
        return p;
    }

    static LagPolicy adaptive(long b, double delta, int w = 3,
                              Criterion crit = Criterion::lsdf) {
        if (b < 1) throw ParameterError("LagPolicy: max lag b must be >= 1");
        if (!(delta > 0.0 && delta < 1.0))
            throw ParameterError("LagPolicy: delta must be in (0,1)");
        if (w < 3 || w % 2 == 0)
            throw ParameterError("LagPolicy: LSDF window must be odd and >= 3");
        LagPolicy p;
        p.kind = Kind::adaptive;
        p.max_lag = b;
        p.delta = delta;
        p.lsdf_window = w;
        p.criterion = crit;
        return p;
    }

    long capacity() const { return (kind == Kind::fixed ? fixed_lag : max_lag) + 1; }
};

/// Adaptive lag from the per-step information-gain series. The series holds
/// the gains for steps j = R_n .. n-1 in ascending j; the lag is the
/// distance from the end of the series to the last element below delta
/// (after LSDF preprocessing for the lsdf criterion), or min(n-1, b) when
/// no element is below delta. Total on any nonempty series.
inline long choose_lag(const std::vector<double>& entropy_series, const LagPolicy& policy) {
    if (policy.kind != LagPolicy::Kind::adaptive)
        throw ParameterError("choose_lag: policy must be adaptive");
    if (entropy_series.empty()) throw ParameterError("choose_lag: series must be nonempty");
    const std::vector<double>& crit =
        (policy.criterion == LagPolicy::Criterion::lsdf)
            ? lsdf(entropy_series, policy.lsdf_window)
            : entropy_series;
    const long len = static_cast<long>(crit.size());
    long best = -1;
    for (long p = 0; p < len; ++p) {
        if (crit[p] < policy.delta) best = p;
    }
    // With the series aligned to j = R_n..n-1, min(len, b) equals the
    // min(n-1, b) fallback.
    const long lag = (best >= 0) ? (len - 1 - best) : std::min(len, policy.max_lag);
    return std::min(lag, policy.max_lag);
}

/// Largest eigenvalue magnitude of a square matrix.
template <typename S>
double spectral_radius(const Mat<S>& m) {
    if (m.rows() != m.cols()) throw ParameterError("spectral_radius: matrix must be square");
    if (m.rows() == 0) return 0.0;
    if (m.rows() == 1) return std::abs(m(0, 0));
    if constexpr (is_complex_v<S>) {
        Eigen::ComplexEigenSolver<Mat<S>> es(m, false);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    } else {
        Eigen::EigenSolver<Mat<S>> es(m, false);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
}

/// One live step of the online smoother window.
template <typename S>
struct WindowEntry {
    long j = 0;
    double t = 0.0;
    Vec<S> mu_s;
    Mat<S> R_s;
    Vec<S> mu_f;
    Mat<S> R_f;
    Mat<S> E;      ///< E^j; set when observation j+1 arrives
    bool has_E = false;
    Mat<S> D;      ///< accumulated update tensor (identity at creation)
};

/// Final value of an evicted step, streamed to the output sink.
template <typename S>
struct FlushedStep {
    long j = 0;
    double t = 0.0;
    long lag_at_flush = 0; ///< lag chosen by the ingest that caused the flush
    Vec<S> mu_s;
    Mat<S> R_s;
    Mat<S> E;      ///< E^j (consumers deriving cross statistics need it)
    bool has_E = false;
};

struct StorageReport {
    std::size_t peak_entries = 0;
    std::size_t peak_bytes = 0;
    std::size_t current_entries = 0;
};

/// Forward-in-time online smoother over a bounded window of b+1 (adaptive)
/// or L+1 (fixed) entries. Each ingest runs one filter step, updates the
/// lagged smoother states through the accumulated update tensors, right-
/// multiplies every live tensor by the new E matrix, and evicts entries
/// older than the capacity (their final values are flushed to the sink
/// first). During ingest the window transiently holds capacity+1 entries
/// (the incoming slot); the reported peak counts post-ingest occupancy.
///
/// Single-writer: ingest is strictly sequential per window. Distinct
/// windows run in parallel freely.
template <typename S>
class SmootherWindow {
public:
    struct Options {
        bool check_psd = true;           ///< enforce min eigenvalue >= -psd_tol
        double psd_tol = 1e-10;
        bool track_spectral_radius = false; ///< record max rho(D) over live entries
        /// Ingests to skip before rho(D) tracking starts. The cold-start
        /// transient of a large covariance init can push single E factors
        /// above 1 until the filter contracts; the stability statement
        /// concerns the equilibrated run.
        long radius_spinup_steps = 0;
        StepCoeffOptions coeff_opts{};
        /// Test hook: scales the E factor applied to the stored tensors,
        /// corrupting the D bookkeeping when != 1. Used by the negative
        /// test of the acceptance checker.
        double d_fault_scale = 1.0;
    };

    SmootherWindow(ModelSpec<S> model, GaussianState<S> init, Vec<S> x0, LagPolicy policy,
                   double dt, Options opts = {})
        : model_(std::move(model)), policy_(policy), dt_(dt), opts_(opts),
          x_prev_(std::move(x0)) {
        WindowEntry<S> e;
        e.j = 0;
        e.t = init.t;
        e.mu_f = init.mean;
        e.R_f = init.cov;
        e.mu_s = init.mean;
        e.R_s = init.cov;
        e.D = Mat<S>::Identity(model_.l, model_.l);
        entries_.push_back(std::move(e));
        bytes_per_entry_ = sizeof(WindowEntry<S>) +
                           sizeof(S) * static_cast<std::size_t>(2 * model_.l +
                                                                4 * model_.l * model_.l);
        peak_entries_ = 1;
        peak_bytes_ = bytes_per_entry_;
    }

    /// Swap the model used by future ingests (online parameter estimation).
    void set_model(ModelSpec<S> model) { model_ = std::move(model); }

    void set_sink(std::function<void(const FlushedStep<S>&)> sink) { sink_ = std::move(sink); }

    /// Process observation x^n (n = latest()+1). Returns the chosen lag L_n.
    long ingest(const Vec<S>& x_new) {
        const long n = entries_.back().j + 1;
        WindowEntry<S>& prev = entries_.back(); // step n-1

        // Filter update n-1 -> n; the new filter state is also mu_s^{n,n}.
        GaussianState<S> filt_prev{prev.mu_f, prev.R_f, prev.t};
        auto fs = detail::filter_step_full(model_, filt_prev, x_prev_, x_new, dt_, n);

        // Backward coefficients at n-1 and the one-step smoother statistics.
        const auto coeffs =
            step_coeffs(model_, filt_prev, x_prev_, x_new, dt_, opts_.coeff_opts);
        prev.E = coeffs.E;
        prev.has_E = true;
        if (coeffs.rf_condition > opts_.coeff_opts.rf_condition_warn) ++condition_warnings_;

        const Vec<S> mu_s_prev_n = coeffs.E * fs.state.mean + coeffs.b;
        Mat<S> R_s_prev_n = coeffs.E * fs.state.cov * coeffs.E.adjoint() + coeffs.P;
        detail::symmetrize(R_s_prev_n);

        // Innovation pair shared by every lagged update at this ingest.
        const Vec<S> dmu = mu_s_prev_n - prev.mu_f;
        Mat<S> dR = R_s_prev_n - prev.R_f;
        detail::symmetrize(dR);

        const long lag = select_lag(n, dmu, dR);

        // Lagged updates, newest first: j = n-1 down to n-lag.
        for (long j = n - 1; j >= n - lag; --j) {
            WindowEntry<S>* e = entry_ptr(j);
            if (e == nullptr) break; // older than the live window
            e->mu_s += e->D * dmu;
            e->R_s += Mat<S>(e->D * dR * e->D.adjoint());
            detail::symmetrize(e->R_s);
            check_covariance(e->R_s, n);
        }

        // Maintain the accumulated tensors: D^{j,n-1} = D^{j,n-2} E^{n-1}.
        const Mat<S> factor = coeffs.E * S(opts_.d_fault_scale);
        for (auto& e : entries_) e.D = Mat<S>(e.D * factor);

        if (opts_.track_spectral_radius && n > opts_.radius_spinup_steps) {
            for (const auto& e : entries_) {
                // Every live entry now carries at least one E factor.
                max_update_radius_ = std::max(max_update_radius_, spectral_radius(e.D));
            }
        }

        WindowEntry<S> fresh;
        fresh.j = n;
        fresh.t = fs.state.t;
        fresh.mu_f = fs.state.mean;
        fresh.R_f = fs.state.cov;
        fresh.mu_s = fs.state.mean;
        fresh.R_s = fs.state.cov;
        fresh.D = Mat<S>::Identity(model_.l, model_.l);
        entries_.push_back(std::move(fresh));
        x_prev_ = x_new;
        min_eig_seen_ = std::min(min_eig_seen_, detail::min_eigenvalue(fs.state.cov));

        // Evict below the capacity floor, oldest first.
        const long floor = n - (policy_.capacity() - 1);
        while (!entries_.empty() && entries_.front().j < floor) {
            flush(entries_.front(), lag);
            entries_.pop_front();
        }

        peak_entries_ = std::max(peak_entries_, entries_.size());
        peak_bytes_ = std::max(peak_bytes_, entries_.size() * bytes_per_entry_);
        last_lag_ = lag;
        return lag;
    }

    /// Flush all remaining entries (end of the observation record).
    void finish() {
        while (!entries_.empty()) {
            flush(entries_.front(), last_lag_);
            entries_.pop_front();
        }
    }

    long latest() const { return entries_.empty() ? finished_at_ : entries_.back().j; }

    const std::deque<WindowEntry<S>>& entries() const { return entries_; }

    /// Accumulated update tensor of a live step (ordered product of the E
    /// matrices from j through the latest one computed).
    const Mat<S>& update_tensor(long j) const {
        const WindowEntry<S>* e = entry_ptr_const(j);
        if (e == nullptr) throw ParameterError("update_tensor: step evicted from the window");
        return e->D;
    }

    StorageReport storage_report() const {
        return {peak_entries_, peak_bytes_, entries_.size()};
    }

    /// Flushed steps accumulated when no sink is installed.
    const std::vector<FlushedStep<S>>& collected() const { return collected_; }

    double max_update_radius() const { return max_update_radius_; }
    double min_covariance_eigenvalue() const { return min_eig_seen_; }
    long condition_warnings() const { return condition_warnings_; }

private:
    long select_lag(long n, const Vec<S>& dmu, const Mat<S>& dR) {
        if (policy_.kind == LagPolicy::Kind::fixed) return std::min(policy_.fixed_lag, n);
        // Information-gain series over the live steps j = max(R_n, oldest)..n-1.
        const long r_n = std::max(n - 1 - policy_.max_lag, 1L);
        const long lo = std::max(r_n, entries_.front().j);
        std::vector<double> series;
        series.reserve(static_cast<std::size_t>(n - lo));
        for (long j = lo; j <= n - 1; ++j) {
            const WindowEntry<S>* e = entry_ptr_const(j);
            series.push_back(update_gain(e->D, dmu, dR, e->R_s).total);
        }
        if (series.empty()) return 0; // n = 1: no eligible steps yet
        return choose_lag(series, policy_);
    }

    void flush(WindowEntry<S>& e, long lag) {
        FlushedStep<S> f{e.j, e.t, lag, std::move(e.mu_s), std::move(e.R_s),
                         std::move(e.E), e.has_E};
        finished_at_ = e.j;
        if (sink_) sink_(f);
        else collected_.push_back(std::move(f));
    }

    void check_covariance(const Mat<S>& cov, long step) {
        if (!opts_.check_psd) return;
        const double lam = detail::min_eigenvalue(cov);
        min_eig_seen_ = std::min(min_eig_seen_, lam);
        if (lam < -opts_.psd_tol)
            throw NumericalError("online smoother covariance lost positive semidefiniteness",
                                 step);
    }

    WindowEntry<S>* entry_ptr(long j) {
        const long front = entries_.front().j;
        if (j < front || j > entries_.back().j) return nullptr;
        return &entries_[static_cast<std::size_t>(j - front)];
    }
    const WindowEntry<S>* entry_ptr_const(long j) const {
        const long front = entries_.front().j;
        if (j < front || j > entries_.back().j) return nullptr;
        return &entries_[static_cast<std::size_t>(j - front)];
    }

    ModelSpec<S> model_;
    LagPolicy policy_;
    double dt_;
    Options opts_;
    Vec<S> x_prev_;
    std::deque<WindowEntry<S>> entries_;
    std::function<void(const FlushedStep<S>&)> sink_;
    std::vector<FlushedStep<S>> collected_;
    std::size_t bytes_per_entry_ = 0;
    std::size_t peak_entries_ = 0;
    std::size_t peak_bytes_ = 0;
    long last_lag_ = 0;
    long finished_at_ = -1;
    double max_update_radius_ = 0.0;
    double min_eig_seen_ = std::numeric_limits<double>::infinity();
    long condition_warnings_ = 0;
};

} // namespace cgnsda
