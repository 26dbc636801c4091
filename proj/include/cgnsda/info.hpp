#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "cgnsda/filter.hpp"

namespace cgnsda {

/// Relative entropy split into its signal (mean mismatch) and dispersion
/// (covariance mismatch) parts, in nats.
struct InfoGain {
    double signal = 0.0;
    double dispersion = 0.0;
    double total = 0.0;

    InfoGain() = default;
    InfoGain(double sig, double disp) : signal(sig), dispersion(disp), total(sig + disp) {}
};

/// Relative entropy P(p, q) between two Gaussians over the same space:
///   signal     = 1/2 (mu_p - mu_q)^H Rq^{-1} (mu_p - mu_q)
///   dispersion = 1/2 (tr(Rp Rq^{-1}) - N - log det(Rp Rq^{-1}))
template <typename S>
InfoGain kl_gaussian(const GaussianState<S>& p, const GaussianState<S>& q) {
    if (p.mean.size() != q.mean.size())
        throw ParameterError("kl_gaussian: dimension mismatch");
    const Eigen::Index n = p.mean.size();
    detail::HermitianSolver<S> rq(q.cov, "covariance of q");
    detail::HermitianSolver<S> rp(p.cov, "covariance of p");

    const Vec<S> dmu = p.mean - q.mean;
    const Vec<S> solved = rq.solve(dmu);
    const double signal = 0.5 * std::real(dmu.dot(solved));

    const double trace = std::real(Mat<S>(rq.solve(p.cov)).trace());
    const double log_det_ratio = rp.log_det("covariance of p") - rq.log_det("covariance of q");
    const double dispersion = 0.5 * (trace - static_cast<double>(n) - log_det_ratio);
    return {signal, dispersion};
}

/// Information gain of carrying out one online smoother update at a lagged
/// step versus skipping it. `D` is the accumulated update tensor at that
/// step, `dmu` and `dR` the innovation pair (mu_s^{n-1,n} - mu_f^{n-1},
/// R_s^{n-1,n} - R_f^{n-1}), and `R_lagged` the current smoother covariance
/// at the step. Algebraically equal to kl_gaussian(updated, lagged).
template <typename S>
InfoGain update_gain(const Mat<S>& D, const std::type_identity_t<Vec<S>>& dmu,
                     const std::type_identity_t<Mat<S>>& dR,
                     const std::type_identity_t<Mat<S>>& R_lagged) {
    const Eigen::Index l = R_lagged.rows();
    if (l == 1) {
        // Scalar path, same formulas without the factorization machinery.
        const double rs = std::real(R_lagged(0, 0));
        if (rs <= 0.0) throw ConditioningError("lagged smoother covariance R_s is singular");
        const double dabs2 = std::norm(D(0, 0));
        const double signal = 0.5 * dabs2 * std::norm(dmu[0]) / rs;
        const double q = 1.0 + dabs2 * std::real(dR(0, 0)) / rs;
        if (q <= 0.0) throw ConditioningError("updated smoother covariance is not positive");
        return {signal, 0.5 * (q - 1.0 - std::log(q))};
    }
    detail::HermitianSolver<S> rs(R_lagged, "lagged smoother covariance R_s");

    const Vec<S> pushed = D * dmu;
    const Vec<S> solved = rs.solve(pushed);
    const double signal = 0.5 * std::real(pushed.dot(solved));

    // Q = I + (D dR D^H) R_s^{-1}; tr and log det of Q evaluated through the
    // updated covariance so Q itself is never formed unsymmetrically.
    Mat<S> bump = D * dR * D.adjoint();
    detail::symmetrize(bump);
    const double trace_q = static_cast<double>(l) + std::real(Mat<S>(rs.solve(bump)).trace());
    Mat<S> updated = R_lagged + bump;
    detail::symmetrize(updated);
    detail::HermitianSolver<S> ru(updated, "updated smoother covariance");
    const double log_det_q =
        ru.log_det("updated smoother covariance") - rs.log_det("lagged smoother covariance");
    const double dispersion = 0.5 * (trace_q - static_cast<double>(l) - log_det_q);
    return {signal, dispersion};
}

/// Local standard deviation filter: element i is the sample standard
/// deviation (denominator w-1) of the w-window centered at i, with replicate
/// padding at both edges. w must be odd and >= 3.
inline std::vector<double> lsdf(const std::vector<double>& series, int w) {
    if (w < 3 || w % 2 == 0) throw ParameterError("lsdf: window must be odd and >= 3");
    const long n = static_cast<long>(series.size());
    std::vector<double> out(series.size(), 0.0);
    const long half = w / 2;
    for (long i = 0; i < n; ++i) {
        double sum = 0.0;
        for (long off = -half; off <= half; ++off) {
            const long idx = std::clamp(i + off, 0L, n - 1);
            sum += series[idx];
        }
        const double mean = sum / w;
        double ss = 0.0;
        for (long off = -half; off <= half; ++off) {
            const long idx = std::clamp(i + off, 0L, n - 1);
            const double d = series[idx] - mean;
            ss += d * d;
        }
        out[i] = std::sqrt(ss / (w - 1));
    }
    return out;
}

/// Root-mean-square error normalized by the standard deviation of the truth.
inline double nrmse(const std::vector<double>& estimate, const std::vector<double>& truth) {
    if (estimate.size() != truth.size() || truth.size() < 2)
        throw ParameterError("nrmse: need equal lengths >= 2");
    const double n = static_cast<double>(truth.size());
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
    double var = 0.0;
    double mse = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        var += (truth[i] - mean) * (truth[i] - mean);
        const double e = estimate[i] - truth[i];
        mse += e * e;
    }
    var /= n;
    mse /= n;
    if (var <= 0.0) throw ParameterError("nrmse: truth series is constant");
    return std::sqrt(mse / var);
}

/// Normalized autocovariance sequence; value 1 at lag 0.
inline std::vector<double> acf(const std::vector<double>& series, int max_lag) {
    const long n = static_cast<long>(series.size());
    if (n <= max_lag || max_lag < 0) throw ParameterError("acf: series shorter than max_lag");
    const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
    double c0 = 0.0;
    for (long i = 0; i < n; ++i) c0 += (series[i] - mean) * (series[i] - mean);
    if (c0 <= 0.0) throw ParameterError("acf: degenerate (constant) series");
    std::vector<double> out(max_lag + 1);
    for (int k = 0; k <= max_lag; ++k) {
        double ck = 0.0;
        for (long i = 0; i + k < n; ++i) ck += (series[i] - mean) * (series[i + k] - mean);
        out[k] = ck / c0;
    }
    return out;
}

/// Gaussian kernel density estimate on a grid, Silverman bandwidth
/// 1.06 * sigma_hat * n^{-1/5}.
inline std::vector<double> kde(const std::vector<double>& sample, const std::vector<double>& grid) {
    const long n = static_cast<long>(sample.size());
    if (n < 30) throw ParameterError("kde: need at least 30 samples");
    const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
    double var = 0.0;
    for (double v : sample) var += (v - mean) * (v - mean);
    var /= (n - 1);
    const double sd = std::sqrt(var);
    if (sd <= 0.0) throw ParameterError("kde: degenerate sample");
    const double h = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        double acc = 0.0;
        for (double v : sample) {
            const double z = (grid[gi] - v) / h;
            acc += std::exp(-0.5 * z * z);
        }
        out[gi] = norm * acc;
    }
    return out;
}

} // namespace cgnsda
