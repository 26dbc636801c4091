#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <optional>
#include <vector>

#include "cgnsda/model.hpp"
#include "cgnsda/rng.hpp"

namespace cgnsda {

/// Simulated (or recorded) path on a uniform time grid t_j = j * dt.
/// y_path is present only for synthetic data where the ground truth of the
/// unobserved process is known.
template <typename S>
struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Vec<S>> x_path;
    std::optional<std::vector<Vec<S>>> y_path;

    std::size_t size() const { return x_path.size(); }
    long steps() const { return static_cast<long>(x_path.size()) - 1; }
};

namespace detail {

template <typename S>
bool all_finite(const Vec<S>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if constexpr (is_complex_v<S>) {
            if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
        } else {
            if (!std::isfinite(v[i])) return false;
        }
    }
    return true;
}

template <typename S>
bool all_finite_mat(const Mat<S>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if constexpr (is_complex_v<S>) {
                if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
            } else {
                if (!std::isfinite(m(i, j))) return false;
            }
        }
    return true;
}

template <typename S>
Vec<S> draw_standard(Rng& rng, Eigen::Index n) {
    Vec<S> v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.template standard<S>();
    return v;
}

} // namespace detail

/// Euler-Maruyama simulation of the coupled system from (x0, y0).
/// Both noise vectors are scaled by sqrt(dt); draws are deterministic given
/// the seed (per step: the d entries of eps1, then the r entries of eps2).
template <typename S>
Trajectory<S> simulate(const ModelSpec<S>& m, const std::type_identity_t<Vec<S>>& x0,
                       const std::type_identity_t<Vec<S>>& y0, long n_steps, double dt,
                       std::uint64_t seed) {
    if (dt <= 0.0) throw ParameterError("simulate: dt must be positive");
    if (n_steps < 1) throw ParameterError("simulate: n_steps must be >= 1");
    if (x0.size() != m.k || y0.size() != m.l)
        throw ModelError("simulate: initial state dimensions do not match the model");

    Rng rng(seed);
    const double sqrt_dt = std::sqrt(dt);

    Trajectory<S> traj;
    traj.dt = dt;
    traj.times.reserve(n_steps + 1);
    traj.x_path.reserve(n_steps + 1);
    std::vector<Vec<S>> ys;
    ys.reserve(n_steps + 1);

    Vec<S> x = x0;
    Vec<S> y = y0;
    traj.times.push_back(0.0);
    traj.x_path.push_back(x);
    ys.push_back(y);

    for (long j = 0; j < n_steps; ++j) {
        const double t = j * dt;
        const auto c = detail::eval_coefficients(m, t, x);
        const Vec<S> eps1 = detail::draw_standard<S>(rng, m.d);
        const Vec<S> eps2 = detail::draw_standard<S>(rng, m.r);

        Vec<S> x_next = x + (c.lambda_x * y + c.f_x) * dt +
                        c.sigma_x1 * (sqrt_dt * eps1) + c.sigma_x2 * (sqrt_dt * eps2);
        Vec<S> y_next = y + (c.lambda_y * y + c.f_y) * dt +
                        c.sigma_y1 * (sqrt_dt * eps1) + c.sigma_y2 * (sqrt_dt * eps2);
        if (m.project_x) m.project_x(x_next);

        if (!detail::all_finite(x_next) || !detail::all_finite(y_next))
            throw NumericalError("simulate: trajectory blew up", j + 1);

        x = std::move(x_next);
        y = std::move(y_next);
        traj.times.push_back((j + 1) * dt);
        traj.x_path.push_back(x);
        ys.push_back(y);
    }
    traj.y_path = std::move(ys);
    return traj;
}

} // namespace cgnsda
