#pragma once

#include <complex>
#include <functional>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

#include "cgnsda/errors.hpp"

namespace cgnsda {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using RealMat = Mat<double>;
using RealVec = Vec<double>;
using Complex = std::complex<double>;
using ComplexMat = Mat<Complex>;
using ComplexVec = Vec<Complex>;

template <typename S>
constexpr bool is_complex_v = std::is_same_v<S, Complex>;

/// A conditionally Gaussian nonlinear system:
///
///   dx = (Lambda_x(t,x) y + f_x(t,x)) dt + Sigma_x1(t,x) dW1 + Sigma_x2(t,x) dW2
///   dy = (Lambda_y(t,x) y + f_y(t,x)) dt + Sigma_y1(t,x) dW1 + Sigma_y2(t,x) dW2
///
/// x is the k-dimensional observed process, y the l-dimensional unobserved
/// one; W1 and W2 are independent d- and r-dimensional Wiener processes.
/// The unobserved state enters linearly given the observed path; the
/// observed path may enter every coefficient arbitrarily. All evaluators
/// must be pure (same (t,x) -> identical output) and reentrant.
template <typename S>
struct ModelSpec {
    using Coeff = std::function<Mat<S>(double, const Vec<S>&)>;
    using Drift = std::function<Vec<S>(double, const Vec<S>&)>;

    Eigen::Index k = 0; ///< observed dimension
    Eigen::Index l = 0; ///< unobserved dimension
    Eigen::Index d = 0; ///< first Wiener process dimension
    Eigen::Index r = 0; ///< second Wiener process dimension

    Coeff lambda_x; ///< k x l
    Drift f_x;      ///< k
    Coeff sigma_x1; ///< k x d
    Coeff sigma_x2; ///< k x r
    Coeff lambda_y; ///< l x l
    Drift f_y;      ///< l
    Coeff sigma_y1; ///< l x d
    Coeff sigma_y2; ///< l x r

    /// Optional state projection applied to the observed component after
    /// each simulated step (periodic wrap-around for tracer models).
    std::function<void(Vec<S>&)> project_x;

    /// Optional observed-increment map used by the filter/smoother in place
    /// of the plain difference x_next - x_prev (minimal-image increments on
    /// periodic domains). Null means plain difference.
    std::function<Vec<S>(const Vec<S>&, const Vec<S>&)> obs_increment;

    Vec<S> observed_increment(const Vec<S>& x_prev, const Vec<S>& x_next) const {
        if (obs_increment) return obs_increment(x_prev, x_next);
        return x_next - x_prev;
    }
};

namespace detail {

template <typename S>
Mat<S> eval_checked(const typename ModelSpec<S>::Coeff& f, double t, const Vec<S>& x,
                    Eigen::Index rows, Eigen::Index cols, const char* name) {
    Mat<S> m = f(t, x);
    if (m.rows() != rows || m.cols() != cols) {
        throw ModelError(std::string(name) + " evaluator returned " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
}

template <typename S>
Vec<S> eval_checked(const typename ModelSpec<S>::Drift& f, double t, const Vec<S>& x,
                    Eigen::Index rows, const char* name) {
    Vec<S> v = f(t, x);
    if (v.size() != rows) {
        throw ModelError(std::string(name) + " evaluator returned length " +
                         std::to_string(v.size()) + ", expected " + std::to_string(rows));
    }
    return v;
}

/// All eight coefficients at one (t, x), shape-checked.
template <typename S>
struct Coefficients {
    Mat<S> lambda_x, sigma_x1, sigma_x2, lambda_y, sigma_y1, sigma_y2;
    Vec<S> f_x, f_y;
};

template <typename S>
Coefficients<S> eval_coefficients(const ModelSpec<S>& m, double t, const Vec<S>& x) {
    Coefficients<S> c;
    c.lambda_x = eval_checked<S>(m.lambda_x, t, x, m.k, m.l, "Lambda_x");
    c.f_x = eval_checked<S>(m.f_x, t, x, m.k, "f_x");
    c.sigma_x1 = eval_checked<S>(m.sigma_x1, t, x, m.k, m.d, "Sigma_x1");
    c.sigma_x2 = eval_checked<S>(m.sigma_x2, t, x, m.k, m.r, "Sigma_x2");
    c.lambda_y = eval_checked<S>(m.lambda_y, t, x, m.l, m.l, "Lambda_y");
    c.f_y = eval_checked<S>(m.f_y, t, x, m.l, "f_y");
    c.sigma_y1 = eval_checked<S>(m.sigma_y1, t, x, m.l, m.d, "Sigma_y1");
    c.sigma_y2 = eval_checked<S>(m.sigma_y2, t, x, m.l, m.r, "Sigma_y2");
    return c;
}

} // namespace detail

/// Noise interaction Gramians formed from the diffusion coefficients.
/// Sxx and Syy are Hermitian nonnegative-definite; Sxy = Syx^H.
template <typename S>
struct NoiseGramians {
    Mat<S> Sxx; ///< k x k
    Mat<S> Syy; ///< l x l
    Mat<S> Sxy; ///< k x l
    Mat<S> Syx; ///< l x k
};

template <typename S>
NoiseGramians<S> gramians_from(const detail::Coefficients<S>& c) {
    NoiseGramians<S> g;
    g.Sxx = c.sigma_x1 * c.sigma_x1.adjoint() + c.sigma_x2 * c.sigma_x2.adjoint();
    g.Syy = c.sigma_y1 * c.sigma_y1.adjoint() + c.sigma_y2 * c.sigma_y2.adjoint();
    g.Sxy = c.sigma_x1 * c.sigma_y1.adjoint() + c.sigma_x2 * c.sigma_y2.adjoint();
    g.Syx = g.Sxy.adjoint();
    return g;
}

/// Noise Gramians of the model at (t, x).
template <typename S>
NoiseGramians<S> gramians(const ModelSpec<S>& m, double t,
                          const std::type_identity_t<Vec<S>>& x) {
    return gramians_from(detail::eval_coefficients(m, t, x));
}

/// Convenience builder for models whose coefficients do not depend on (t, x).
template <typename S>
ModelSpec<S> constant_model(Eigen::Index k, Eigen::Index l, Eigen::Index d, Eigen::Index r,
                            Mat<S> lambda_x, Vec<S> f_x, Mat<S> sigma_x1, Mat<S> sigma_x2,
                            Mat<S> lambda_y, Vec<S> f_y, Mat<S> sigma_y1, Mat<S> sigma_y2) {
    ModelSpec<S> m;
    m.k = k;
    m.l = l;
    m.d = d;
    m.r = r;
    m.lambda_x = [a = std::move(lambda_x)](double, const Vec<S>&) { return a; };
    m.f_x = [a = std::move(f_x)](double, const Vec<S>&) { return a; };
    m.sigma_x1 = [a = std::move(sigma_x1)](double, const Vec<S>&) { return a; };
    m.sigma_x2 = [a = std::move(sigma_x2)](double, const Vec<S>&) { return a; };
    m.lambda_y = [a = std::move(lambda_y)](double, const Vec<S>&) { return a; };
    m.f_y = [a = std::move(f_y)](double, const Vec<S>&) { return a; };
    m.sigma_y1 = [a = std::move(sigma_y1)](double, const Vec<S>&) { return a; };
    m.sigma_y2 = [a = std::move(sigma_y2)](double, const Vec<S>&) { return a; };
    return m;
}

} // namespace cgnsda
