#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace cgnsda {

/// Seedable Gaussian source: Mersenne-Twister-64 driving an explicit
/// Box-Muller transform. The transform is spelled out (instead of
/// std::normal_distribution) so that a given seed produces the same stream
/// on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in (0, 1]; never returns 0 so log() below is safe.
    double uniform() {
        const std::uint64_t bits = engine_() >> 11; // 53 random bits
        return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal N(0, 1).
    double standard_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Complex standard normal: Re + i*Im with Re, Im ~ N(0, 1/2)
    /// independent, so the total variance is 1.
    std::complex<double> standard_complex_normal() {
        constexpr double half_sd = 0.70710678118654752440; // sqrt(1/2)
        const double re = half_sd * standard_normal();
        const double im = half_sd * standard_normal();
        return {re, im};
    }

    /// Scalar-generic draw used by the templated simulator.
    template <typename S>
    S standard() {
        if constexpr (std::is_same_v<S, std::complex<double>>) {
            return standard_complex_normal();
        } else {
            return standard_normal();
        }
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace cgnsda
