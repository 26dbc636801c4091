#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "cgnsda/model.hpp"
#include "cgnsda/rng.hpp"

namespace cgnsda {

// ---------------------------------------------------------------------------
// Dyad interaction model
//   du = (-d_u u + gamma u v + F_u) dt + sigma_u dW_u
//   dv = (-d_v v - gamma u^2 + F_v) dt + sigma_vu u dW_u + sigma_v dW_v
// u observed, v unobserved. The shared W_u makes the noise cross-Gramian
// Syx = sigma_vu sigma_u u nonzero; at u = 0 the cross term vanishes and the
// system loses practical observability (Sxx = sigma_u^2 stays positive).
// ---------------------------------------------------------------------------

struct DyadParams {
    double d_u = 0.5;
    double d_v = 0.5;
    double gamma = 3.0;
    double F_u = 1.0;
    double F_v = 0.3;
    double sigma_u = 0.6;
    double sigma_vu = 0.8;
    double sigma_v = 1.0;
};

inline void validate(const DyadParams& p) {
    if (p.sigma_u <= 0 || p.sigma_vu <= 0 || p.sigma_v <= 0)
        throw ParameterError("dyad: noise amplitudes must be positive");
}

/// Value of v above which it acts as anti-damping on u.
inline double dyad_antidamping_threshold(const DyadParams& p) { return p.d_u / p.gamma; }

inline ModelSpec<double> dyad_model(const DyadParams& p) {
    validate(p);
    ModelSpec<double> m;
    m.k = m.l = m.d = m.r = 1;
    m.lambda_x = [g = p.gamma](double, const RealVec& x) {
        return (RealMat(1, 1) << g * x[0]).finished();
    };
    m.f_x = [du = p.d_u, Fu = p.F_u](double, const RealVec& x) {
        return (RealVec(1) << -du * x[0] + Fu).finished();
    };
    m.sigma_x1 = [s = p.sigma_u](double, const RealVec&) {
        return (RealMat(1, 1) << s).finished();
    };
    m.sigma_x2 = [](double, const RealVec&) { return RealMat::Zero(1, 1); };
    m.lambda_y = [dv = p.d_v](double, const RealVec&) {
        return (RealMat(1, 1) << -dv).finished();
    };
    m.f_y = [g = p.gamma, Fv = p.F_v](double, const RealVec& x) {
        return (RealVec(1) << -g * x[0] * x[0] + Fv).finished();
    };
    m.sigma_y1 = [s = p.sigma_vu](double, const RealVec& x) {
        return (RealMat(1, 1) << s * x[0]).finished();
    };
    m.sigma_y2 = [s = p.sigma_v](double, const RealVec&) {
        return (RealMat(1, 1) << s).finished();
    };
    return m;
}

// ---------------------------------------------------------------------------
// Two-dimensional linear Gaussian model
//   dx = (a11 x + a12 y) dt + s1 dW1
//   dy = (a21 x + a22 y) dt + s2 dW2
// ---------------------------------------------------------------------------

struct Linear2dParams {
    double a11 = -1.0;
    double a12 = 1.0;
    double a21 = 0.0;
    double a22 = -1.0;
    double s1 = 1.0;
    double s2 = 1.0;
};

inline void validate(const Linear2dParams& p) {
    if (p.a22 >= 0.0)
        throw ParameterError("linear2d: a22 must be negative for a statistical equilibrium");
    if (p.s1 <= 0 || p.s2 <= 0) throw ParameterError("linear2d: noise amplitudes must be positive");
}

inline ModelSpec<double> linear2d_model(const Linear2dParams& p) {
    validate(p);
    ModelSpec<double> m;
    m.k = m.l = m.d = m.r = 1;
    m.lambda_x = [a = p.a12](double, const RealVec&) { return (RealMat(1, 1) << a).finished(); };
    m.f_x = [a = p.a11](double, const RealVec& x) { return (RealVec(1) << a * x[0]).finished(); };
    m.sigma_x1 = [s = p.s1](double, const RealVec&) { return (RealMat(1, 1) << s).finished(); };
    m.sigma_x2 = [](double, const RealVec&) { return RealMat::Zero(1, 1); };
    m.lambda_y = [a = p.a22](double, const RealVec&) { return (RealMat(1, 1) << a).finished(); };
    m.f_y = [a = p.a21](double, const RealVec& x) { return (RealVec(1) << a * x[0]).finished(); };
    m.sigma_y1 = [](double, const RealVec&) { return RealMat::Zero(1, 1); };
    m.sigma_y2 = [s = p.s2](double, const RealVec&) { return (RealMat(1, 1) << s).finished(); };
    return m;
}

// ---------------------------------------------------------------------------
// Lagrangian data assimilation: L tracers advected by an incompressible
// random flow on the doubly periodic domain [-pi, pi)^2,
//   dx_l = v_l dt + sigma_x dW_{x_l}
//   dv_l = beta (u(t, x_l) - v_l) dt + sigma_v dW_{v_l}
//   du_hat_k = (-d_k u_hat_k + f_k(t)) dt + sigma_k dW_k
// with u(t, x) = sum_k u_hat_k e^{i k.x} r_k over the nonzero lattice
// [-K,K]^2 \ {0}. Conjugate modes carry conjugate amplitudes and equal
// (d_k, sigma_k), so the field is real; the state stores one (Re, Im) pair
// per half-lattice representative and the filter cannot break conjugacy.
// Observed: the 2L tracer coordinates. Unobserved: 2L tracer velocity
// components followed by the 2M mode components.
// ---------------------------------------------------------------------------

struct LdaParams {
    int K = 2;                 ///< wavenumber bound
    int L = 18;                ///< tracer count
    double beta = 1.0;         ///< velocity relaxation rate
    double f_amp = 0.15;       ///< mode forcing amplitude
    double f_freq = 5.0 * std::numbers::pi; ///< mode forcing angular frequency
    double sigma_x = 0.005 * std::numbers::pi;
    double sigma_v = 0.1;
    double damp_lo = 0.5, damp_hi = 1.5;
    double noise_lo = 0.15, noise_hi = 0.25;
    std::uint64_t mode_seed = 1;
};

inline void validate(const LdaParams& p) {
    if (p.K < 1) throw ParameterError("lda: wavenumber bound K must be >= 1");
    if (p.L < 1) throw ParameterError("lda: tracer count L must be >= 1");
}

/// One half-lattice representative: wavevector, incompressible unit vector,
/// damping and noise amplitude (shared with the conjugate site).
struct LdaMode {
    int k1 = 0, k2 = 0;
    Eigen::Vector2d r;  ///< (-k2, k1) / |k|
    double damping = 0.0;
    double noise = 0.0;
};

/// Representatives of the conjugate pairs on [-K,K]^2 \ {0}: k1 > 0, or
/// k1 == 0 and k2 > 0. Parameter draws are deterministic in mode_seed.
inline std::vector<LdaMode> lda_draw_modes(const LdaParams& p) {
    validate(p);
    Rng rng(p.mode_seed);
    std::vector<LdaMode> modes;
    auto add = [&](int k1, int k2) {
        LdaMode m;
        m.k1 = k1;
        m.k2 = k2;
        const double norm = std::sqrt(static_cast<double>(k1 * k1 + k2 * k2));
        m.r = Eigen::Vector2d(-k2 / norm, k1 / norm);
        m.damping = p.damp_lo + rng.uniform() * (p.damp_hi - p.damp_lo);
        m.noise = p.noise_lo + rng.uniform() * (p.noise_hi - p.noise_lo);
        modes.push_back(m);
    };
    for (int k2 = 1; k2 <= p.K; ++k2) add(0, k2);
    for (int k1 = 1; k1 <= p.K; ++k1)
        for (int k2 = -p.K; k2 <= p.K; ++k2) add(k1, k2);
    return modes;
}

/// Real velocity field at position pos from the half-lattice amplitudes
/// (a_m + i b_m alternating in `amps`): sum of 2(a cos(k.x) - b sin(k.x)) r_k
/// over the representatives, which equals the full-lattice sum under
/// conjugate extension.
inline Eigen::Vector2d lda_velocity_field(const std::vector<LdaMode>& modes,
                                          const Eigen::Ref<const RealVec>& amps,
                                          const Eigen::Vector2d& pos) {
    Eigen::Vector2d u = Eigen::Vector2d::Zero();
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const double phase = modes[m].k1 * pos[0] + modes[m].k2 * pos[1];
        const double a = amps[2 * m];
        const double b = amps[2 * m + 1];
        u += 2.0 * (a * std::cos(phase) - b * std::sin(phase)) * modes[m].r;
    }
    return u;
}

inline double wrap_to_pi(double v) {
    const double two_pi = 2.0 * std::numbers::pi;
    double w = v - two_pi * std::floor((v + std::numbers::pi) / two_pi);
    if (w >= std::numbers::pi) w -= two_pi; // guards the boundary round-off
    return w;
}

inline ModelSpec<double> lda_model(const LdaParams& p, const std::vector<LdaMode>& modes) {
    validate(p);
    const int L = p.L;
    const long M = static_cast<long>(modes.size());
    ModelSpec<double> m;
    m.k = 2 * L;
    m.l = 2 * L + 2 * M;
    m.d = 2 * L;
    m.r = 2 * L + 2 * M;

    const long nv = 2 * L; // velocity block size inside y

    // dx_l = v_l dt + ...: the observation matrix picks the velocity block.
    RealMat lx = RealMat::Zero(m.k, m.l);
    lx.block(0, 0, nv, nv).setIdentity();
    m.lambda_x = [lx](double, const RealVec&) { return lx; };
    m.f_x = [k = m.k](double, const RealVec&) { return RealVec::Zero(k); };
    RealMat sx1 = RealMat::Identity(m.k, m.d) * p.sigma_x;
    m.sigma_x1 = [sx1](double, const RealVec&) { return sx1; };
    m.sigma_x2 = [k = m.k, r = m.r](double, const RealVec&) { return RealMat::Zero(k, r); };

    m.lambda_y = [modes, L, nv, beta = p.beta, l = m.l](double, const RealVec& x) {
        RealMat ly = RealMat::Zero(l, l);
        for (int tr = 0; tr < L; ++tr) {
            const long row = 2 * tr;
            ly(row, row) = -beta;
            ly(row + 1, row + 1) = -beta;
            const double px = x[2 * tr];
            const double py = x[2 * tr + 1];
            for (long mm = 0; mm < static_cast<long>(modes.size()); ++mm) {
                const double phase = modes[mm].k1 * px + modes[mm].k2 * py;
                const double c = 2.0 * beta * std::cos(phase);
                const double s = -2.0 * beta * std::sin(phase);
                const long col = nv + 2 * mm;
                ly(row, col) = c * modes[mm].r[0];
                ly(row + 1, col) = c * modes[mm].r[1];
                ly(row, col + 1) = s * modes[mm].r[0];
                ly(row + 1, col + 1) = s * modes[mm].r[1];
            }
        }
        for (long mm = 0; mm < static_cast<long>(modes.size()); ++mm) {
            const long row = nv + 2 * mm;
            ly(row, row) = -modes[mm].damping;
            ly(row + 1, row + 1) = -modes[mm].damping;
        }
        return ly;
    };
    m.f_y = [modes, nv, l = m.l, amp = p.f_amp, freq = p.f_freq](double t, const RealVec&) {
        RealVec fy = RealVec::Zero(l);
        const double re = amp * std::cos(freq * t);
        const double im = amp * std::sin(freq * t);
        for (long mm = 0; mm < static_cast<long>(modes.size()); ++mm) {
            fy[nv + 2 * mm] = re;
            fy[nv + 2 * mm + 1] = im;
        }
        return fy;
    };
    m.sigma_y1 = [l = m.l, d = m.d](double, const RealVec&) { return RealMat::Zero(l, d); };
    RealMat sy2 = RealMat::Zero(m.l, m.r);
    sy2.block(0, 0, nv, nv) = RealMat::Identity(nv, nv) * p.sigma_v;
    // Complex standard noise splits into Re/Im parts of variance 1/2 each.
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (long mm = 0; mm < M; ++mm) {
        sy2(nv + 2 * mm, nv + 2 * mm) = modes[mm].noise * inv_sqrt2;
        sy2(nv + 2 * mm + 1, nv + 2 * mm + 1) = modes[mm].noise * inv_sqrt2;
    }
    m.sigma_y2 = [sy2](double, const RealVec&) { return sy2; };

    m.project_x = [](RealVec& x) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = wrap_to_pi(x[i]);
    };
    m.obs_increment = [](const RealVec& x_prev, const RealVec& x_next) {
        const double two_pi = 2.0 * std::numbers::pi;
        RealVec d = x_next - x_prev;
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] -= two_pi * std::round(d[i] / two_pi);
        return d;
    };
    return m;
}

inline ModelSpec<double> lda_model(const LdaParams& p) {
    return lda_model(p, lda_draw_modes(p));
}

/// Stationary-prior initialization for the unobserved state: velocity
/// components at sigma_v^2 / (2 beta), mode components at sigma_k^2 / (4 d_k)
/// (each real part of a complex OU mode). Identity-scale inits overshoot the
/// explicit-Euler Riccati step here because the position observations are
/// nearly noise-free.
inline std::pair<RealVec, RealMat> lda_equilibrium_init(const LdaParams& p,
                                                        const std::vector<LdaMode>& modes) {
    const long nv = 2 * p.L;
    const long l = nv + 2 * static_cast<long>(modes.size());
    RealVec mean = RealVec::Zero(l);
    RealMat cov = RealMat::Zero(l, l);
    for (long i = 0; i < nv; ++i) cov(i, i) = p.sigma_v * p.sigma_v / (2.0 * p.beta);
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const double var = modes[m].noise * modes[m].noise / (4.0 * modes[m].damping);
        cov(nv + 2 * m, nv + 2 * m) = var;
        cov(nv + 2 * m + 1, nv + 2 * m + 1) = var;
    }
    return {mean, cov};
}

// ---------------------------------------------------------------------------
// Dyad model for parameter estimation: same structure as the dyad model but
// without noise cross-interaction (the v equation has its own Wiener
// process only), so the reduced smoother coefficients apply. The drift is
// linear in theta = (d_u, gamma1, F_u, d_v, gamma2, F_v).
// ---------------------------------------------------------------------------

struct EmDyadParams {
    double d_u = 1.0;
    double gamma1 = 3.0;
    double F_u = 1.0;
    double d_v = 1.0;
    double gamma2 = 3.0;
    double F_v = 0.8;
    double sigma_u = 0.5;
    double sigma_v = 1.0;
};

inline void validate(const EmDyadParams& p) {
    if (p.sigma_u <= 0 || p.sigma_v <= 0)
        throw ParameterError("em-dyad: noise amplitudes must be positive");
}

inline ModelSpec<double> em_dyad_model(const EmDyadParams& p) {
    validate(p);
    ModelSpec<double> m;
    m.k = m.l = m.d = m.r = 1;
    m.lambda_x = [g = p.gamma1](double, const RealVec& x) {
        return (RealMat(1, 1) << g * x[0]).finished();
    };
    m.f_x = [du = p.d_u, Fu = p.F_u](double, const RealVec& x) {
        return (RealVec(1) << -du * x[0] + Fu).finished();
    };
    m.sigma_x1 = [s = p.sigma_u](double, const RealVec&) {
        return (RealMat(1, 1) << s).finished();
    };
    m.sigma_x2 = [](double, const RealVec&) { return RealMat::Zero(1, 1); };
    m.lambda_y = [dv = p.d_v](double, const RealVec&) {
        return (RealMat(1, 1) << -dv).finished();
    };
    m.f_y = [g = p.gamma2, Fv = p.F_v](double, const RealVec& x) {
        return (RealVec(1) << -g * x[0] * x[0] + Fv).finished();
    };
    m.sigma_y1 = [](double, const RealVec&) { return RealMat::Zero(1, 1); };
    m.sigma_y2 = [s = p.sigma_v](double, const RealVec&) {
        return (RealMat(1, 1) << s).finished();
    };
    return m;
}

} // namespace cgnsda
