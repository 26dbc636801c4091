#include <gtest/gtest.h>

#include "cgnsda/cgnsda.hpp"

using namespace cgnsda;

namespace {

SmootherWindow<double> dyad_window(const LagPolicy& policy, const Trajectory<double>& traj,
                                   SmootherWindow<double>::Options opts = {}) {
    DyadParams p;
    const auto m = dyad_model(p);
    return SmootherWindow<double>(m, default_init(m), traj.x_path.front(), policy, traj.dt,
                                  opts);
}

Trajectory<double> dyad_traj(long steps, std::uint64_t seed, double dt = 0.005) {
    DyadParams p;
    const auto m = dyad_model(p);
    return simulate(m, RealVec::Ones(1), RealVec::Zero(1), steps, dt, seed);
}

// Final per-step smoother values: flushed steps plus the remaining live ones.
std::vector<FlushedStep<double>> drain(SmootherWindow<double>& w) {
    w.finish();
    return w.collected();
}

} // namespace

TEST(SpectralRadius, KnownMatrices) {
    EXPECT_DOUBLE_EQ(spectral_radius(RealMat(RealMat::Identity(3, 3))), 1.0);
    EXPECT_DOUBLE_EQ(spectral_radius(RealMat(RealMat::Zero(3, 3))), 0.0);
    RealMat nilpotent(2, 2);
    nilpotent << 0, 1, 0, 0;
    EXPECT_NEAR(spectral_radius(nilpotent), 0.0, 1e-8);
    RealMat diag = RealMat::Zero(2, 2);
    diag(0, 0) = 0.5;
    diag(1, 1) = -0.25;
    EXPECT_NEAR(spectral_radius(diag), 0.5, 1e-12);
    EXPECT_THROW(spectral_radius(RealMat(RealMat::Zero(2, 3))), ParameterError);

    ComplexMat c(2, 2);
    c << Complex(0, 1), Complex(0, 0), Complex(0, 0), Complex(0.3, 0.0);
    EXPECT_NEAR(spectral_radius(c), 1.0, 1e-12);
}

TEST(ChooseLag, RightEndpointBelowDelta) {
    const auto policy = LagPolicy::adaptive(10, 0.5, 3, LagPolicy::Criterion::entropy);
    EXPECT_EQ(choose_lag({0.9, 0.8, 0.1}, policy), 0);
}

TEST(ChooseLag, FallbackWhenNothingBelowDelta) {
    const auto policy = LagPolicy::adaptive(10, 1e-3, 3, LagPolicy::Criterion::entropy);
    EXPECT_EQ(choose_lag({0.9, 0.8, 0.7, 0.6}, policy), 4); // min(len, b) = len
    const auto tight = LagPolicy::adaptive(2, 1e-3, 3, LagPolicy::Criterion::entropy);
    EXPECT_EQ(choose_lag({0.9, 0.8, 0.7, 0.6}, tight), 2); // capped by b
}

TEST(ChooseLag, EntropyVariantHandExample) {
    const auto policy = LagPolicy::adaptive(10, 1e-6, 3, LagPolicy::Criterion::entropy);
    EXPECT_EQ(choose_lag({1e-8, 1e-8, 1e-3, 1e-2}, policy), 2);
}

TEST(ChooseLag, LsdfVariantConstantSeries) {
    // LSDF of a constant series is identically zero, below any delta: the
    // maximizer is the right endpoint.
    const auto policy = LagPolicy::adaptive(10, 1e-6, 3, LagPolicy::Criterion::lsdf);
    EXPECT_EQ(choose_lag({5.0, 5.0, 5.0, 5.0}, policy), 0);
}

TEST(ChooseLag, BoundsAndMonotonicityInDelta) {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const long b = 1 + static_cast<long>(rng.uniform() * 8);
        std::vector<double> series(1 + static_cast<std::size_t>(rng.uniform() * (b + 1)));
        for (auto& v : series) v = rng.uniform() * 0.2;
        const double d_small = 1e-3, d_large = 0.1;
        const auto p_small =
            LagPolicy::adaptive(b, d_small, 3, LagPolicy::Criterion::entropy);
        const auto p_large =
            LagPolicy::adaptive(b, d_large, 3, LagPolicy::Criterion::entropy);
        const long l_small = choose_lag(series, p_small);
        const long l_large = choose_lag(series, p_large);
        EXPECT_GE(l_small, l_large); // smaller delta never shrinks the lag
        for (long l : {l_small, l_large}) {
            EXPECT_GE(l, 0);
            EXPECT_LE(l, b);
        }
    }
}

TEST(Window, FreshWindowHasOneEntry) {
    const auto traj = dyad_traj(10, 1);
    auto w = dyad_window(LagPolicy::fixed(5), traj);
    EXPECT_EQ(w.storage_report().current_entries, 1u);
    EXPECT_EQ(w.latest(), 0);
}

TEST(Window, FirstIngestKeepsInitialEntryAtFilterValue) {
    const auto traj = dyad_traj(3, 2);
    auto w = dyad_window(LagPolicy::adaptive(4, 1e-6), traj);
    const double mu0 = w.entries().front().mu_f[0];
    w.ingest(traj.x_path[1]); // n = 1: no eligible criterion steps, lag 0
    EXPECT_EQ(w.entries().front().mu_s[0], mu0);
    EXPECT_TRUE(w.entries().front().D.isApprox(w.entries().front().E));
}

TEST(Window, FixedZeroLagReproducesFilterBitwise) {
    const auto traj = dyad_traj(500, 5);
    DyadParams p;
    const auto m = dyad_model(p);
    const auto fwd = run_filter(m, traj, default_init(m));

    auto w = dyad_window(LagPolicy::fixed(0), traj);
    for (std::size_t n = 1; n < traj.size(); ++n) {
        EXPECT_EQ(w.ingest(traj.x_path[n]), 0);
    }
    const auto out = drain(w);
    ASSERT_EQ(out.size(), traj.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        EXPECT_EQ(out[j].mu_s[0], fwd.states[j].mean[0]);   // bitwise
        EXPECT_EQ(out[j].R_s(0, 0), fwd.states[j].cov(0, 0));
    }
}

TEST(Window, FullLagReproducesOfflineSmoother) {
    const long n = 300;
    const auto traj = dyad_traj(n, 6);
    DyadParams p;
    const auto m = dyad_model(p);
    const auto offline = run_smoother(m, traj, default_init(m));

    auto w = dyad_window(LagPolicy::fixed(n), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const auto out = drain(w);
    ASSERT_EQ(out.size(), offline.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double mscale = std::max(1.0, offline[j].mean.norm());
        EXPECT_LT((out[j].mu_s - offline[j].mean).norm() / mscale, 1e-8) << "step " << j;
        const double cscale = std::max(1.0, offline[j].cov.norm());
        EXPECT_LT((out[j].R_s - offline[j].cov).norm() / cscale, 1e-8) << "step " << j;
    }
}

TEST(Window, AdaptiveAlwaysUpdateMatchesOfflineSmootherPastStepZero) {
    const long n = 300;
    const auto traj = dyad_traj(n, 7);
    DyadParams p;
    const auto m = dyad_model(p);
    const auto offline = run_smoother(m, traj, default_init(m));

    // b >= n and a tolerance so small nothing ever falls below it: every
    // ingest updates the whole eligible range j >= 1.
    auto w = dyad_window(LagPolicy::adaptive(n, 1e-300, 3, LagPolicy::Criterion::entropy),
                         traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const auto out = drain(w);
    ASSERT_EQ(out.size(), offline.size());
    for (std::size_t j = 1; j < out.size(); ++j) {
        const double mscale = std::max(1.0, offline[j].mean.norm());
        EXPECT_LT((out[j].mu_s - offline[j].mean).norm() / mscale, 1e-8) << "step " << j;
        const double cscale = std::max(1.0, offline[j].cov.norm());
        EXPECT_LT((out[j].R_s - offline[j].cov).norm() / cscale, 1e-8) << "step " << j;
    }
    // Step 0 is never updated by the adaptive policy (the criterion's index
    // floor is 1): it keeps the filter initialization.
    EXPECT_EQ(out[0].mu_s[0], 0.0);
}

TEST(Window, UpdateTensorMatchesDirectOrderedProduct) {
    // 3-D unobserved state so the E factors genuinely do not commute.
    Rng rng(8);
    auto draw = [&rng](Eigen::Index rows, Eigen::Index cols) {
        RealMat m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = 0.4 * rng.standard_normal();
        return m;
    };
    RealMat ly = draw(3, 3);
    ly.diagonal().array() -= 1.5;
    auto m = constant_model<double>(2, 3, 2, 3, draw(2, 3), RealVec::Zero(2),
                                    RealMat::Identity(2, 2), RealMat::Zero(2, 3), ly,
                                    RealVec::Zero(3), RealMat::Zero(3, 2),
                                    RealMat::Identity(3, 3));
    const auto traj = simulate(m, RealVec::Zero(2), RealVec::Zero(3), 6, 0.01, 9);
    SmootherWindow<double> w(m, default_init(m), traj.x_path.front(), LagPolicy::fixed(6),
                             traj.dt);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);

    // Direct ordered product from the stored E matrices.
    const auto& entries = w.entries();
    for (const auto& e : entries) {
        RealMat direct = RealMat::Identity(3, 3);
        for (const auto& f : entries) {
            if (f.j >= e.j && f.has_E) direct = RealMat(direct * f.E);
        }
        EXPECT_LT((w.update_tensor(e.j) - direct).norm(), 1e-12);
    }
}

TEST(Window, CommutingScalarCasePowersOfC) {
    // At the Riccati equilibrium the scalar E is constant, so the stored
    // tensor is c^(n-j).
    Linear2dParams p;
    const auto m = linear2d_model(p);
    const double req = equilibrium_variance_2d(p.a12, p.a22, p.s1, p.s2);
    const double dt = 0.005;
    const auto traj = simulate(m, RealVec::Zero(1), RealVec::Zero(1), 12, dt, 10);
    GaussianState<double> init{RealVec::Zero(1), (RealMat(1, 1) << req).finished(), 0.0};
    SmootherWindow<double> w(m, init, traj.x_path.front(), LagPolicy::fixed(12), dt);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const double gy = p.a22 + p.s2 * p.s2 / req;
    const double c = 1.0 - gy * dt;
    const long n = w.latest();
    for (const auto& e : w.entries()) {
        EXPECT_NEAR(w.update_tensor(e.j)(0, 0), std::pow(c, n - e.j), 1e-10);
    }
}

TEST(Window, NewestTensorEqualsItsE) {
    const auto traj = dyad_traj(5, 11);
    auto w = dyad_window(LagPolicy::fixed(5), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const long n = w.latest();
    // Entry n-1 was multiplied exactly once, by E^{n-1}.
    const auto& prev = w.entries()[w.entries().size() - 2];
    EXPECT_TRUE(w.update_tensor(n - 1).isApprox(prev.E, 1e-14));
}

TEST(Window, EvictedStepIsOutOfWindowError) {
    const auto traj = dyad_traj(50, 12);
    auto w = dyad_window(LagPolicy::fixed(3), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    EXPECT_THROW(w.update_tensor(0), ParameterError);
    EXPECT_NO_THROW(w.update_tensor(w.latest()));
}

TEST(Window, StorageCountsFixedLag) {
    const long L = 7;
    const auto traj = dyad_traj(100, 13);
    auto w = dyad_window(LagPolicy::fixed(L), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const auto rep = w.storage_report();
    EXPECT_EQ(rep.peak_entries, static_cast<std::size_t>(L + 1));
    EXPECT_EQ(rep.current_entries, static_cast<std::size_t>(L + 1));
    EXPECT_EQ(rep.peak_bytes, rep.peak_entries * (rep.peak_bytes / rep.peak_entries));
}

TEST(Window, StorageCapacityAdaptive) {
    const long b = 20;
    const auto traj = dyad_traj(200, 14);
    auto w = dyad_window(LagPolicy::adaptive(b, 1e-6), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) {
        const long lag = w.ingest(traj.x_path[i]);
        EXPECT_GE(lag, 0);
        EXPECT_LE(lag, b);
        EXPECT_LE(w.storage_report().current_entries, static_cast<std::size_t>(b + 1));
    }
    EXPECT_LE(w.storage_report().peak_entries, static_cast<std::size_t>(b + 1));
}

TEST(Window, FlushedStepsAreContiguousFromZero) {
    const auto traj = dyad_traj(80, 15);
    auto w = dyad_window(LagPolicy::adaptive(10, 1e-4), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const auto out = drain(w);
    ASSERT_EQ(out.size(), traj.size());
    for (std::size_t j = 0; j < out.size(); ++j) EXPECT_EQ(out[j].j, static_cast<long>(j));
}

TEST(Window, SpectralRadiusTrackingOnDyad) {
    const auto traj = dyad_traj(1000, 16);
    SmootherWindow<double>::Options opts;
    opts.track_spectral_radius = true;
    opts.radius_spinup_steps = 200; // skip the cold-start covariance transient
    auto w = dyad_window(LagPolicy::adaptive(50, 1e-6), traj, opts);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    // The influence of an observation decays essentially exponentially into
    // the past; brief reactivation bursts can push short products slightly
    // above 1, but never far.
    EXPECT_GT(w.max_update_radius(), 0.5);
    EXPECT_LT(w.max_update_radius(), 1.2);
}

TEST(Window, FaultInjectionBreaksFullLagEquivalence) {
    const long n = 100;
    const auto traj = dyad_traj(n, 17);
    DyadParams p;
    const auto m = dyad_model(p);
    const auto offline = run_smoother(m, traj, default_init(m));

    SmootherWindow<double>::Options opts;
    opts.d_fault_scale = 0.98;
    auto w = dyad_window(LagPolicy::fixed(n), traj, opts);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    const auto out = drain(w);
    double worst = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j)
        worst = std::max(worst, (out[j].mu_s - offline[j].mean).norm());
    EXPECT_GT(worst, 1e-6);
}

TEST(Window, MinEigenvalueTrackedAndPsdHolds) {
    const auto traj = dyad_traj(2000, 18);
    auto w = dyad_window(LagPolicy::adaptive(100, 1e-6), traj);
    for (std::size_t i = 1; i < traj.size(); ++i) w.ingest(traj.x_path[i]);
    EXPECT_GE(w.min_covariance_eigenvalue(), -1e-10);
}
