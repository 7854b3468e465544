#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace omdpd;

TEST(Regret, OptimalPlayIsZero) {
    const std::vector<double> values(20, 1.25);
    for (double r : compute_regret(1.25, values)) EXPECT_EQ(r, 0.0);
}

TEST(Regret, Arithmetic) {
    const std::vector<double> values(10, 0.3);
    EXPECT_NEAR(compute_regret(0.5, values).back(), 2.0, 1e-12);
}

TEST(Regret, MatchesIndependentSummation) {
    const Dims d{4, 2, 4};
    const auto m = oracle::random_cmdp(d, 81);
    std::vector<double> values;
    for (std::uint64_t s = 0; s < 200; ++s)
        values.push_back(evaluate_value(oracle::random_policy(d, s), m.mean_reward, m.transitions, m.init));
    const auto series = compute_regret(3.0, values);
    long double acc = 0.0L;
    for (std::size_t k = 0; k < values.size(); ++k) {
        acc += 3.0L - (long double)values[k];
        EXPECT_NEAR(series[k], double(acc), 1e-10);
    }
}

TEST(Violation, AlternatingSignsStrongVersusWeak) {
    for (std::size_t n : {2u, 10u, 3000u}) {
        std::vector<double> v(n);
        for (std::size_t k = 0; k < n; ++k) v[k] = k % 2 == 0 ? 1.0 : -1.0;
        EXPECT_EQ(compute_violation(v).back(), double(n / 2));
        EXPECT_EQ(compute_weak_violation(v).back(), 0.0);
    }
}

TEST(Violation, AllSafeIsZero) {
    const std::vector<double> v{-0.1, -1.0, -0.5, -1e-9};
    for (double x : compute_violation(v)) EXPECT_EQ(x, 0.0);
}

TEST(Violation, MatchesIndependentPositivePartSum) {
    std::mt19937_64 g(82);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(1000);
    for (double& x : v) x = u(g);
    const auto series = compute_violation(v);
    long double acc = 0.0L;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (v[k] > 0.0) acc += v[k];
        EXPECT_NEAR(series[k], double(acc), 1e-10);
        if (k > 0) {
            EXPECT_GE(series[k], series[k - 1]);
        }
    }
}

TEST(Fit, RecoversExactPowerLaw) {
    std::vector<double> y(3000);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = 2.5 * std::pow(double(k + 1), 0.5);
    const auto f = fit_power_law(y, 1500, 3000);
    EXPECT_NEAR(f.exponent, 0.5, 1e-10);
    EXPECT_NEAR(f.scale, 2.5, 1e-9);
    EXPECT_NEAR(fit_sqrt_scale(y, 2251, 3000), 2.5, 1e-12);
}

TEST(Fit, FlagsNonPositiveWindow) {
    std::vector<double> y(100, 0.0);
    EXPECT_TRUE(fit_power_law(y, 50, 100).nonpositive);
    EXPECT_THROW(fit_power_law(y, 0, 100), ValidationError);
    EXPECT_THROW(fit_power_law(y, 50, 101), ValidationError);
}

TEST(Fit, MeanSeries) {
    const auto m = mean_series({{1.0, 2.0}, {3.0, 6.0}});
    EXPECT_EQ(m, (std::vector<double>{2.0, 4.0}));
    EXPECT_THROW(mean_series({{1.0}, {1.0, 2.0}}), StructuralError);
}
