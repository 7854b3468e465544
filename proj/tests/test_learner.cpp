#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace omdpd;

namespace {

struct Instance {
    Dims d{3, 2, 3};
    TabularCMDP m = oracle::random_cmdp(d, 71);
    ExtendedOccupancy q = policy_to_occupancy(oracle::random_policy(d, 72), m.transitions, m.init);
    ExtendedOccupancy anchor = policy_to_occupancy(oracle::random_policy(d, 73), m.transitions, m.init);
};

DualState dual_at(double lambda, double beta) {
    DualState s = DualState::initial(beta);
    s.lambda = lambda;
    s.log_phi_prime = std::log(beta) + beta * lambda;
    return s;
}

} // namespace

TEST(Surrogate, AnchoredInactiveHinge) {
    Instance in;
    const std::vector<double> cost(in.d.sa_size(), -1.0);
    const double alpha = 0.3;
    EXPECT_NEAR(surrogate_value(in.q, in.m.mean_reward, cost, DualState::initial(0.5), alpha, in.q),
                -alpha * dot(in.m.mean_reward, in.q.marginal()), 1e-14);
}

TEST(Surrogate, PhiPrimeAtZeroIsBeta) {
    Instance in;
    const std::vector<double> zero(in.d.sa_size(), 0.0);
    // cost scaled so that d^T q = 1 (layer masses sum to H)
    const std::vector<double> cost(in.d.sa_size(), 1.0 / in.d.horizon);
    const double alpha = 0.2;
    const double expect = alpha * 0.1 * 1.0 - 0.5 * squared_distance(in.q.q, in.anchor.q);
    EXPECT_NEAR(surrogate_value(in.q, zero, cost, DualState::initial(0.1), alpha, in.anchor), expect, 1e-14);
}

TEST(Surrogate, MatchesScalarReimplementation) {
    Instance in;
    std::mt19937_64 g(74);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> r(in.d.sa_size()), c(in.d.sa_size());
        for (double& x : r) x = u(g);
        for (double& x : c) x = u(g);
        const double lambda = 2.0 + 2.0 * u(g), beta = 0.5 + 0.4 * u(g), alpha = 0.5 + 0.4 * u(g);
        const double lib = surrogate_value(in.q, r, c, dual_at(lambda, beta), alpha, in.anchor);
        const double ref = oracle::scalar_surrogate(in.q.q, r, c, lambda, beta, alpha, in.anchor.q, in.d.states);
        EXPECT_NEAR(lib, ref, 1e-12);
    }
}

TEST(Gradient, ZeroCostLeavesRewardTerm) {
    Instance in;
    const std::vector<double> zero(in.d.sa_size(), 0.0);
    const auto g = surrogate_gradient(in.q, in.m.mean_reward, zero, dual_at(400.0, 1.0), 0.25, in.q);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_DOUBLE_EQ(g[j], -0.25 * in.m.mean_reward[j / 3]);
}

TEST(Gradient, CancelsWhenPhiPrimeIsOne) {
    Instance in;
    const auto g = surrogate_gradient(in.q, in.m.mean_reward, in.m.mean_reward, DualState::initial(1.0), 0.4, in.q);
    for (double x : g) EXPECT_EQ(x, 0.0);
}

TEST(Gradient, HingeAwareDropsInactiveCost) {
    Instance in;
    const std::vector<double> cost(in.d.sa_size(), -0.5);
    const auto g = surrogate_gradient(in.q, in.m.mean_reward, cost, DualState::initial(1.0), 0.4, in.q, true);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_DOUBLE_EQ(g[j], -0.4 * in.m.mean_reward[j / 3]);
}

TEST(Gradient, MatchesCentralDifferences) {
    Instance in;
    std::vector<double> cost(in.d.sa_size(), 0.5);
    ASSERT_GT(dot(cost, in.q.marginal()), 0.0);
    const DualState dual = dual_at(1.5, 0.7);
    const double alpha = 0.3;
    const auto g = surrogate_gradient(in.q, in.m.mean_reward, cost, dual, alpha, in.anchor);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto y = policy_to_occupancy(oracle::random_policy(in.d, 900 + s), in.m.transitions, in.m.init);
        std::vector<double> dir(y.q.size());
        for (std::size_t j = 0; j < dir.size(); ++j) dir[j] = y.q[j] - in.q.q[j];
        const double h = 1e-6;
        ExtendedOccupancy plus = in.q, minus = in.q;
        for (std::size_t j = 0; j < dir.size(); ++j) {
            plus.q[j] += h * dir[j];
            minus.q[j] -= h * dir[j];
        }
        const double fd = (surrogate_value(plus, in.m.mean_reward, cost, dual, alpha, in.anchor) -
                           surrogate_value(minus, in.m.mean_reward, cost, dual, alpha, in.anchor)) /
                          (2.0 * h);
        EXPECT_NEAR(fd, dot(g, dir), 1e-6) << "direction " << s;
    }
}

TEST(Dual, SafeEpisodeKeepsLambda) {
    const Dims d{1, 1, 1};
    const ExtendedOccupancy q{d, {1.0}};
    const std::vector<double> cost{-0.3};
    const auto next = update_dual(dual_at(0.7, 0.5), cost, q, 0.01);
    EXPECT_EQ(next.lambda, 0.7);
}

TEST(Dual, ArithmeticStep) {
    const Dims d{1, 1, 1};
    const ExtendedOccupancy q{d, {1.0}};
    const std::vector<double> cost{0.5};
    const auto next = update_dual(DualState::initial(0.5), cost, q, 0.01);
    EXPECT_DOUBLE_EQ(next.lambda, 0.005);
    EXPECT_NEAR(next.phi_prime(), 0.5 * std::exp(0.5 * 0.005), 1e-15);
}

TEST(Dual, ExponentCapKeepsValuesFinite) {
    const auto s = dual_at(1e6, 1.0);
    DualState capped = DualState::initial(1.0);
    capped = update_dual(capped, std::vector<double>{1.0}, ExtendedOccupancy{{1, 1, 1}, {1.0}}, 1e6);
    EXPECT_TRUE(capped.exponent_capped());
    EXPECT_TRUE(std::isfinite(capped.phi()));
    EXPECT_TRUE(std::isfinite(capped.phi_prime()));
    EXPECT_TRUE(s.exponent_capped());
}

TEST(Dual, DriftHoldsOverALongRun) {
    EnvConfig cfg;
    cfg.seed = 3;
    const Environment env(cfg);
    LearnerConfig lc;
    lc.episodes = 1000;
    lc.seed = 3;
    const auto t = run_omdpd(env, lc);
    ASSERT_TRUE(t.ok()) << t.failure.message;
    ASSERT_EQ(t.episodes.size(), 1000u);
    for (const auto& e : t.episodes) EXPECT_TRUE(e.drift_ok) << "episode " << e.k;
}

TEST(Dual, DriftHoldsForLargeSteps) {
    for (double beta : {1e-3, 0.1, 1.0, 5.0})
        for (double lam : {0.0, 0.3, 10.0, 400.0})
            for (double step : {0.0, 1e-9, 1e-3, 0.5, 3.0}) {
                const auto before = dual_at(lam, beta);
                const auto after = dual_at(lam + step, beta);
                EXPECT_TRUE(check_drift(before, after).holds) << beta << " " << lam << " " << step;
            }
}

TEST(LearningRate, FirstEpisodeUsesSqrtC) {
    GradientVariation v;
    v.push(std::vector<double>{3.0, 4.0});
    EXPECT_DOUBLE_EQ(v.eta(1, 7.5), std::sqrt(7.5));
}

TEST(LearningRate, ConstantGradientsFreezeTheRate) {
    GradientVariation v;
    const std::vector<double> g{0.3, 0.1};
    for (int k = 0; k < 10; ++k) v.push(g);
    for (std::int64_t k = 3; k <= 10; ++k) EXPECT_DOUBLE_EQ(v.eta(k, 2.0), v.eta(3, 2.0));
}

TEST(LearningRate, UnitVariationClosedForm) {
    GradientVariation v;
    const double c = 37.5;
    for (int k = 1; k <= 50; ++k) {
        // g_k - g_{k-1} has unit norm, with g_0 = 0
        v.push(std::vector<double>{double(k), 0.0});
    }
    for (std::int64_t k = 3; k <= 50; ++k)
        EXPECT_DOUBLE_EQ(v.eta(k, c), std::sqrt(c) / (std::sqrt(double(k - 1)) + std::sqrt(double(k - 2))));
}

TEST(Parameters, TheoremConstants) {
    const Dims d{5, 3, 5};
    const double sah = 75.0, k = 3000.0;
    const double l = std::log(12.0 * sah * k / 0.1);
    const auto p = default_parameters(d, 3000, 0.1, false);
    EXPECT_DOUBLE_EQ(p.bound, 37.5);
    EXPECT_NEAR(p.alpha, 1.0 / (2.0 * (1.0 + std::sqrt(l)) * sah), 1e-15);
    EXPECT_NEAR(p.beta, sah / (8.0 * std::sqrt(37.5) * std::sqrt(6.0 * sah * k)), 1e-15);
    const auto r = default_parameters(d, 3000, 0.1, true);
    EXPECT_NEAR(r.beta, 2.0 * sah / (3.5 * std::sqrt(37.5) * std::sqrt(2.0 * sah * k)), 1e-15);
    const auto o = default_parameters(d, 3000, 0.1, false, {0.5, 0.25, 2.0});
    EXPECT_EQ(o.alpha, 0.5);
    EXPECT_EQ(o.beta, 0.25);
    EXPECT_EQ(o.bound, 2.0);
    EXPECT_THROW(default_parameters(d, 3000, 0.1, false, {-1.0, {}, {}}), ValidationError);
}

TEST(Run, SingleEpisode) {
    EnvConfig cfg;
    const Environment env(cfg);
    LearnerConfig lc;
    lc.episodes = 1;
    const auto t = run_omdpd(env, lc);
    ASSERT_EQ(t.episodes.size(), 1u);
    EXPECT_NEAR(t.final_lambda, t.params.alpha * std::max(0.0, t.episodes[0].dtilde_q), 1e-15);
    EXPECT_DOUBLE_EQ(t.episodes[0].eta, std::sqrt(t.params.bound));
}

TEST(Run, NeverViolatedConstraintKeepsLambdaAtZero) {
    EnvConfig cfg;
    cfg.seed = 4;
    auto m = generate_env(cfg);
    std::fill(m.mean_cost.begin(), m.mean_cost.end(), -1.0);
    const Environment env(cfg, m);
    LearnerConfig lc;
    lc.episodes = 200;
    const auto t = run_omdpd(env, lc);
    ASSERT_TRUE(t.ok());
    for (const auto& e : t.episodes) EXPECT_EQ(e.lambda, 0.0);
    EXPECT_EQ(t.cumulative_violation.back(), 0.0);
}

TEST(Run, DeterministicAndSeedSensitive) {
    EnvConfig cfg;
    cfg.cost_mode = CostMode::Adversarial;
    const Environment env(cfg);
    LearnerConfig lc;
    lc.episodes = 60;
    lc.seed = 5;
    const auto a = run_omdpd(env, lc), b = run_omdpd(env, lc);
    ASSERT_EQ(a.episodes.size(), b.episodes.size());
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        EXPECT_EQ(a.episodes[i].reward_value_true, b.episodes[i].reward_value_true);
        EXPECT_EQ(a.episodes[i].lambda, b.episodes[i].lambda);
        EXPECT_EQ(a.episodes[i].eta, b.episodes[i].eta);
    }
    lc.seed = 6;
    const auto c = run_omdpd(env, lc);
    EXPECT_NE(a.cumulative_violation.back(), c.cumulative_violation.back());
}

TEST(Run, TraceIdentitiesAndObserver) {
    EnvConfig cfg;
    cfg.seed = 9;
    const Environment env(cfg);
    const std::vector<LinearConstraint> cons{{env.model().mean_cost, 0.0}};
    const auto base = solve_baseline_lp(env.model(), cons);
    LearnerConfig lc;
    lc.episodes = 100;
    lc.diagnostics = true;
    std::int64_t seen = 0;
    double max_violation = 0.0;
    const auto t = run_omdpd(env, lc, &base, [&](const StepView& v) {
        ++seen;
        max_violation = std::max(max_violation, v.polytope.violation(v.q_next));
        EXPECT_LE(v.eta_next, v.eta);
    });
    ASSERT_TRUE(t.ok());
    EXPECT_EQ(seen, 100);
    EXPECT_LE(max_violation, 1e-8);
    double hinge = 0.0, reward = 0.0;
    for (const auto& e : t.episodes) {
        hinge += std::max(0.0, e.dtilde_q);
        reward += e.reward_value_true;
        ASSERT_TRUE(e.good_event.has_value());
        ASSERT_TRUE(e.dtilde_qstar.has_value());
        EXPECT_LE(e.occupancy_violation, 1e-8);
    }
    EXPECT_NEAR(t.final_lambda, t.params.alpha * hinge, 1e-12);
    EXPECT_NEAR(t.cumulative_regret.back(), 100.0 * base.value - reward, 1e-9);
}

TEST(Run, KnownModelUsesTrueKernel) {
    EnvConfig cfg;
    cfg.seed = 10;
    const Environment env(cfg);
    LearnerConfig lc;
    lc.episodes = 30;
    lc.known_model = true;
    const auto t = run_omdpd(env, lc, nullptr, [&](const StepView& v) {
        EXPECT_EQ(v.polytope.low, env.model().transitions);
        for (std::size_t i = 0; i < v.r_tilde.size(); ++i) EXPECT_EQ(v.r_tilde[i], env.model().mean_reward[i]);
    });
    ASSERT_TRUE(t.ok());
    for (const auto& e : t.episodes) EXPECT_NEAR(e.rbar_q, e.reward_value_true, 1e-7);
}

TEST(Run, RejectsZeroEpisodes) {
    EnvConfig cfg;
    const Environment env(cfg);
    LearnerConfig lc;
    lc.episodes = 0;
    EXPECT_THROW(run_omdpd(env, lc), ValidationError);
}
