#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace omdpd;

namespace {

EpisodeFeedback one_step(int h, int s, int a, int n, double reward, std::optional<double> cost) {
    EpisodeFeedback fb;
    fb.trajectory.push_back({h, s, a, n});
    fb.observed_rewards.push_back(reward);
    if (cost) fb.observed_costs = std::vector<double>{*cost};
    return fb;
}

} // namespace

TEST(Counts, SingleSample) {
    ConfidenceModel m({2, 2, 2}, CostMode::Stochastic, 10, 0.1);
    m.update_counts(one_step(1, 0, 1, 1, 0.7, 0.2));
    EXPECT_EQ(m.count(1, 0, 1), 1);
    EXPECT_DOUBLE_EQ(m.r_hat(1, 0, 1), 0.7);
    EXPECT_DOUBLE_EQ(m.d_hat(1, 0, 1), 0.2);
    EXPECT_DOUBLE_EQ(m.p_hat(1, 0, 1, 1), 1.0);
    EXPECT_EQ(m.count(0, 0, 0), 0);
}

TEST(Counts, SampleMean) {
    ConfidenceModel m({2, 2, 2}, CostMode::Stochastic, 10, 0.1);
    m.update_counts(one_step(0, 1, 0, 0, 0.4, 0.0));
    m.update_counts(one_step(0, 1, 0, 1, 0.8, 0.0));
    EXPECT_NEAR(m.r_hat(0, 1, 0), 0.6, 1e-15);
    EXPECT_DOUBLE_EQ(m.p_hat(0, 1, 0, 0), 0.5);
}

TEST(Counts, ModeAndBudgetErrors) {
    ConfidenceModel adv({2, 2, 2}, CostMode::Adversarial, 1, 0.1);
    EXPECT_THROW(adv.update_counts(one_step(0, 0, 0, 0, 0.5, 0.1)), ModeError);
    EXPECT_THROW(adv.d_hat(0, 0, 0), ModeError);
    adv.update_counts(one_step(0, 0, 0, 0, 0.5, std::nullopt));
    EXPECT_THROW(adv.update_counts(one_step(0, 0, 0, 0, 0.5, std::nullopt)), BudgetError);
    ConfidenceModel stoch({2, 2, 2}, CostMode::Stochastic, 5, 0.1);
    EXPECT_THROW(stoch.update_counts(one_step(0, 0, 0, 0, 0.5, std::nullopt)), ModeError);
    EXPECT_THROW(stoch.update_counts(one_step(0, 3, 0, 0, 0.5, 0.0)), StructuralError);
}

TEST(Counts, EmpiricalKernelInsideBernsteinRadius) {
    EnvConfig cfg;
    cfg.seed = 5;
    const Environment env(cfg);
    const Dims d = cfg.dims();
    const std::int64_t episodes = 10000;
    ConfidenceModel m(d, CostMode::Stochastic, episodes, 0.1);
    Rng rng(6, stream::kEpisodes);
    for (std::int64_t k = 1; k <= episodes; ++k)
        m.update_counts(env.sample_episode(Policy::uniform(d), std::uint64_t(k), rng));
    const auto om = m.compute_bonuses();
    for (int h = 0; h < d.horizon; ++h)
        for (int s = 0; s < d.states; ++s)
            for (int a = 0; a < d.actions; ++a) {
                if (m.count(h, s, a) == 0) continue;
                for (int x = 0; x < d.states; ++x) {
                    const auto j = d.idx(h, s, a, x);
                    EXPECT_LE(std::abs(om.p_hat[j] - env.model().transitions[j]), om.beta_p[j]);
                }
            }
}

TEST(Bonus, UnvisitedRewardRadiusAtPaperScale) {
    const Dims d{5, 3, 5};
    const long double ref = std::log(12.0L * 75.0L * 3000.0L / 0.1L);
    EXPECT_NEAR(log_factor(d, 3000, 0.1), double(ref), 1e-12);
    EXPECT_NEAR(log_factor(d, 3000, 0.1), 17.11, 5e-3);
    ConfidenceModel m(d, CostMode::Stochastic, 3000, 0.1);
    const auto om = m.compute_bonuses();
    for (double b : om.beta_r) {
        EXPECT_NEAR(b, double(std::sqrt(ref)), 1e-12);
        EXPECT_NEAR(b, 4.137, 5e-4);
    }
}

TEST(Bonus, DegenerateEmpiricalKernel) {
    const double log_p = transition_log_factor({5, 3, 5}, 3000, 0.1);
    EXPECT_DOUBLE_EQ(transition_bonus(0.0, 10.0, log_p), (14.0 / 3.0) * log_p / 10.0);
    EXPECT_DOUBLE_EQ(transition_bonus(1.0, 10.0, log_p), (14.0 / 3.0) * log_p / 10.0);
}

TEST(Bonus, MonotoneInCount) {
    const double l = 17.0;
    for (double n = 1.0; n < 1e6; n *= 2.0) {
        EXPECT_LE(payoff_bonus(2.0 * n, l), payoff_bonus(n, l));
        EXPECT_LE(transition_bonus(0.3, 2.0 * n, l), transition_bonus(0.3, n, l));
    }
}

TEST(Bonus, OptimisticDirections) {
    ConfidenceModel m({2, 2, 2}, CostMode::Stochastic, 100, 0.1);
    m.update_counts(one_step(0, 0, 0, 1, 0.5, 0.3));
    const auto om = m.compute_bonuses();
    const auto i = om.dims.idx(0, 0, 0);
    EXPECT_DOUBLE_EQ(om.r_tilde[i], 0.5 + om.beta_r[i]);
    EXPECT_DOUBLE_EQ(om.d_tilde[i], 0.3 - om.beta_r[i]);
    for (std::size_t j = 0; j < om.low.size(); ++j) {
        EXPECT_GE(om.low[j], 0.0);
        EXPECT_LE(om.high[j], 1.0);
        EXPECT_LE(om.low[j], om.p_hat[j]);
        EXPECT_GE(om.high[j], om.p_hat[j]);
    }
}

TEST(GoodEvent, HoldsWithNoData) {
    EnvConfig cfg;
    const Environment env(cfg);
    ConfidenceModel m(cfg.dims(), CostMode::Stochastic, 3000, 0.1);
    EXPECT_TRUE(good_event_holds(m.compute_bonuses(), env.model()).holds());
}

TEST(GoodEvent, FlagsInjectedFault) {
    EnvConfig cfg;
    cfg.seed = 2;
    const Environment env(cfg);
    const Dims d = cfg.dims();
    ConfidenceModel m(d, CostMode::Stochastic, 2000, 0.1);
    Rng rng(3, stream::kEpisodes);
    for (std::uint64_t k = 1; k <= 2000; ++k) m.update_counts(env.sample_episode(Policy::uniform(d), k, rng));
    auto om = m.compute_bonuses();
    ASSERT_TRUE(good_event_holds(om, env.model()).holds());
    const std::size_t bad = d.idx(2, 1, 2);
    om.r_hat[bad] = env.model().mean_reward[bad] + om.beta_r[bad] + 0.01;
    const auto rep = good_event_holds(om, env.model());
    EXPECT_FALSE(rep.holds());
    EXPECT_FALSE(rep.rewards.holds);
    EXPECT_EQ(rep.rewards.worst_index, bad);
    EXPECT_TRUE(rep.transitions.holds);
    ASSERT_TRUE(rep.costs.has_value());
    EXPECT_TRUE(rep.costs->holds);
}
