#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

using namespace omdpd;

TEST(Generate, PaperDimensionsAndRowSums) {
    EnvConfig cfg;
    const auto m = generate_env(cfg);
    EXPECT_EQ(m.dims, (Dims{5, 3, 5}));
    for (int h = 0; h < 5; ++h)
        for (int s = 0; s < 5; ++s)
            for (int a = 0; a < 3; ++a) {
                const auto row = m.kernel_row(h, s, a);
                double sum = 0.0;
                for (double p : row) sum += p;
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
    EXPECT_NO_THROW(m.validate());
    for (double r : m.mean_reward) EXPECT_TRUE(r >= 0.0 && r <= 1.0);
    for (double c : m.mean_cost) EXPECT_TRUE(c >= -1.0 && c <= 1.0);
}

TEST(Generate, LargeConcentrationIsNearlyUniform) {
    EnvConfig cfg;
    cfg.dirichlet_alpha = 1e6;
    const auto m = generate_env(cfg);
    for (double p : m.transitions) EXPECT_NEAR(p, 0.2, 1e-2);
}

TEST(Generate, SameSeedIsBitIdentical) {
    EnvConfig cfg;
    cfg.seed = 42;
    const auto a = generate_env(cfg), b = generate_env(cfg);
    EXPECT_EQ(a.transitions, b.transitions);
    EXPECT_EQ(a.mean_reward, b.mean_reward);
    EXPECT_EQ(a.mean_cost, b.mean_cost);
    cfg.seed = 43;
    EXPECT_NE(generate_env(cfg).transitions, a.transitions);
}

TEST(Generate, RejectsBadConfig) {
    EnvConfig cfg;
    cfg.dirichlet_alpha = 0.0;
    EXPECT_THROW(generate_env(cfg), ValidationError);
    cfg = {};
    cfg.adversarial_cost_levels = {2.0};
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Episode, ForcedChainReportsMeanReward) {
    EnvConfig cfg;
    cfg.states = 1;
    cfg.actions = 1;
    cfg.horizon = 3;
    const Dims d = cfg.dims();
    TabularCMDP m{d, {1.0}, std::vector<double>(d.sas_size(), 1.0), {0.1, 0.5, 0.9}, {0.0, 0.0, 0.0}};
    const Environment env(cfg, m);
    Rng rng(1, stream::kEpisodes);
    const auto fb = env.sample_episode(Policy::uniform(d), 1, rng);
    ASSERT_EQ(fb.trajectory.size(), 3u);
    for (int h = 0; h < 3; ++h) {
        EXPECT_EQ(fb.trajectory[h].state, 0);
        EXPECT_EQ(fb.trajectory[h].next, 0);
        EXPECT_DOUBLE_EQ(fb.observed_rewards[h], m.mean_reward[h]);
    }
}

TEST(Episode, ModeContract) {
    EnvConfig cfg;
    Rng rng(1, stream::kEpisodes);
    const Environment stoch(cfg);
    const auto a = stoch.sample_episode(Policy::uniform(cfg.dims()), 1, rng);
    EXPECT_TRUE(a.observed_costs.has_value());
    EXPECT_FALSE(a.revealed_cost_vector.has_value());
    cfg.cost_mode = CostMode::Adversarial;
    const Environment adv(cfg);
    const auto b = adv.sample_episode(Policy::uniform(cfg.dims()), 1, rng);
    EXPECT_FALSE(b.observed_costs.has_value());
    ASSERT_TRUE(b.revealed_cost_vector.has_value());
    EXPECT_EQ(*b.revealed_cost_vector, adv.episode_cost(1));
}

TEST(Episode, VisitFrequenciesMatchOccupancy) {
    EnvConfig cfg;
    cfg.seed = 7;
    const Environment env(cfg);
    const Dims d = cfg.dims();
    const auto pi = oracle::random_policy(d, 8);
    const auto marg = policy_to_occupancy(pi, env.model().transitions, env.model().init).marginal();
    const std::int64_t n = 100000;
    std::vector<double> freq(d.sa_size(), 0.0);
    Rng rng(9, stream::kEpisodes);
    for (std::int64_t k = 1; k <= n; ++k)
        for (const auto& t : env.sample_episode(pi, std::uint64_t(k), rng).trajectory)
            freq[d.idx(t.h, t.state, t.action)] += 1.0 / double(n);
    for (std::size_t i = 0; i < marg.size(); ++i) {
        const double se = std::sqrt(marg[i] * (1.0 - marg[i]) / double(n));
        EXPECT_LE(std::abs(freq[i] - marg[i]), 3.0 * se + 1e-12) << "entry " << i;
    }
}

TEST(Episode, UniformNoiseKeepsTheMean) {
    EnvConfig cfg;
    cfg.states = 1;
    cfg.actions = 1;
    cfg.horizon = 1;
    cfg.reward_noise = NoiseModel::UniformUnit;
    cfg.reward_noise_sigma = 0.3;
    const Dims d = cfg.dims();
    TabularCMDP m{d, {1.0}, {1.0}, {0.9}, {0.0}};
    const Environment env(cfg, m);
    Rng rng(3, stream::kEpisodes);
    double sum = 0.0, lo = 1.0, hi = 0.0;
    const int n = 200000;
    for (int k = 1; k <= n; ++k) {
        const double r = env.sample_episode(Policy::uniform(d), std::uint64_t(k), rng).observed_rewards[0];
        sum += r;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    EXPECT_GE(lo, 0.8);
    EXPECT_LE(hi, 1.0);
    // uniform on [0.8, 1.0]: sd 0.2/sqrt(12)
    EXPECT_NEAR(sum / n, 0.9, 3.0 * 0.2 / std::sqrt(12.0 * n));
}

TEST(Adversary, EntriesComeFromTheLevelSet) {
    EnvConfig cfg;
    cfg.cost_mode = CostMode::Adversarial;
    const auto& levels = cfg.adversarial_cost_levels;
    for (std::uint64_t k = 1; k <= 50; ++k)
        for (double c : adversarial_cost_stream(cfg, k))
            EXPECT_NE(std::find(levels.begin(), levels.end(), c), levels.end());
}

TEST(Adversary, SingletonZeroLevel) {
    EnvConfig cfg;
    cfg.cost_mode = CostMode::Adversarial;
    cfg.adversarial_cost_levels = {0.0};
    for (std::uint64_t k = 1; k <= 10; ++k)
        for (double c : adversarial_cost_stream(cfg, k)) EXPECT_EQ(c, 0.0);
}

TEST(Adversary, LevelFrequenciesAreUniform) {
    EnvConfig cfg;
    cfg.cost_mode = CostMode::Adversarial;
    cfg.states = cfg.actions = cfg.horizon = 1;
    std::map<double, double> count;
    const int n = 100000;
    for (int k = 1; k <= n; ++k) count[adversarial_cost_stream(cfg, std::uint64_t(k))[0]] += 1.0;
    ASSERT_EQ(count.size(), 7u);
    const double p = 1.0 / 7.0, se = std::sqrt(p * (1.0 - p) / n);
    for (const auto& [level, c] : count) EXPECT_LE(std::abs(c / n - p), 3.0 * se) << "level " << level;
}

TEST(Adversary, StreamIsObliviousAndReproducible) {
    EnvConfig cfg;
    cfg.cost_mode = CostMode::Adversarial;
    EXPECT_EQ(adversarial_cost_stream(cfg, 17), adversarial_cost_stream(cfg, 17));
    EXPECT_NE(adversarial_cost_stream(cfg, 17), adversarial_cost_stream(cfg, 18));
    cfg.cost_mode = CostMode::Stochastic;
    EXPECT_THROW(adversarial_cost_stream(cfg, 1), ModeError);
}
