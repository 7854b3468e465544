#pragma once

#include "omdpd/cmdp.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace omdpd {

enum class CostMode { Stochastic, Adversarial };
enum class NoiseModel { None, UniformUnit };

inline std::string to_string(CostMode m) {
    return m == CostMode::Stochastic ? "stochastic" : "adversarial";
}

struct EnvConfig {
    int states = 5;
    int actions = 3;
    int horizon = 5;
    double dirichlet_alpha = 0.5;
    CostMode cost_mode = CostMode::Stochastic;
    std::vector<double> adversarial_cost_levels{-1.0, -0.6, -0.2, 0.0, 0.2, 0.6, 1.0};
    NoiseModel reward_noise = NoiseModel::None;
    double reward_noise_sigma = 0.1;
    /// Stochastic-mode cost observations; None reports the fixed mean cost.
    NoiseModel cost_noise = NoiseModel::None;
    double cost_noise_sigma = 0.1;
    std::uint64_t seed = 0;

    Dims dims() const { return {states, actions, horizon}; }

    void validate() const {
        dims().validate();
        if (!(dirichlet_alpha > 0.0)) throw ValidationError("dirichlet_alpha must be positive");
        if (adversarial_cost_levels.empty())
            throw ValidationError("adversarial_cost_levels must be nonempty");
        for (double c : adversarial_cost_levels)
            if (!(c >= -1.0 && c <= 1.0)) throw ValidationError("cost level outside [-1,1]");
        if (!(reward_noise_sigma >= 0.0) || !(cost_noise_sigma >= 0.0))
            throw ValidationError("noise sigma must be nonnegative");
    }
};

/// 64-bit Mersenne twister with portable uniform and categorical draws.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                          std::uint32_t(stream >> 32), std::uint32_t(index),
                          std::uint32_t(index >> 32)};
        engine_.seed(seq);
    }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        int last = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last = int(i);
            if (u < acc) return int(i);
        }
        return last;
    }

    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

namespace stream {
inline constexpr std::uint64_t kEnvironment = 0x656e76;
inline constexpr std::uint64_t kEpisodes = 0x657069;
inline constexpr std::uint64_t kAdversary = 0x616476;
} // namespace stream

/// Draws a random CMDP: Dirichlet kernels, uniform initial state,
/// Uniform[0,1] rewards and Uniform[-1,1] costs.
inline TabularCMDP generate_env(const EnvConfig& cfg) {
    cfg.validate();
    const Dims d = cfg.dims();
    Rng rng(cfg.seed, stream::kEnvironment);
    TabularCMDP env;
    env.dims = d;
    env.init.assign(d.states, 1.0 / d.states);
    env.transitions.resize(d.sas_size());
    for (std::size_t row = 0; row < d.sa_size(); ++row) {
        double* p = env.transitions.data() + row * d.states;
        double total = 0.0;
        while (total <= 0.0) {
            total = 0.0;
            for (int n = 0; n < d.states; ++n) total += (p[n] = rng.gamma(cfg.dirichlet_alpha));
        }
        for (int n = 0; n < d.states; ++n) p[n] /= total;
    }
    env.mean_reward.resize(d.sa_size());
    for (double& r : env.mean_reward) r = rng.uniform();
    env.mean_cost.resize(d.sa_size());
    for (double& c : env.mean_cost) c = rng.uniform(-1.0, 1.0);
    return env;
}

/// Oblivious adversary: cost tensor of episode k, entries uniform over the configured levels.
inline std::vector<double> adversarial_cost_stream(const EnvConfig& cfg, std::uint64_t k) {
    if (cfg.cost_mode != CostMode::Adversarial)
        throw ModeError("adversarial cost stream requested in stochastic mode");
    const Dims d = cfg.dims();
    Rng rng(cfg.seed, stream::kAdversary, k);
    const auto levels = cfg.adversarial_cost_levels.size();
    std::vector<double> cost(d.sa_size());
    for (double& c : cost) {
        auto i = std::size_t(rng.uniform() * double(levels));
        c = cfg.adversarial_cost_levels[std::min(i, levels - 1)];
    }
    return cost;
}

struct Transition {
    int h = 0;
    int state = 0;
    int action = 0;
    int next = 0;
};

/// Bandit feedback of one episode.
struct EpisodeFeedback {
    std::vector<Transition> trajectory;
    std::vector<double> observed_rewards;
    std::optional<std::vector<double>> observed_costs;        // stochastic mode
    std::optional<std::vector<double>> revealed_cost_vector;  // adversarial mode, [H][S][A]
};

/// True environment plus the feedback model around it.
class Environment {
public:
    explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)), model_(generate_env(cfg_)) {}
    Environment(EnvConfig cfg, TabularCMDP model) : cfg_(std::move(cfg)), model_(std::move(model)) {
        cfg_.validate();
        model_.validate();
        if (model_.dims != cfg_.dims()) throw StructuralError("model does not match config dims");
    }

    const EnvConfig& config() const { return cfg_; }
    const TabularCMDP& model() const { return model_; }
    const Dims& dims() const { return model_.dims; }
    CostMode cost_mode() const { return cfg_.cost_mode; }

    /// Cost tensor the learner is judged against in episode k (1-based).
    std::vector<double> episode_cost(std::uint64_t k) const {
        return cfg_.cost_mode == CostMode::Adversarial ? adversarial_cost_stream(cfg_, k)
                                                       : model_.mean_cost;
    }

    EpisodeFeedback sample_episode(const Policy& policy, std::uint64_t k, Rng& rng) const {
        const Dims& d = model_.dims;
        if (policy.dims != d) throw StructuralError("policy dims do not match environment");
        EpisodeFeedback fb;
        fb.trajectory.reserve(d.horizon);
        fb.observed_rewards.reserve(d.horizon);
        const bool stochastic = cfg_.cost_mode == CostMode::Stochastic;
        if (stochastic) fb.observed_costs.emplace();

        int s = rng.categorical(model_.init);
        for (int h = 0; h < d.horizon; ++h) {
            const int a = rng.categorical(policy.row(h, s));
            const int n = rng.categorical(model_.kernel_row(h, s, a));
            fb.trajectory.push_back({h, s, a, n});
            const double rbar = model_.mean_reward[d.idx(h, s, a)];
            fb.observed_rewards.push_back(
                noisy(rbar, cfg_.reward_noise, cfg_.reward_noise_sigma, 0.0, 1.0, rng));
            if (stochastic) {
                const double dbar = model_.mean_cost[d.idx(h, s, a)];
                fb.observed_costs->push_back(
                    noisy(dbar, cfg_.cost_noise, cfg_.cost_noise_sigma, -1.0, 1.0, rng));
            }
            s = n;
        }
        if (!stochastic) fb.revealed_cost_vector = adversarial_cost_stream(cfg_, k);
        return fb;
    }

private:
    // Symmetric interval so the observation mean stays exactly at `mean`.
    static double noisy(double mean, NoiseModel model, double sigma, double lo, double hi, Rng& rng) {
        if (model == NoiseModel::None) return mean;
        const double half = std::min({sigma, mean - lo, hi - mean});
        return rng.uniform(mean - half, mean + half);
    }

    EnvConfig cfg_;
    TabularCMDP model_;
};

} // namespace omdpd
