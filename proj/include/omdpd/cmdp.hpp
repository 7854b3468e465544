#pragma once

#include "omdpd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace omdpd {

inline constexpr double kInputTol = 1e-12;
inline constexpr double kOptimizerTol = 1e-8;

/// True environment: initial distribution, per-step kernels, mean reward and cost.
struct TabularCMDP {
    Dims dims;
    std::vector<double> init;        // [S]
    std::vector<double> transitions; // [H][S][A][S]
    std::vector<double> mean_reward; // [H][S][A], in [0,1]
    std::vector<double> mean_cost;   // [H][S][A], in [-1,1]

    std::span<const double> kernel_row(int h, int s, int a) const {
        return {transitions.data() + dims.idx(h, s, a, 0), std::size_t(dims.states)};
    }

    void validate() const {
        dims.validate();
        expect_size(init, dims.states, "init");
        expect_size(transitions, dims.sas_size(), "transitions");
        expect_size(mean_reward, dims.sa_size(), "mean_reward");
        expect_size(mean_cost, dims.sa_size(), "mean_cost");
        if (!is_distribution(init, kInputTol))
            throw ValidationError("initial distribution is not a probability vector");
        for (int h = 0; h < dims.horizon; ++h)
            for (int s = 0; s < dims.states; ++s)
                for (int a = 0; a < dims.actions; ++a)
                    if (!is_distribution(kernel_row(h, s, a), kInputTol))
                        throw ValidationError("transition row is not a probability vector");
        for (double r : mean_reward)
            if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("mean reward outside [0,1]");
        for (double c : mean_cost)
            if (!(c >= -1.0 && c <= 1.0)) throw ValidationError("mean cost outside [-1,1]");
    }
};

/// Markov policy pi_h(a|s), stored [H][S][A].
struct Policy {
    Dims dims;
    std::vector<double> probs;

    static Policy uniform(const Dims& d) {
        return {d, std::vector<double>(d.sa_size(), 1.0 / d.actions)};
    }

    std::span<const double> row(int h, int s) const {
        return {probs.data() + dims.idx(h, s, 0), std::size_t(dims.actions)};
    }

    void validate() const {
        dims.validate();
        expect_size(probs, dims.sa_size(), "policy");
        for (int h = 0; h < dims.horizon; ++h)
            for (int s = 0; s < dims.states; ++s)
                if (!is_distribution(row(h, s), kInputTol))
                    throw ValidationError("policy row is not a distribution");
    }
};

/// Extended occupancy q_h(s,a,s'), stored [H][S][A][S].
struct ExtendedOccupancy {
    Dims dims;
    std::vector<double> q;

    /// q_h(s,a) = sum_{s'} q_h(s,a,s').
    std::vector<double> marginal() const {
        std::vector<double> m(dims.sa_size(), 0.0);
        for (std::size_t i = 0; i < m.size(); ++i)
            for (int n = 0; n < dims.states; ++n) m[i] += q[i * dims.states + n];
        return m;
    }

    /// Largest deviation from nonnegativity, unit layer mass and flow conservation.
    double invariant_violation(std::span<const double> init) const {
        const Dims& d = dims;
        double worst = 0.0;
        for (double x : q) worst = std::max(worst, -x);
        std::vector<double> inflow(init.begin(), init.end());
        for (int h = 0; h < d.horizon; ++h) {
            std::vector<double> next(d.states, 0.0);
            double mass = 0.0;
            for (int s = 0; s < d.states; ++s) {
                double out = 0.0;
                for (int a = 0; a < d.actions; ++a)
                    for (int n = 0; n < d.states; ++n) {
                        const double v = q[d.idx(h, s, a, n)];
                        out += v;
                        next[n] += v;
                    }
                worst = std::max(worst, std::abs(out - inflow[s]));
                mass += out;
            }
            worst = std::max(worst, std::abs(mass - 1.0));
            inflow = std::move(next);
        }
        return worst;
    }
};

inline void check_compatible(const Dims& d, std::span<const double> transitions,
                             std::span<const double> init) {
    expect_size(transitions, d.sas_size(), "transitions");
    expect_size(init, d.states, "init");
}

/// Occupancy of a policy: q_h(s,a,s') = Pr(s_h=s, a_h=a, s_{h+1}=s').
inline ExtendedOccupancy policy_to_occupancy(const Policy& policy,
                                             std::span<const double> transitions,
                                             std::span<const double> init) {
    const Dims& d = policy.dims;
    expect_size(policy.probs, d.sa_size(), "policy");
    check_compatible(d, transitions, init);

    ExtendedOccupancy occ{d, std::vector<double>(d.sas_size(), 0.0)};
    std::vector<double> state_dist(init.begin(), init.end());
    for (int h = 0; h < d.horizon; ++h) {
        std::vector<double> next(d.states, 0.0);
        for (int s = 0; s < d.states; ++s) {
            if (state_dist[s] == 0.0) continue;
            for (int a = 0; a < d.actions; ++a) {
                const double w = state_dist[s] * policy.probs[d.idx(h, s, a)];
                if (w == 0.0) continue;
                for (int n = 0; n < d.states; ++n) {
                    const double v = w * transitions[d.idx(h, s, a, n)];
                    occ.q[d.idx(h, s, a, n)] = v;
                    next[n] += v;
                }
            }
        }
        state_dist = std::move(next);
    }
    return occ;
}

/// Policy recovered from occupancy marginals; rows with mass below 1e-12 become uniform.
inline Policy occupancy_to_policy(const ExtendedOccupancy& occ) {
    const Dims& d = occ.dims;
    const auto m = occ.marginal();
    Policy pi{d, std::vector<double>(d.sa_size())};
    for (int h = 0; h < d.horizon; ++h)
        for (int s = 0; s < d.states; ++s) {
            double total = 0.0;
            for (int a = 0; a < d.actions; ++a) total += std::max(0.0, m[d.idx(h, s, a)]);
            for (int a = 0; a < d.actions; ++a)
                pi.probs[d.idx(h, s, a)] =
                    total < kInputTol ? 1.0 / d.actions : std::max(0.0, m[d.idx(h, s, a)]) / total;
        }
    return pi;
}

/// Expected cumulative payoff E[sum_h payoff_h(s_h,a_h)] by backward induction.
inline double evaluate_value(const Policy& policy, std::span<const double> payoff,
                             std::span<const double> transitions, std::span<const double> init) {
    const Dims& d = policy.dims;
    expect_size(policy.probs, d.sa_size(), "policy");
    expect_size(payoff, d.sa_size(), "payoff");
    check_compatible(d, transitions, init);
    if (!all_finite(payoff)) throw ValidationError("payoff has non-finite entries");

    std::vector<double> v_next(d.states, 0.0);
    std::vector<double> v(d.states);
    for (int h = d.horizon - 1; h >= 0; --h) {
        for (int s = 0; s < d.states; ++s) {
            double vs = 0.0;
            for (int a = 0; a < d.actions; ++a) {
                const double pa = policy.probs[d.idx(h, s, a)];
                if (pa == 0.0) continue;
                double qsa = payoff[d.idx(h, s, a)];
                for (int n = 0; n < d.states; ++n) qsa += transitions[d.idx(h, s, a, n)] * v_next[n];
                vs += pa * qsa;
            }
            v[s] = vs;
        }
        std::swap(v, v_next);
    }
    return dot(init, v_next);
}

/// Reward and cost values of one policy.
struct ValueResult {
    double reward_value = 0.0;
    double cost_value = 0.0;
};

inline ValueResult evaluate(const TabularCMDP& env, const Policy& policy) {
    return {evaluate_value(policy, env.mean_reward, env.transitions, env.init),
            evaluate_value(policy, env.mean_cost, env.transitions, env.init)};
}

/// Unconstrained optimum max_pi E[sum_h payoff] with its deterministic greedy policy.
struct DpSolution {
    double value = 0.0;
    Policy policy;
};

inline DpSolution solve_unconstrained(const Dims& d, std::span<const double> payoff,
                                      std::span<const double> transitions,
                                      std::span<const double> init) {
    expect_size(payoff, d.sa_size(), "payoff");
    check_compatible(d, transitions, init);
    Policy pi{d, std::vector<double>(d.sa_size(), 0.0)};
    std::vector<double> v_next(d.states, 0.0);
    std::vector<double> v(d.states);
    for (int h = d.horizon - 1; h >= 0; --h) {
        for (int s = 0; s < d.states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int a = 0; a < d.actions; ++a) {
                double qsa = payoff[d.idx(h, s, a)];
                for (int n = 0; n < d.states; ++n) qsa += transitions[d.idx(h, s, a, n)] * v_next[n];
                if (qsa > best) {
                    best = qsa;
                    arg = a;
                }
            }
            v[s] = best;
            pi.probs[d.idx(h, s, arg)] = 1.0;
        }
        std::swap(v, v_next);
    }
    return {dot(init, v_next), std::move(pi)};
}

} // namespace omdpd
