#pragma once

#include "omdpd/env.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace omdpd {

/// ln(12 SAHK / delta), the Hoeffding log factor for rewards and costs.
inline double log_factor(const Dims& d, std::int64_t planned_episodes, double delta) {
    return std::log(12.0 * double(d.sa_size()) * double(planned_episodes) / delta);
}

/// ln(6 SAHK / delta), the Bernstein log factor for transitions.
inline double transition_log_factor(const Dims& d, std::int64_t planned_episodes, double delta) {
    return std::log(6.0 * double(d.sa_size()) * double(planned_episodes) / delta);
}

/// Empirical-Bernstein radius for one transition entry.
inline double transition_bonus(double p_hat, double count, double log_p) {
    const double n = std::max(count, 1.0);
    return 2.0 * std::sqrt(p_hat * (1.0 - p_hat) * log_p / n) + (14.0 / 3.0) * log_p / n;
}

/// sqrt(L / (n v 1)).
inline double payoff_bonus(double count, double log_l) { return std::sqrt(log_l / std::max(count, 1.0)); }

/// Optimistic reward and cost estimates with the kernel confidence box B_k.
/// The cost estimate is biased downward so that it never overstates a true cost.
struct OptimisticModel {
    Dims dims;
    double log_l = 0.0;
    std::vector<double> p_hat;       // [H][S][A][S]
    std::vector<double> r_hat;       // [H][S][A]
    std::vector<double> d_hat;       // [H][S][A]; empty in adversarial mode
    std::vector<double> beta_p;      // [H][S][A][S]
    std::vector<double> beta_r;      // [H][S][A]; also the cost radius
    std::vector<double> r_tilde;     // r_hat + beta_r
    std::vector<double> d_tilde;     // d_hat - beta_r; empty in adversarial mode
    std::vector<double> low;         // max(0, p_hat - beta_p)
    std::vector<double> high;        // min(1, p_hat + beta_p)
};

/// Visit counts and running sums behind the empirical model.
class ConfidenceModel {
public:
    ConfidenceModel(const Dims& dims, CostMode mode, std::int64_t planned_episodes, double delta)
        : dims_(dims), mode_(mode), planned_(planned_episodes), delta_(delta),
          counts_(dims.sa_size(), 0), transition_counts_(dims.sas_size(), 0),
          reward_sum_(dims.sa_size(), 0.0), cost_sum_(dims.sa_size(), 0.0) {
        dims.validate();
        if (planned_episodes < 1) throw ValidationError("planned episode count must be >= 1");
        if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0,1)");
        log_l_ = log_factor(dims, planned_episodes, delta);
        log_p_ = transition_log_factor(dims, planned_episodes, delta);
    }

    const Dims& dims() const { return dims_; }
    CostMode mode() const { return mode_; }
    double log_l() const { return log_l_; }
    double log_p() const { return log_p_; }
    std::int64_t planned_episodes() const { return planned_; }
    std::int64_t episodes() const { return episodes_; }
    double delta() const { return delta_; }

    std::int64_t count(int h, int s, int a) const { return counts_[dims_.idx(h, s, a)]; }
    std::int64_t transition_count(int h, int s, int a, int n) const {
        return transition_counts_[dims_.idx(h, s, a, n)];
    }

    double p_hat(int h, int s, int a, int n) const {
        const auto c = count(h, s, a);
        return c == 0 ? 1.0 / dims_.states : double(transition_count(h, s, a, n)) / double(c);
    }
    double r_hat(int h, int s, int a) const {
        const auto i = dims_.idx(h, s, a);
        return reward_sum_[i] / double(std::max<std::int64_t>(counts_[i], 1));
    }
    double d_hat(int h, int s, int a) const {
        if (mode_ != CostMode::Stochastic) throw ModeError("costs are not estimated in adversarial mode");
        const auto i = dims_.idx(h, s, a);
        return cost_sum_[i] / double(std::max<std::int64_t>(counts_[i], 1));
    }

    /// Ingests one episode of bandit feedback.
    void update_counts(const EpisodeFeedback& fb) {
        if (episodes_ >= planned_)
            throw BudgetError("episode " + std::to_string(episodes_ + 1) +
                              " exceeds the planned horizon K=" + std::to_string(planned_));
        if (mode_ == CostMode::Adversarial && fb.observed_costs)
            throw ModeError("adversarial costs are revealed, never estimated");
        if (mode_ == CostMode::Stochastic && !fb.observed_costs)
            throw ModeError("stochastic mode requires observed costs");
        if (fb.observed_rewards.size() != fb.trajectory.size() ||
            (fb.observed_costs && fb.observed_costs->size() != fb.trajectory.size()))
            throw StructuralError("feedback lengths disagree with the trajectory");
        for (std::size_t t = 0; t < fb.trajectory.size(); ++t) {
            const auto& tr = fb.trajectory[t];
            if (tr.h < 0 || tr.h >= dims_.horizon || tr.state < 0 || tr.state >= dims_.states ||
                tr.action < 0 || tr.action >= dims_.actions || tr.next < 0 || tr.next >= dims_.states)
                throw StructuralError("trajectory entry outside model dimensions");
            const auto i = dims_.idx(tr.h, tr.state, tr.action);
            ++counts_[i];
            ++transition_counts_[dims_.idx(tr.h, tr.state, tr.action, tr.next)];
            reward_sum_[i] += fb.observed_rewards[t];
            if (fb.observed_costs) cost_sum_[i] += (*fb.observed_costs)[t];
        }
        ++episodes_;
    }

    OptimisticModel compute_bonuses() const {
        const Dims& d = dims_;
        OptimisticModel m;
        m.dims = d;
        m.log_l = log_l_;
        m.p_hat.resize(d.sas_size());
        m.beta_p.resize(d.sas_size());
        m.low.resize(d.sas_size());
        m.high.resize(d.sas_size());
        m.r_hat.resize(d.sa_size());
        m.beta_r.resize(d.sa_size());
        m.r_tilde.resize(d.sa_size());
        const bool stochastic = mode_ == CostMode::Stochastic;
        if (stochastic) {
            m.d_hat.resize(d.sa_size());
            m.d_tilde.resize(d.sa_size());
        }
        for (int h = 0; h < d.horizon; ++h)
            for (int s = 0; s < d.states; ++s)
                for (int a = 0; a < d.actions; ++a) {
                    const auto i = d.idx(h, s, a);
                    const double n = double(counts_[i]);
                    for (int x = 0; x < d.states; ++x) {
                        const auto j = d.idx(h, s, a, x);
                        const double p = p_hat(h, s, a, x);
                        const double b = transition_bonus(p, n, log_p_);
                        m.p_hat[j] = p;
                        m.beta_p[j] = b;
                        m.low[j] = std::max(0.0, p - b);
                        m.high[j] = std::min(1.0, p + b);
                    }
                    m.r_hat[i] = r_hat(h, s, a);
                    m.beta_r[i] = payoff_bonus(n, log_l_);
                    m.r_tilde[i] = m.r_hat[i] + m.beta_r[i];
                    if (stochastic) {
                        m.d_hat[i] = d_hat(h, s, a);
                        m.d_tilde[i] = m.d_hat[i] - m.beta_r[i];
                    }
                }
        return m;
    }

    /// Largest number of distinct next states observed from any (h,s,a).
    int observed_support_size() const {
        int best = 0;
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            int support = 0;
            for (int x = 0; x < dims_.states; ++x) support += transition_counts_[i * dims_.states + x] > 0;
            best = std::max(best, support);
        }
        return best;
    }

private:
    Dims dims_;
    CostMode mode_;
    std::int64_t planned_;
    double delta_;
    double log_l_ = 0.0;
    double log_p_ = 0.0;
    std::int64_t episodes_ = 0;
    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> transition_counts_;
    std::vector<double> reward_sum_;
    std::vector<double> cost_sum_;
};

/// Worst entry of one confidence event.
struct EventCheck {
    bool holds = true;
    double worst_excess = -std::numeric_limits<double>::infinity(); // max |truth - estimate| - radius
    std::size_t worst_index = 0;
};

struct GoodEventReport {
    EventCheck transitions;
    EventCheck rewards;
    std::optional<EventCheck> costs; // stochastic mode only

    bool holds() const { return transitions.holds && rewards.holds && (!costs || costs->holds); }
};

namespace detail {
inline EventCheck check_event(std::span<const double> truth, std::span<const double> estimate,
                              std::span<const double> radius) {
    EventCheck ev;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double excess = std::abs(truth[i] - estimate[i]) - radius[i];
        if (excess > ev.worst_excess) {
            ev.worst_excess = excess;
            ev.worst_index = i;
        }
    }
    ev.holds = !(ev.worst_excess > 0.0);
    return ev;
}
} // namespace detail

/// Diagnostic: are the truth's kernel, mean reward and (stochastic) mean cost inside the intervals?
inline GoodEventReport good_event_holds(const OptimisticModel& m, const TabularCMDP& truth) {
    if (truth.dims != m.dims) throw StructuralError("truth dims do not match the model");
    GoodEventReport rep;
    rep.transitions = detail::check_event(truth.transitions, m.p_hat, m.beta_p);
    rep.rewards = detail::check_event(truth.mean_reward, m.r_hat, m.beta_r);
    if (!m.d_hat.empty()) rep.costs = detail::check_event(truth.mean_cost, m.d_hat, m.beta_r);
    return rep;
}

} // namespace omdpd
