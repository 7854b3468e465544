#pragma once

#include "omdpd/baseline.hpp"
#include "omdpd/env.hpp"
#include "omdpd/estimator.hpp"
#include "omdpd/metrics.hpp"
#include "omdpd/polytope.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace omdpd {

/// The exponent beta*lambda is capped here before exponentiation.
inline constexpr double kExponentCap = 500.0;

/// Dual variable with exponential potential Phi(x) = exp(beta x) - 1.
struct DualState {
    double lambda = 0.0;
    double beta = 1.0;
    double log_phi_prime = 0.0; // ln Phi'(lambda) = ln beta + beta lambda

    static DualState initial(double beta) {
        if (!(beta > 0.0)) throw ValidationError("potential parameter beta must be positive");
        return {0.0, beta, std::log(beta)};
    }

    bool exponent_capped() const { return beta * lambda > kExponentCap; }

    double phi() const { return std::expm1(std::min(beta * lambda, kExponentCap)); }

    double phi_prime() const { return std::exp(log_phi_prime); }
};

/// lambda <- lambda + alpha [cost^T q]^+, with cost over [H][S][A] and q's marginals.
inline DualState update_dual(const DualState& dual, std::span<const double> cost,
                             const ExtendedOccupancy& q, double alpha) {
    const auto m = q.marginal();
    expect_size(cost, m.size(), "dual cost vector");
    DualState next = dual;
    next.lambda = dual.lambda + alpha * std::max(0.0, dot(cost, m));
    next.log_phi_prime = std::log(next.beta) + std::min(next.beta * next.lambda, kExponentCap);
    return next;
}

/// Phi(lambda_k) - Phi(lambda_{k-1}) <= Phi'(lambda_k) (lambda_k - lambda_{k-1}),
/// evaluated as e^{beta lambda_k} (1 - e^{-beta Delta}) <= e^{beta lambda_k} beta Delta.
struct DriftCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
};

inline DriftCheck check_drift(const DualState& before, const DualState& after) {
    const double delta = after.lambda - before.lambda;
    const double scale = std::exp(std::min(after.beta * after.lambda, kExponentCap));
    DriftCheck c;
    c.lhs = scale * -std::expm1(-(after.beta * delta));
    c.rhs = scale * (after.beta * delta);
    c.holds = c.lhs <= c.rhs;
    return c;
}

/// f(q) = alpha (-r^T q + Phi'(lambda) [d^T q]^+) - 1/2 ||q - anchor||^2, payoffs on marginals.
inline double surrogate_value(const ExtendedOccupancy& q, std::span<const double> r_tilde,
                              std::span<const double> d_tilde, const DualState& dual, double alpha,
                              const ExtendedOccupancy& anchor) {
    if (q.dims != anchor.dims) throw StructuralError("surrogate anchor dims differ");
    const auto m = q.marginal();
    expect_size(r_tilde, m.size(), "r_tilde");
    expect_size(d_tilde, m.size(), "d_tilde");
    return alpha * (-dot(r_tilde, m) + dual.phi_prime() * std::max(0.0, dot(d_tilde, m))) -
           0.5 * squared_distance(q.q, anchor.q);
}

/// Gradient of the surrogate at `at` in the extended space.
/// The cost hinge contributes d unconditionally unless `hinge_aware`, in which
/// case it is zero where d^T q <= 0. The proximal term adds -(at - anchor).
inline std::vector<double> surrogate_gradient(const ExtendedOccupancy& at,
                                              std::span<const double> r_tilde,
                                              std::span<const double> d_tilde, const DualState& dual,
                                              double alpha, const ExtendedOccupancy& anchor,
                                              bool hinge_aware = false) {
    const Dims& d = at.dims;
    if (anchor.dims != d) throw StructuralError("surrogate anchor dims differ");
    expect_size(r_tilde, d.sa_size(), "r_tilde");
    expect_size(d_tilde, d.sa_size(), "d_tilde");
    double weight = dual.phi_prime();
    if (hinge_aware && !(dot(d_tilde, at.marginal()) > 0.0)) weight = 0.0;
    std::vector<double> g(d.sas_size());
    for (std::size_t i = 0; i < d.sa_size(); ++i) {
        const double gi = alpha * (-r_tilde[i] + weight * d_tilde[i]);
        for (int x = 0; x < d.states; ++x) {
            const std::size_t j = i * d.states + x;
            g[j] = gi - (at.q[j] - anchor.q[j]);
        }
    }
    return g;
}

/// eta = sqrt(C) min{1 / (sqrt(recent) + sqrt(older)), 1}, with 1/0 = +inf.
inline double learning_rate(double recent_variation, double older_variation, double bound) {
    if (recent_variation < 0.0 || older_variation < 0.0 || !(bound > 0.0))
        throw ValidationError("learning-rate inputs must be nonnegative with positive C");
    const double den = std::sqrt(recent_variation) + std::sqrt(older_variation);
    return std::sqrt(bound) * (den > 0.0 ? std::min(1.0 / den, 1.0) : 1.0);
}

/// Cumulative sums V_k = sum_{i<=k} ||g_i - g_{i-1}||^2 with g_0 = 0.
class GradientVariation {
public:
    void push(std::span<const double> gradient) {
        double step = 0.0;
        for (std::size_t j = 0; j < gradient.size(); ++j) {
            const double prev = j < last_.size() ? last_[j] : 0.0;
            step += (gradient[j] - prev) * (gradient[j] - prev);
        }
        cumulative_.push_back(cumulative_.back() + step);
        last_.assign(gradient.begin(), gradient.end());
    }

    /// V_k, with V_k = 0 for k <= 0.
    double sum(std::int64_t k) const {
        return k <= 0 ? 0.0 : cumulative_.at(std::size_t(k));
    }

    std::int64_t count() const { return std::int64_t(cumulative_.size()) - 1; }

    /// eta_k, which uses V_{k-1} and V_{k-2}.
    double eta(std::int64_t k, double bound) const { return learning_rate(sum(k - 1), sum(k - 2), bound); }

private:
    std::vector<double> cumulative_{0.0};
    std::vector<double> last_;
};

/// Step-size and potential constants.
struct LearnerParameters {
    double alpha = 0.0;
    double beta = 0.0;
    double bound = 0.0; // C, the divergence diameter
    double log_l = 0.0;
};

struct ParameterOverrides {
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> bound;
};

/// alpha = 1/(2(1+sqrt L) SAH), C = SAH/2, beta = SAH/(8 sqrt(C) sqrt(6 SAHK)); with a
/// known model and fixed reward, beta = 2 SAH/(3.5 sqrt(C) sqrt(2 SAHK)).
inline LearnerParameters default_parameters(const Dims& d, std::int64_t episodes, double delta,
                                            bool fixed_known_reward,
                                            const ParameterOverrides& ov = {}) {
    const double sah = double(d.sa_size());
    const double kk = double(episodes);
    LearnerParameters p;
    p.log_l = log_factor(d, episodes, delta);
    p.alpha = ov.alpha.value_or(1.0 / (2.0 * (1.0 + std::sqrt(p.log_l)) * sah));
    p.bound = ov.bound.value_or(0.5 * sah);
    const double c_root = std::sqrt(p.bound);
    p.beta = ov.beta.value_or(fixed_known_reward ? 2.0 * sah / (3.5 * c_root * std::sqrt(2.0 * sah * kk))
                                                 : sah / (8.0 * c_root * std::sqrt(6.0 * sah * kk)));
    if (!(p.alpha > 0.0) || !(p.beta > 0.0) || !(p.bound > 0.0))
        throw ValidationError("alpha, beta and C must be positive");
    return p;
}

/// Gradient fed to the refinement step.
/// Predictor: the episode's own gradient grad f_k(q_k), where the proximal term vanishes.
/// AtOptimistic: grad f_k(q^_{k+1}), including the proximal term -(q^_{k+1} - q_k).
enum class Refinement { Predictor, AtOptimistic };

struct LearnerConfig {
    std::int64_t episodes = 1; // K
    double delta = 0.1;
    bool known_model = false;
    bool hinge_aware_subgradient = false;
    Refinement refinement = Refinement::Predictor;
    ParameterOverrides overrides;
    ProjectionOptions projection;
    /// Evaluate the good event and the comparator's optimistic cost every episode.
    bool diagnostics = false;
    std::uint64_t seed = 0;
};

/// One row of the run trace; all values refer to the policy played in episode k.
struct EpisodeRecord {
    std::int64_t k = 0;
    double reward_value_true = 0.0; // V^{pi_k}(rbar, p)
    double cost_value_true = 0.0;   // V^{pi_k}(dbar or d_k, p)
    double dtilde_q = 0.0;          // d~_k^T q_k
    double rtilde_q = 0.0;          // r~_k^T q_k
    double rbar_q = 0.0;            // rbar^T q_k
    double lambda = 0.0;            // lambda_k
    double eta = 0.0;               // eta_k
    double proj_residual = 0.0;
    int proj_iterations = 0;
    double occupancy_violation = 0.0; // flow, mass and sign defect of q_k
    double drift_lhs = 0.0;
    double drift_rhs = 0.0;
    bool drift_ok = true;
    bool exponent_capped = false;
    std::optional<bool> good_event;
    std::optional<double> dtilde_qstar; // d~_k^T q*
    double wall_ms = 0.0;
};

enum class FailureKind { None, Convergence, Infeasible, Budget };

struct RunFailure {
    FailureKind kind = FailureKind::None;
    std::string message;
};

struct RunTrace {
    Dims dims;
    CostMode mode = CostMode::Stochastic;
    LearnerConfig config;
    LearnerParameters params;
    std::vector<EpisodeRecord> episodes;
    std::vector<double> cumulative_regret;
    std::vector<double> cumulative_violation;
    std::optional<double> baseline_value;
    double final_lambda = 0.0;
    int exponent_cap_hits = 0;
    int observed_support_size = 0;
    RunFailure failure;

    bool ok() const { return failure.kind == FailureKind::None; }

    std::vector<double> column(double EpisodeRecord::*field) const {
        std::vector<double> out;
        out.reserve(episodes.size());
        for (const auto& e : episodes) out.push_back(e.*field);
        return out;
    }
};

/// Per-episode view handed to an optional observer.
struct StepView {
    std::int64_t k;
    const ExtendedOccupancy& q;         // q_k, played
    const ExtendedOccupancy& q_hat;     // q^_k
    const ExtendedOccupancy& q_hat_next;
    const ExtendedOccupancy& q_next;
    std::span<const double> r_tilde;
    std::span<const double> d_tilde;
    const DualState& dual;              // lambda_k
    double eta;                         // eta_k
    double eta_next;                    // eta_{k+1}
    std::span<const double> gradient;   // grad f_k(q_k)
    std::span<const double> predicted;  // grad f_k(q^_{k+1})
    const LearnerParameters& params;
    const OccupancyPolytope& polytope;
};

using StepObserver = std::function<void(const StepView&)>;

/// Runs K episodes of the optimistic mirror-descent primal-dual learner.
///
/// Episode k plays pi_k from q_k, ingests its feedback (updating the
/// confidence model, or taking the revealed cost in adversarial mode), raises
/// the dual, then takes the optimistic step q^_{k+1} = P(q^_k - eta_k grad f_k(q_k))
/// and the refinement q_{k+1} = P(q^_{k+1} - eta_{k+1} grad f_k(q^_{k+1})) over Q_k.
inline RunTrace run_omdpd(const Environment& env, const LearnerConfig& cfg,
                          const BaselineSolution* baseline = nullptr,
                          const StepObserver& observer = {}) {
    const TabularCMDP& truth = env.model();
    const Dims& d = truth.dims;
    if (cfg.episodes < 1) throw ValidationError("episode count K must be >= 1");
    const bool stochastic = env.cost_mode() == CostMode::Stochastic;
    const bool fixed_known_reward = cfg.known_model && env.config().reward_noise == NoiseModel::None;

    RunTrace trace;
    trace.dims = d;
    trace.mode = env.cost_mode();
    trace.config = cfg;
    trace.params = default_parameters(d, cfg.episodes, cfg.delta, fixed_known_reward, cfg.overrides);
    const LearnerParameters& par = trace.params;
    if (baseline) trace.baseline_value = baseline->value;
    trace.episodes.reserve(std::size_t(cfg.episodes));

    ConfidenceModel model(d, env.cost_mode(), cfg.episodes, cfg.delta);
    const OccupancyPolytope known_poly = OccupancyPolytope::at_kernel(d, truth.transitions, truth.init);
    OccupancyPolytope poly =
        cfg.known_model ? known_poly : OccupancyPolytope::from_model(model.compute_bonuses(), truth.init);

    ExtendedOccupancy q = nominal_occupancy(poly, Policy::uniform(d));
    ExtendedOccupancy q_hat = q;
    DualState dual = DualState::initial(par.beta);
    GradientVariation variation;
    ProjectionSolver hat_solver, play_solver;
    Rng rng(cfg.seed, stream::kEpisodes);

    std::vector<double> r_tilde, d_tilde;
    try {
        for (std::int64_t k = 1; k <= cfg.episodes; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            EpisodeRecord rec;
            rec.k = k;
            const Policy pi = occupancy_to_policy(q);
            const EpisodeFeedback fb = env.sample_episode(pi, std::uint64_t(k), rng);

            std::optional<OptimisticModel> om;
            if (cfg.known_model) {
                r_tilde = truth.mean_reward;
                d_tilde = stochastic ? truth.mean_cost : *fb.revealed_cost_vector;
            } else {
                model.update_counts(fb);
                om = model.compute_bonuses();
                r_tilde = om->r_tilde;
                d_tilde = stochastic ? om->d_tilde : *fb.revealed_cost_vector;
                poly = OccupancyPolytope::from_model(*om, truth.init);
            }

            const auto qm = q.marginal();
            rec.dtilde_q = dot(d_tilde, qm);
            rec.rtilde_q = dot(r_tilde, qm);
            rec.rbar_q = dot(truth.mean_reward, qm);
            rec.occupancy_violation = q.invariant_violation(truth.init);
            const DualState before = dual;
            dual = update_dual(dual, d_tilde, q, par.alpha);
            const DriftCheck drift = check_drift(before, dual);
            rec.lambda = dual.lambda;
            rec.drift_lhs = drift.lhs;
            rec.drift_rhs = drift.rhs;
            rec.drift_ok = drift.holds;
            rec.exponent_capped = dual.exponent_capped();
            trace.exponent_cap_hits += rec.exponent_capped;

            rec.reward_value_true = evaluate_value(pi, truth.mean_reward, truth.transitions, truth.init);
            rec.cost_value_true =
                evaluate_value(pi, stochastic ? truth.mean_cost : *fb.revealed_cost_vector,
                               truth.transitions, truth.init);
            if (cfg.diagnostics) {
                if (om) rec.good_event = good_event_holds(*om, truth).holds();
                if (baseline) rec.dtilde_qstar = dot(d_tilde, baseline->marginal);
            }

            const auto grad = surrogate_gradient(q, r_tilde, d_tilde, dual, par.alpha, q,
                                                 cfg.hinge_aware_subgradient);
            variation.push(grad);
            rec.eta = variation.eta(k, par.bound);
            const auto hat = omd_argmin(poly, grad, q_hat, rec.eta, hat_solver, cfg.projection);
            const double eta_next = variation.eta(k + 1, par.bound);
            const auto predicted = cfg.refinement == Refinement::Predictor
                                       ? grad
                                       : surrogate_gradient(hat.q, r_tilde, d_tilde, dual, par.alpha, q,
                                                            cfg.hinge_aware_subgradient);
            const auto next = omd_argmin(poly, predicted, hat.q, eta_next, play_solver, cfg.projection);
            rec.proj_residual = std::max(hat.residual, next.residual);
            rec.proj_iterations = hat.iterations + next.iterations;

            if (observer)
                observer({k, q, q_hat, hat.q, next.q, r_tilde, d_tilde, dual, rec.eta, eta_next, grad, predicted, par, poly});

            q_hat = hat.q;
            q = next.q;
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            trace.episodes.push_back(rec);
        }
    } catch (const ConvergenceError& e) {
        trace.failure = {FailureKind::Convergence, e.what()};
    } catch (const InfeasibleError& e) {
        trace.failure = {FailureKind::Infeasible, e.what()};
    } catch (const BudgetError& e) {
        trace.failure = {FailureKind::Budget, e.what()};
    }

    trace.final_lambda = dual.lambda;
    trace.observed_support_size = model.observed_support_size();
    const auto costs = trace.column(&EpisodeRecord::cost_value_true);
    trace.cumulative_violation = compute_violation(costs);
    if (baseline)
        trace.cumulative_regret = compute_regret(baseline->value, trace.column(&EpisodeRecord::reward_value_true));
    return trace;
}

} // namespace omdpd
