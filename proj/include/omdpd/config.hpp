#pragma once

#include "omdpd/env.hpp"
#include "omdpd/learner.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace omdpd {

/// Raised for malformed or out-of-range configuration; maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct ExperimentConfig {
    EnvConfig env;
    std::vector<CostMode> modes{CostMode::Stochastic, CostMode::Adversarial};
    LearnerConfig run;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

inline NoiseModel parse_noise(const nlohmann::json& j, const char* key) {
    const auto s = get_or<std::string>(j, key, "none");
    if (s == "none") return NoiseModel::None;
    if (s == "uniform") return NoiseModel::UniformUnit;
    throw ConfigError(std::string(key) + " must be \"none\" or \"uniform\"");
}

inline CostMode parse_mode(const std::string& s) {
    if (s == "stochastic") return CostMode::Stochastic;
    if (s == "adversarial") return CostMode::Adversarial;
    throw ConfigError("cost_mode must be \"stochastic\", \"adversarial\" or \"both\"");
}

} // namespace detail

/// Parses the experiment document:
///   {env: {S, A, H, dirichlet_alpha, cost_mode, cost_levels, reward_noise, reward_noise_sigma,
///          cost_noise, cost_noise_sigma, seed},
///    run: {K, delta, seeds, known_model, hinge_aware_subgradient, refinement, diagnostics,
///          overrides: {alpha, beta, C}},
///    output: {dir}}
/// Missing keys take the paper's simulation values. cost_mode is a name, "both", or a list.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
    using detail::get_or;
    ExperimentConfig cfg;
    detail::reject_unknown(doc, {"env", "run", "output"}, "config");
    const auto env = doc.value("env", nlohmann::json::object());
    const auto run = doc.value("run", nlohmann::json::object());
    const auto out = doc.value("output", nlohmann::json::object());
    detail::reject_unknown(env, {"S", "A", "H", "dirichlet_alpha", "cost_mode", "cost_levels", "reward_noise",
                                 "reward_noise_sigma", "cost_noise", "cost_noise_sigma", "seed"},
                           "env");
    detail::reject_unknown(run, {"K", "delta", "seeds", "known_model", "hinge_aware_subgradient", "refinement",
                                 "diagnostics", "overrides"},
                           "run");
    detail::reject_unknown(out, {"dir"}, "output");

    EnvConfig& e = cfg.env;
    e.states = get_or<int>(env, "S", e.states);
    e.actions = get_or<int>(env, "A", e.actions);
    e.horizon = get_or<int>(env, "H", e.horizon);
    e.dirichlet_alpha = get_or<double>(env, "dirichlet_alpha", e.dirichlet_alpha);
    e.adversarial_cost_levels = get_or<std::vector<double>>(env, "cost_levels", e.adversarial_cost_levels);
    e.reward_noise = detail::parse_noise(env, "reward_noise");
    e.reward_noise_sigma = get_or<double>(env, "reward_noise_sigma", e.reward_noise_sigma);
    e.cost_noise = detail::parse_noise(env, "cost_noise");
    e.cost_noise_sigma = get_or<double>(env, "cost_noise_sigma", e.cost_noise_sigma);
    e.seed = get_or<std::uint64_t>(env, "seed", e.seed);

    if (env.contains("cost_mode")) {
        const auto& m = env.at("cost_mode");
        cfg.modes.clear();
        if (m.is_array()) {
            for (const auto& x : m) {
                if (!x.is_string()) throw ConfigError("cost_mode entries must be strings");
                cfg.modes.push_back(detail::parse_mode(x.get<std::string>()));
            }
        } else if (m.is_string() && m.get<std::string>() == "both") {
            cfg.modes = {CostMode::Stochastic, CostMode::Adversarial};
        } else if (m.is_string()) {
            cfg.modes.push_back(detail::parse_mode(m.get<std::string>()));
        } else {
            throw ConfigError("cost_mode must be a string or a list of strings");
        }
        if (cfg.modes.empty()) throw ConfigError("cost_mode list is empty");
    }

    LearnerConfig& r = cfg.run;
    r.episodes = get_or<std::int64_t>(run, "K", 3000);
    r.delta = get_or<double>(run, "delta", r.delta);
    r.known_model = get_or<bool>(run, "known_model", r.known_model);
    r.hinge_aware_subgradient = get_or<bool>(run, "hinge_aware_subgradient", r.hinge_aware_subgradient);
    r.diagnostics = get_or<bool>(run, "diagnostics", r.diagnostics);
    const auto refinement = get_or<std::string>(run, "refinement", "predictor");
    if (refinement == "predictor")
        r.refinement = Refinement::Predictor;
    else if (refinement == "at_optimistic")
        r.refinement = Refinement::AtOptimistic;
    else
        throw ConfigError("refinement must be \"predictor\" or \"at_optimistic\"");
    if (run.contains("overrides") && !run.at("overrides").is_null()) {
        const auto& ov = run.at("overrides");
        detail::reject_unknown(ov, {"alpha", "beta", "C"}, "run.overrides");
        auto opt = [&](const char* key) -> std::optional<double> {
            if (!ov.contains(key) || ov.at(key).is_null()) return std::nullopt;
            return get_or<double>(ov, key, 0.0);
        };
        r.overrides = {opt("alpha"), opt("beta"), opt("C")};
    }
    cfg.seeds = get_or<std::vector<std::uint64_t>>(run, "seeds", {e.seed});
    cfg.output_dir = get_or<std::string>(out, "dir", cfg.output_dir);

    try {
        e.validate();
    } catch (const Error& err) {
        throw ConfigError(err.what());
    }
    if (r.episodes < 1) throw ConfigError("K must be >= 1");
    if (!(r.delta > 0.0 && r.delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (cfg.seeds.empty()) throw ConfigError("seeds list is empty");
    for (const auto& v : {r.overrides.alpha, r.overrides.beta, r.overrides.bound})
        if (v && !(*v > 0.0)) throw ConfigError("overrides must be positive");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

/// Echo of the effective configuration, written next to the artifacts.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json modes = nlohmann::json::array();
    for (auto m : cfg.modes) modes.push_back(to_string(m));
    auto noise = [](NoiseModel n) { return n == NoiseModel::None ? "none" : "uniform"; };
    nlohmann::json overrides = nlohmann::json::object();
    if (cfg.run.overrides.alpha) overrides["alpha"] = *cfg.run.overrides.alpha;
    if (cfg.run.overrides.beta) overrides["beta"] = *cfg.run.overrides.beta;
    if (cfg.run.overrides.bound) overrides["C"] = *cfg.run.overrides.bound;
    return {
        {"env",
         {{"S", cfg.env.states},
          {"A", cfg.env.actions},
          {"H", cfg.env.horizon},
          {"dirichlet_alpha", cfg.env.dirichlet_alpha},
          {"cost_mode", modes},
          {"cost_levels", cfg.env.adversarial_cost_levels},
          {"reward_noise", noise(cfg.env.reward_noise)},
          {"reward_noise_sigma", cfg.env.reward_noise_sigma},
          {"cost_noise", noise(cfg.env.cost_noise)},
          {"cost_noise_sigma", cfg.env.cost_noise_sigma},
          {"seed", cfg.env.seed}}},
        {"run",
         {{"K", cfg.run.episodes},
          {"delta", cfg.run.delta},
          {"seeds", cfg.seeds},
          {"known_model", cfg.run.known_model},
          {"hinge_aware_subgradient", cfg.run.hinge_aware_subgradient},
          {"refinement", cfg.run.refinement == Refinement::Predictor ? "predictor" : "at_optimistic"},
          {"diagnostics", cfg.run.diagnostics},
          {"overrides", overrides}}},
        {"output", {{"dir", cfg.output_dir}}},
    };
}

} // namespace omdpd
