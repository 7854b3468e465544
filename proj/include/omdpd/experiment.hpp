#pragma once

#include "omdpd/baseline.hpp"
#include "omdpd/config.hpp"
#include "omdpd/learner.hpp"
#include "omdpd/metrics.hpp"
#include "omdpd/report.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace omdpd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBaselineFallback = 3;
inline constexpr int kExitSolver = 4;

struct BaselineOutcome {
    std::optional<BaselineSolution> solution;
    bool fallback = false;   // adversarial: solved against the mean cost instead of every d_k
    bool infeasible = false; // no comparator could be solved
    std::string note;
};

/// Comparator for one cell. Stochastic: dbar^T q <= 0. Adversarial: d_k^T q <= 0 for every
/// k <= K, falling back to the episode-mean cost when that system is empty.
inline BaselineOutcome solve_cell_baseline(const Environment& env, std::int64_t episodes) {
    const TabularCMDP& m = env.model();
    BaselineOutcome out;
    if (env.cost_mode() == CostMode::Stochastic) {
        const std::vector<LinearConstraint> cons{{m.mean_cost, 0.0}};
        try {
            out.solution = solve_baseline_lp(m, cons);
        } catch (const InfeasibleError&) {
            out.infeasible = true;
            out.note = "stochastic baseline infeasible; regret not reported";
        }
        return out;
    }
    std::vector<LinearConstraint> cons;
    cons.reserve(std::size_t(episodes));
    std::vector<double> mean(m.dims.sa_size(), 0.0);
    for (std::int64_t k = 1; k <= episodes; ++k) {
        cons.push_back({env.episode_cost(std::uint64_t(k)), 0.0});
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += cons.back().cost[i] / double(episodes);
    }
    try {
        out.solution = solve_baseline_lp(m, cons);
        return out;
    } catch (const InfeasibleError&) {
        out.fallback = true;
    }
    const std::vector<LinearConstraint> avg{{mean, 0.0}};
    try {
        out.solution = solve_baseline_lp(m, avg);
        out.note = "no policy satisfies every d_k; baseline uses the mean adversarial cost";
    } catch (const InfeasibleError&) {
        out.infeasible = true;
        out.note = "adversarial baseline infeasible even for the mean cost; regret not reported";
    }
    return out;
}

struct CellResult {
    std::uint64_t seed = 0;
    CostMode mode = CostMode::Stochastic;
    BaselineOutcome baseline;
    RunTrace trace;
    std::optional<std::string> solver_error; // baseline certificate failure
    double seconds = 0.0;
};

inline EnvConfig cell_env(const ExperimentConfig& cfg, std::uint64_t seed, CostMode mode) {
    EnvConfig e = cfg.env;
    e.seed = seed;
    e.cost_mode = mode;
    return e;
}

inline CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t seed, CostMode mode) {
    const auto t0 = std::chrono::steady_clock::now();
    CellResult cell;
    cell.seed = seed;
    cell.mode = mode;
    const Environment env(cell_env(cfg, seed, mode));
    LearnerConfig lc = cfg.run;
    lc.seed = seed;
    try {
        cell.baseline = solve_cell_baseline(env, lc.episodes);
    } catch (const ConvergenceError& e) {
        cell.solver_error = e.what();
    }
    cell.trace = run_omdpd(env, lc, cell.baseline.solution ? &*cell.baseline.solution : nullptr);
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cell;
}

/// OMDPD_THREADS, else one worker per seed.
inline std::size_t worker_count(std::size_t seeds, std::size_t cells) {
    std::size_t n = std::max<std::size_t>(1, seeds);
    if (const char* v = std::getenv("OMDPD_THREADS")) {
        char* end = nullptr;
        const long x = std::strtol(v, &end, 10);
        if (end != v && x > 0) n = std::size_t(x);
    }
    return std::min(n, std::max<std::size_t>(1, cells));
}

/// Every (seed, mode) cell, seeds outermost. Results are ordered independently of scheduling.
inline std::vector<CellResult> run_cells(const ExperimentConfig& cfg, bool quiet = true) {
    std::vector<std::pair<std::uint64_t, CostMode>> jobs;
    for (auto s : cfg.seeds)
        for (auto m : cfg.modes) jobs.emplace_back(s, m);
    std::vector<CellResult> out(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex io;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            out[i] = run_cell(cfg, jobs[i].first, jobs[i].second);
            if (quiet) continue;
            const auto& t = out[i].trace;
            std::lock_guard lock(io);
            std::fprintf(stderr, "%-11s seed %-6llu K=%zu violation=%.4f regret=%s%s (%.1fs)\n",
                         to_string(out[i].mode).c_str(), static_cast<unsigned long long>(out[i].seed),
                         t.episodes.size(), t.cumulative_violation.empty() ? 0.0 : t.cumulative_violation.back(),
                         t.cumulative_regret.empty() ? "n/a" : format_g17(t.cumulative_regret.back()).c_str(),
                         t.ok() ? "" : " FAILED", out[i].seconds);
        }
    };
    const std::size_t workers = worker_count(cfg.seeds.size(), jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    return out;
}

/// Pointwise mean over complete runs of one mode; empty if none completed.
inline std::vector<double> mode_mean(const std::vector<CellResult>& cells, CostMode mode,
                                     std::vector<double> RunTrace::*series) {
    std::vector<std::vector<double>> runs;
    for (const auto& c : cells) {
        if (c.mode != mode || !c.trace.ok()) continue;
        const auto& s = c.trace.*series;
        if (s.size() == std::size_t(c.trace.config.episodes)) runs.push_back(s);
    }
    return mean_series(runs);
}

struct GrowthFit {
    std::size_t from = 0, to = 0;
    PowerFit fit;
    double ratio = std::numeric_limits<double>::quiet_NaN(); // series(K) / series(K/2)
    double sqrt_scale = 0.0;                                  // c in c sqrt(k), final quarter
};

/// Power law on [K/2, K], half-horizon ratio, and the sqrt reference scale.
inline GrowthFit growth_fit(const std::vector<double>& series) {
    GrowthFit g;
    const std::size_t n = series.size();
    if (n == 0) return g;
    g.from = std::max<std::size_t>(1, n / 2);
    g.to = n;
    if (g.from < g.to) g.fit = fit_power_law(series, g.from, g.to);
    if (series[g.from - 1] > 0.0) g.ratio = series[n - 1] / series[g.from - 1];
    g.sqrt_scale = fit_sqrt_scale(series, std::max<std::size_t>(1, n - n / 4), n);
    return g;
}

inline nlohmann::json fit_json(const GrowthFit& g) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    return {{"window", {g.from, g.to}},
            {"gamma", num(g.fit.exponent)},
            {"scale", num(g.fit.scale)},
            {"nonpositive", g.fit.nonpositive},
            {"ratio_half", num(g.ratio)},
            {"sqrt_scale", g.sqrt_scale}};
}

/// CSV per cell, the two plots, config echo and a summary.
inline void write_artifacts(const ExperimentConfig& cfg, const std::vector<CellResult>& cells,
                            const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path root(dir);
    for (const auto& c : cells)
        write_text((root / ("trace_" + to_string(c.mode) + "_" + std::to_string(c.seed) + ".csv")).string(),
                   trace_csv(c.trace));

    std::vector<PlotSeries> viol, regret;
    nlohmann::json summary = {{"cells", nlohmann::json::array()}, {"modes", nlohmann::json::object()}};
    for (const auto& c : cells) {
        const auto& t = c.trace;
        nlohmann::json j = {{"seed", c.seed},
                            {"mode", to_string(c.mode)},
                            {"episodes", t.episodes.size()},
                            {"failure", t.failure.message},
                            {"baseline_fallback", c.baseline.fallback},
                            {"baseline_note", c.baseline.note},
                            {"final_lambda", t.final_lambda},
                            {"exponent_cap_hits", t.exponent_cap_hits}};
        if (c.baseline.solution) j["baseline_value"] = c.baseline.solution->value;
        if (!t.cumulative_violation.empty()) j["violation"] = t.cumulative_violation.back();
        if (!t.cumulative_regret.empty()) j["regret"] = t.cumulative_regret.back();
        summary["cells"].push_back(j);
    }
    for (auto mode : cfg.modes) {
        const bool stoch = mode == CostMode::Stochastic;
        const std::string name = to_string(mode);
        const std::string color = stoch ? "#1f77b4" : "#d62728";
        nlohmann::json m = nlohmann::json::object();
        const auto v = mode_mean(cells, mode, &RunTrace::cumulative_violation);
        if (!v.empty()) {
            const auto g = growth_fit(v);
            viol.push_back({name + " (mean)", color, v, false});
            viol.push_back({name + " c*sqrt(k), c=" + format_g17(g.sqrt_scale).substr(0, 8), color,
                            sqrt_curve(g.sqrt_scale, v.size()), true});
            m["violation"] = fit_json(g);
        }
        const auto r = mode_mean(cells, mode, &RunTrace::cumulative_regret);
        if (!r.empty()) {
            const auto g = growth_fit(r);
            regret.push_back({name + " (mean)", color, r, false});
            regret.push_back({name + " c*sqrt(k), c=" + format_g17(g.sqrt_scale).substr(0, 8), color,
                              sqrt_curve(g.sqrt_scale, r.size()), true});
            m["regret"] = fit_json(g);
        }
        summary["modes"][name] = m;
    }
    write_text((root / "violation.svg").string(),
               render_svg("Cumulative constraint violation", "violation", viol));
    write_text((root / "regret.svg").string(), render_svg("Cumulative regret", "regret", regret));
    write_text((root / "config.json").string(), to_json(cfg).dump(2) + "\n");
    write_text((root / "summary.json").string(), summary.dump(2) + "\n");
}

/// 4 if any solver failed, else 3 if a baseline fell back or was infeasible, else 0.
inline int cells_exit_code(const std::vector<CellResult>& cells) {
    bool fallback = false;
    for (const auto& c : cells) {
        if (c.solver_error || c.trace.failure.kind == FailureKind::Convergence ||
            c.trace.failure.kind == FailureKind::Infeasible || c.trace.failure.kind == FailureKind::Budget)
            return kExitSolver;
        fallback = fallback || c.baseline.fallback || c.baseline.infeasible;
    }
    return fallback ? kExitBaselineFallback : kExitOk;
}

struct ExperimentResult {
    std::vector<CellResult> cells;
    int exit_code = kExitOk;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool quiet = true) {
    ExperimentResult res;
    res.cells = run_cells(cfg, quiet);
    write_artifacts(cfg, res.cells, cfg.output_dir);
    res.exit_code = cells_exit_code(res.cells);
    if (!quiet)
        for (const auto& c : res.cells) {
            if (!c.baseline.note.empty())
                std::fprintf(stderr, "note: %s seed %llu: %s\n", to_string(c.mode).c_str(),
                             static_cast<unsigned long long>(c.seed), c.baseline.note.c_str());
            if (c.solver_error) std::fprintf(stderr, "error: %s\n", c.solver_error->c_str());
            if (!c.trace.ok()) std::fprintf(stderr, "error: %s\n", c.trace.failure.message.c_str());
        }
    return res;
}

struct CheckLine {
    std::string name;
    bool pass = true;
    std::string detail;
};

/// Power-law sublinearity on [K/2, K]. A series that is nowhere positive in the window
/// is bounded above by zero and passes; a mixed-sign window cannot be fitted and fails.
inline CheckLine sublinearity_check(const std::string& name, const std::vector<double>& series) {
    CheckLine line{name, true, ""};
    if (series.size() < 2) {
        line.detail = "skipped: fewer than two episodes";
        return line;
    }
    const auto g = growth_fit(series);
    if (g.fit.nonpositive) {
        const double top = *std::max_element(series.begin() + std::ptrdiff_t(g.from - 1), series.end());
        line.pass = top <= 0.0;
        line.detail = "window max " + format_g17(top) + (line.pass ? " (bounded by 0)" : " (mixed sign)");
        return line;
    }
    line.pass = g.fit.exponent <= 0.75;
    line.detail = "gamma=" + format_g17(g.fit.exponent) + " on [" + std::to_string(g.from) + "," +
                  std::to_string(g.to) + "], V(K)/V(K/2)=" + format_g17(g.ratio);
    return line;
}

/// Invariant and diagnostic suite over finished cells.
inline std::vector<CheckLine> check_cells(const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
    std::vector<CheckLine> lines;
    auto tol_rel = [](double scale) { return 1e-9 * std::max(1.0, std::abs(scale)); };

    CheckLine completed{"runs_completed", true, ""};
    std::size_t drift_fail = 0, drift_total = 0, eta_fail = 0, viol_fail = 0;
    double lambda_err = 0.0, regret_err = 0.0, occ = 0.0, resid = 0.0;
    bool regret_any = false;
    for (const auto& c : cells) {
        const auto& t = c.trace;
        if (!t.ok() || c.solver_error) {
            completed.pass = false;
            completed.detail += to_string(c.mode) + "/" + std::to_string(c.seed) + ": " +
                                (c.solver_error ? *c.solver_error : t.failure.message) + "; ";
        }
        double hinge = 0.0, acc = 0.0, rsum = 0.0;
        for (std::size_t i = 0; i < t.episodes.size(); ++i) {
            const auto& e = t.episodes[i];
            ++drift_total;
            drift_fail += !e.drift_ok;
            if (i > 0 && e.eta > t.episodes[i - 1].eta) ++eta_fail;
            hinge += std::max(0.0, e.dtilde_q);
            acc += std::max(0.0, e.cost_value_true);
            if (std::abs(acc - t.cumulative_violation[i]) > tol_rel(acc) ||
                (i > 0 && t.cumulative_violation[i] < t.cumulative_violation[i - 1]))
                ++viol_fail;
            rsum += e.reward_value_true;
            occ = std::max(occ, e.occupancy_violation);
            resid = std::max(resid, e.proj_residual);
        }
        if (!t.episodes.empty()) {
            const double lam = t.episodes.back().lambda;
            lambda_err = std::max(lambda_err, std::abs(lam - t.params.alpha * hinge) / std::max(1.0, std::abs(lam)));
        }
        if (t.baseline_value && !t.cumulative_regret.empty()) {
            regret_any = true;
            const double kv = double(t.episodes.size()) * *t.baseline_value;
            regret_err = std::max(regret_err, std::abs(t.cumulative_regret.back() - (kv - rsum)) / std::max(1.0, std::abs(kv)));
        }
    }
    if (completed.detail.empty()) completed.detail = std::to_string(cells.size()) + " cells";
    lines.push_back(completed);
    lines.push_back({"drift_inequality", drift_fail == 0,
                     std::to_string(drift_fail) + " failures over " + std::to_string(drift_total) + " steps"});
    lines.push_back({"lambda_identity", lambda_err <= 1e-9, "max relative error " + format_g17(lambda_err)});
    lines.push_back({"eta_nonincreasing", eta_fail == 0, std::to_string(eta_fail) + " increases"});
    lines.push_back({"violation_self_consistent", viol_fail == 0, std::to_string(viol_fail) + " mismatches"});
    if (regret_any)
        lines.push_back({"regret_identity", regret_err <= 1e-9, "max relative error " + format_g17(regret_err)});
    lines.push_back({"occupancy_invariants", occ <= 1e-8, "max defect " + format_g17(occ)});
    lines.push_back({"projection_residual", resid <= cfg.run.projection.tol,
                     "max residual " + format_g17(resid)});

    if (cfg.run.diagnostics) {
        std::size_t runs = 0, failed = 0, lemma_checked = 0, lemma_fail = 0;
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& c : cells) {
            if (c.mode != CostMode::Stochastic || c.trace.config.known_model) continue;
            ++runs;
            bool held = true;
            for (const auto& e : c.trace.episodes) held = held && e.good_event.value_or(true);
            failed += !held;
            if (!held || !c.baseline.solution) continue;
            ++lemma_checked;
            for (const auto& e : c.trace.episodes) {
                if (!e.dtilde_qstar) continue;
                worst = std::max(worst, *e.dtilde_qstar);
                lemma_fail += *e.dtilde_qstar > 1e-8;
            }
        }
        if (runs > 0) {
            const double delta = cfg.run.delta;
            const double limit = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / double(runs));
            const double frac = double(failed) / double(runs);
            lines.push_back({"good_event_frequency", frac <= limit,
                             std::to_string(failed) + "/" + std::to_string(runs) + " runs failed, limit " +
                                 format_g17(limit)});
            lines.push_back({"optimistic_feasibility", lemma_fail == 0,
                             std::to_string(lemma_checked) + " runs, " + std::to_string(lemma_fail) +
                                 " violations, max d~^T q* " + format_g17(worst)});
        }
    }

    for (auto mode : cfg.modes) {
        const auto v = mode_mean(cells, mode, &RunTrace::cumulative_violation);
        if (!v.empty()) lines.push_back(sublinearity_check("sublinear_violation_" + to_string(mode), v));
        const auto r = mode_mean(cells, mode, &RunTrace::cumulative_regret);
        if (!r.empty()) lines.push_back(sublinearity_check("sublinear_regret_" + to_string(mode), r));
    }
    return lines;
}

} // namespace omdpd
