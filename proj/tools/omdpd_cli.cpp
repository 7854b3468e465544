#include "omdpd.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

using namespace omdpd;

void print_baseline(const CellResult& c, const Dims& d) {
    std::printf("%s seed %llu\n", to_string(c.mode).c_str(), static_cast<unsigned long long>(c.seed));
    if (!c.baseline.note.empty()) std::printf("  note: %s\n", c.baseline.note.c_str());
    if (!c.baseline.solution) {
        std::printf("  no baseline\n");
        return;
    }
    const auto& b = *c.baseline.solution;
    std::printf("  V* = %.12g  duality gap = %.3g  cost rows used = %zu  pivots = %d\n", b.value,
                b.duality_gap, b.active_constraints, b.pivots);
    const Policy pi = occupancy_to_policy(b.q);
    for (int h = 0; h < d.horizon; ++h) {
        std::printf("  h=%d", h);
        for (int s = 0; s < d.states; ++s) {
            double mass = 0.0;
            for (int a = 0; a < d.actions; ++a) mass += b.marginal[d.idx(h, s, a)];
            std::printf("  s%d:%.3f[", s, mass);
            for (int a = 0; a < d.actions; ++a) std::printf(a ? " %.2f" : "%.2f", pi.row(h, s)[std::size_t(a)]);
            std::printf("]");
        }
        std::printf("\n");
    }
}

int cmd_baseline(const ExperimentConfig& cfg) {
    int code = kExitOk;
    for (auto seed : cfg.seeds)
        for (auto mode : cfg.modes) {
            CellResult c;
            c.seed = seed;
            c.mode = mode;
            const Environment env(cell_env(cfg, seed, mode));
            try {
                c.baseline = solve_cell_baseline(env, cfg.run.episodes);
            } catch (const ConvergenceError& e) {
                std::printf("%s seed %llu\n  error: %s\n", to_string(mode).c_str(),
                            static_cast<unsigned long long>(seed), e.what());
                code = kExitSolver;
                continue;
            }
            if ((c.baseline.fallback || c.baseline.infeasible) && code == kExitOk) code = kExitBaselineFallback;
            print_baseline(c, env.dims());
        }
    return code;
}

int cmd_check(ExperimentConfig cfg, bool quiet) {
    cfg.run.diagnostics = true;
    const auto cells = run_cells(cfg, quiet);
    write_artifacts(cfg, cells, cfg.output_dir);
    const auto lines = check_cells(cfg, cells);
    bool all = true;
    for (const auto& l : lines) {
        std::printf("%s %s: %s\n", l.pass ? "PASS" : "FAIL", l.name.c_str(), l.detail.c_str());
        all = all && l.pass;
    }
    const int code = cells_exit_code(cells);
    if (code == kExitSolver) return code;
    return all ? code : kExitCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimistic mirror-descent primal-dual learner for tabular episodic CMDPs"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    bool quiet = false;
    app.add_option("--out-dir", out_dir, "Override output.dir");
    app.add_flag("--quiet", quiet, "Suppress progress output");
    auto* run = app.add_subcommand("run", "Run every (seed, cost mode) cell and write traces and plots");
    auto* base = app.add_subcommand("baseline", "Solve the comparator LP and print V* and q*");
    auto* check = app.add_subcommand("check", "Run with diagnostics and print the invariant suite");
    for (auto* sub : {run, base, check}) {
        sub->add_option("config", config_path, "JSON config file")->required();
        sub->add_option("--out-dir", out_dir, "Override output.dir");
        sub->add_flag("--quiet", quiet, "Suppress progress output");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (*base) return cmd_baseline(cfg);
        if (*check) return cmd_check(cfg, quiet);
        const auto res = run_experiment(cfg, quiet);
        if (!quiet) std::fprintf(stderr, "artifacts in %s (exit %d)\n", cfg.output_dir.c_str(), res.exit_code);
        return res.exit_code;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const ConvergenceError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
