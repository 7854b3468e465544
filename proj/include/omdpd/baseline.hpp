#pragma once

#include "omdpd/cmdp.hpp"
#include "omdpd/polytope.hpp"
#include "omdpd/simplex.hpp"

#include <span>
#include <vector>

namespace omdpd {

/// Offline comparator: best occupancy under the true kernel and the given cost constraints.
struct BaselineSolution {
    ExtendedOccupancy q;
    std::vector<double> marginal; // [H][S][A]
    double value = 0.0;           // rbar^T q*
    double duality_gap = 0.0;
    std::size_t active_constraints = 0; // rows the cutting-plane loop needed
    int pivots = 0;
};

inline constexpr double kBaselineGapTol = 1e-8;

namespace detail {

/// LP over marginals q_h(s,a) with flow conservation under `transitions`.
inline LinearProgram occupancy_lp(const TabularCMDP& env, std::span<const double> objective) {
    const Dims& d = env.dims;
    const auto n = Eigen::Index(d.sa_size());
    LinearProgram lp;
    lp.c = Eigen::Map<const Eigen::VectorXd>(objective.data(), n);
    lp.a_eq = Eigen::MatrixXd::Zero(Eigen::Index(d.horizon) * d.states, n);
    lp.b_eq = Eigen::VectorXd::Zero(lp.a_eq.rows());
    for (int h = 0; h < d.horizon; ++h)
        for (int s = 0; s < d.states; ++s) {
            const Eigen::Index row = Eigen::Index(h) * d.states + s;
            for (int a = 0; a < d.actions; ++a) lp.a_eq(row, Eigen::Index(d.idx(h, s, a))) = 1.0;
            if (h == 0) {
                lp.b_eq[row] = env.init[s];
            } else {
                for (int sp = 0; sp < d.states; ++sp)
                    for (int a = 0; a < d.actions; ++a)
                        lp.a_eq(row, Eigen::Index(d.idx(h - 1, sp, a))) -=
                            env.transitions[d.idx(h - 1, sp, a, s)];
            }
        }
    lp.a_le.resize(0, n);
    lp.b_le.resize(0);
    return lp;
}

} // namespace detail

/// max rbar^T q over occupancies of the true kernel subject to cost^T q <= bound
/// for every supplied constraint. Constraints enter lazily (most violated first),
/// so long adversarial constraint lists stay cheap; the final basis certifies
/// optimality for the full list.
inline BaselineSolution solve_baseline_lp(const TabularCMDP& env,
                                          std::span<const LinearConstraint> constraints) {
    env.validate();
    const Dims& d = env.dims;
    for (const auto& c : constraints) {
        expect_size(c.cost, d.sa_size(), "cost constraint");
        if (!all_finite(c.cost) || !std::isfinite(c.bound))
            throw ValidationError("cost constraint is not finite");
    }
    LinearProgram lp = detail::occupancy_lp(env, env.mean_reward);
    const auto n = Eigen::Index(d.sa_size());
    std::vector<std::size_t> included;
    std::vector<bool> in(constraints.size(), false);

    for (;;) {
        const LpSolution sol = solve_lp(lp);
        double worst = 1e-10;
        std::ptrdiff_t arg = -1;
        for (std::size_t k = 0; k < constraints.size(); ++k) {
            if (in[k]) continue;
            const double v = dot(constraints[k].cost, std::span<const double>(sol.x.data(), sol.x.size())) -
                             constraints[k].bound;
            if (v > worst) {
                worst = v;
                arg = std::ptrdiff_t(k);
            }
        }
        if (arg < 0) {
            if (sol.duality_gap > kBaselineGapTol || sol.primal_infeasibility > 1e-9 ||
                sol.dual_infeasibility > 1e-9)
                throw ConvergenceError("baseline LP optimality certificate failed",
                                       std::max({sol.duality_gap, sol.primal_infeasibility,
                                                 sol.dual_infeasibility}));
            BaselineSolution out;
            out.marginal.assign(sol.x.data(), sol.x.data() + n);
            out.value = sol.objective;
            out.duality_gap = sol.duality_gap;
            out.active_constraints = included.size();
            out.pivots = sol.pivots;
            out.q = {d, std::vector<double>(d.sas_size())};
            for (std::size_t i = 0; i < d.sa_size(); ++i)
                for (int x = 0; x < d.states; ++x)
                    out.q.q[i * d.states + x] = out.marginal[i] * env.transitions[i * d.states + x];
            return out;
        }
        in[std::size_t(arg)] = true;
        included.push_back(std::size_t(arg));
        const Eigen::Index r = lp.a_le.rows();
        lp.a_le.conservativeResize(r + 1, n);
        lp.b_le.conservativeResize(r + 1);
        lp.a_le.row(r) = Eigen::Map<const Eigen::RowVectorXd>(constraints[std::size_t(arg)].cost.data(), n);
        lp.b_le[r] = constraints[std::size_t(arg)].bound;
    }
}

} // namespace omdpd
