#pragma once

#include "omdpd/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace omdpd {

/// maximize c^T x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  x >= 0.
struct LinearProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd a_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd a_le;
    Eigen::VectorXd b_le;
};

struct LpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd y_eq; // duals of the equality rows
    Eigen::VectorXd y_le; // duals of the inequality rows, >= 0
    double objective = 0.0;
    double duality_gap = 0.0;        // |b^T y - c^T x|
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0; // max violation of A^T y >= c, y_le >= 0
    int pivots = 0;
};

/// Dense two-phase primal simplex with Bland's rule (lowest-index entering
/// column, lowest-index basic variable on ratio ties). Duals are recovered
/// from the final basis against the original data, so the returned gap is an
/// independent optimality certificate.
class DenseSimplex {
public:
    explicit DenseSimplex(double eps = 1e-11) : eps_(eps) {}

    LpSolution solve(const LinearProgram& lp) {
        const Eigen::Index n = lp.c.size();
        const Eigen::Index me = lp.a_eq.rows();
        const Eigen::Index ml = lp.a_le.rows();
        if ((me > 0 && lp.a_eq.cols() != n) || (ml > 0 && lp.a_le.cols() != n) ||
            lp.b_eq.size() != me || lp.b_le.size() != ml)
            throw StructuralError("linear program dimensions are inconsistent");
        const Eigen::Index m = me + ml;

        // Columns: structural [0,n), slacks [n, n+ml), artificials after.
        std::vector<Eigen::Index> art_rows;
        for (Eigen::Index i = 0; i < me; ++i) art_rows.push_back(i);
        for (Eigen::Index i = 0; i < ml; ++i)
            if (lp.b_le[i] < 0.0) art_rows.push_back(me + i);
        const Eigen::Index na = Eigen::Index(art_rows.size());
        const Eigen::Index ncols = n + ml + na;
        first_art_ = n + ml;

        t_ = Eigen::MatrixXd::Zero(m, ncols + 1);
        basis_.assign(std::size_t(m), -1);
        for (Eigen::Index i = 0; i < me; ++i) {
            const double sign = lp.b_eq[i] < 0.0 ? -1.0 : 1.0;
            t_.row(i).head(n) = sign * lp.a_eq.row(i);
            t_(i, ncols) = sign * lp.b_eq[i];
        }
        for (Eigen::Index i = 0; i < ml; ++i) {
            const double sign = lp.b_le[i] < 0.0 ? -1.0 : 1.0;
            t_.row(me + i).head(n) = sign * lp.a_le.row(i);
            t_(me + i, n + i) = sign;
            t_(me + i, ncols) = sign * lp.b_le[i];
            if (sign > 0.0) basis_[std::size_t(me + i)] = n + i;
        }
        for (Eigen::Index k = 0; k < na; ++k) {
            t_(art_rows[k], first_art_ + k) = 1.0;
            basis_[std::size_t(art_rows[k])] = first_art_ + k;
        }
        active_.assign(std::size_t(m), true);
        pivots_ = 0;

        // Phase 1: maximize -sum(artificials).
        if (na > 0) {
            Eigen::VectorXd cost = Eigen::VectorXd::Zero(ncols);
            cost.tail(na).setConstant(-1.0);
            if (!run(cost, ncols)) throw Error("phase-one LP unbounded");
            double infeas = 0.0;
            for (Eigen::Index i = 0; i < m; ++i)
                if (active_[std::size_t(i)] && basis_[std::size_t(i)] >= first_art_)
                    infeas += t_(i, ncols);
            if (infeas > 1e-9) throw InfeasibleError("linear program is infeasible");
            drive_out_artificials(ncols);
        }

        // Phase 2 over structural and slack columns only.
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(ncols);
        cost.head(n) = lp.c;
        if (!run(cost, first_art_)) throw Error("linear program is unbounded");

        LpSolution sol;
        sol.pivots = pivots_;
        Eigen::VectorXd full = Eigen::VectorXd::Zero(ncols);
        for (Eigen::Index i = 0; i < m; ++i)
            if (active_[std::size_t(i)]) full[basis_[std::size_t(i)]] = t_(i, ncols);
        sol.x = full.head(n).cwiseMax(0.0);
        sol.objective = lp.c.dot(sol.x);
        recover_duals(lp, sol);
        return sol;
    }

private:
    /// Pivots to optimality for `cost` over columns [0, limit); false if unbounded.
    bool run(const Eigen::VectorXd& cost, Eigen::Index limit) {
        const Eigen::Index m = t_.rows();
        const Eigen::Index rhs = t_.cols() - 1;
        for (;;) {
            // Reduced cost d_j = c_j - c_B^T T_j; recomputed from scratch each pivot.
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < limit && enter < 0; ++j) {
                if (is_basic(j)) continue;
                double d = cost[j];
                for (Eigen::Index i = 0; i < m; ++i)
                    if (active_[std::size_t(i)]) d -= cost[basis_[std::size_t(i)]] * t_(i, j);
                if (d > eps_) enter = j;
            }
            if (enter < 0) return true;

            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < m; ++i) {
                if (!active_[std::size_t(i)]) continue;
                const double a = t_(i, enter);
                if (a <= 1e-12) continue;
                const double ratio = t_(i, rhs) / a;
                if (ratio < best - 1e-14 ||
                    (ratio <= best + 1e-14 && leave >= 0 &&
                     basis_[std::size_t(i)] < basis_[std::size_t(leave)])) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
    }

    bool is_basic(Eigen::Index j) const {
        for (std::size_t i = 0; i < basis_.size(); ++i)
            if (active_[i] && basis_[i] == j) return true;
        return false;
    }

    void pivot(Eigen::Index row, Eigen::Index col) {
        t_.row(row) /= t_(row, col);
        for (Eigen::Index i = 0; i < t_.rows(); ++i) {
            if (i == row || !active_[std::size_t(i)]) continue;
            const double f = t_(i, col);
            if (f != 0.0) t_.row(i) -= f * t_.row(row);
        }
        basis_[std::size_t(row)] = col;
        ++pivots_;
    }

    void drive_out_artificials(Eigen::Index ncols) {
        (void)ncols;
        for (Eigen::Index i = 0; i < t_.rows(); ++i) {
            if (basis_[std::size_t(i)] < first_art_) continue;
            Eigen::Index col = -1;
            for (Eigen::Index j = 0; j < first_art_ && col < 0; ++j)
                if (!is_basic(j) && std::abs(t_(i, j)) > 1e-9) col = j;
            if (col >= 0)
                pivot(i, col);
            else
                active_[std::size_t(i)] = false; // redundant row
        }
    }

    void recover_duals(const LinearProgram& lp, LpSolution& sol) const {
        const Eigen::Index n = lp.c.size();
        const Eigen::Index me = lp.a_eq.rows();
        const Eigen::Index ml = lp.a_le.rows();
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < me + ml; ++i)
            if (active_[std::size_t(i)]) rows.push_back(i);
        const Eigen::Index k = Eigen::Index(rows.size());

        auto column = [&](Eigen::Index j, Eigen::Index r) {
            if (j < n) return r < me ? lp.a_eq(r, j) : lp.a_le(r - me, j);
            return (r >= me && j - n == r - me) ? 1.0 : 0.0;
        };
        Eigen::MatrixXd bt(k, k);
        Eigen::VectorXd cb(k);
        for (Eigen::Index p = 0; p < k; ++p) {
            const Eigen::Index j = basis_[std::size_t(rows[p])];
            cb[p] = j < n ? lp.c[j] : 0.0;
            for (Eigen::Index q = 0; q < k; ++q) bt(p, q) = column(j, rows[q]);
        }
        const Eigen::VectorXd yk = bt.fullPivLu().solve(cb);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(me + ml);
        for (Eigen::Index q = 0; q < k; ++q) y[rows[q]] = yk[q];
        sol.y_eq = y.head(me);
        sol.y_le = y.tail(ml);

        Eigen::VectorXd aty = Eigen::VectorXd::Zero(n);
        if (me > 0) aty += lp.a_eq.transpose() * sol.y_eq;
        if (ml > 0) aty += lp.a_le.transpose() * sol.y_le;
        double dual_inf = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) dual_inf = std::max(dual_inf, lp.c[j] - aty[j]);
        for (Eigen::Index i = 0; i < ml; ++i) dual_inf = std::max(dual_inf, -sol.y_le[i]);
        sol.dual_infeasibility = dual_inf;

        double primal_inf = 0.0;
        if (me > 0) primal_inf = (lp.a_eq * sol.x - lp.b_eq).cwiseAbs().maxCoeff();
        if (ml > 0) primal_inf = std::max(primal_inf, (lp.a_le * sol.x - lp.b_le).maxCoeff());
        sol.primal_infeasibility = std::max(primal_inf, 0.0);

        double dual_obj = 0.0;
        if (me > 0) dual_obj += lp.b_eq.dot(sol.y_eq);
        if (ml > 0) dual_obj += lp.b_le.dot(sol.y_le);
        sol.duality_gap = std::abs(dual_obj - sol.objective);
    }

    double eps_;
    Eigen::MatrixXd t_;
    std::vector<Eigen::Index> basis_;
    std::vector<bool> active_;
    Eigen::Index first_art_ = 0;
    int pivots_ = 0;
};

inline LpSolution solve_lp(const LinearProgram& lp) { return DenseSimplex{}.solve(lp); }

} // namespace omdpd
