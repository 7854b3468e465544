#pragma once

#include "omdpd/cmdp.hpp"
#include "omdpd/estimator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace omdpd {

/// c^T q_marginal <= bound.
struct LinearConstraint {
    std::vector<double> cost; // [H][S][A]
    double bound = 0.0;
};

/// Extended occupancies consistent with some kernel in the box [low, high]:
/// flow conservation from `init`, q >= 0, and
/// low(s'|s,a) q_h(s,a) <= q_h(s,a,s') <= high(s'|s,a) q_h(s,a).
struct OccupancyPolytope {
    Dims dims;
    std::vector<double> init;
    std::vector<double> low;  // [H][S][A][S]
    std::vector<double> high; // [H][S][A][S]
    std::vector<LinearConstraint> extra;

    /// Box collapsed onto a known kernel.
    static OccupancyPolytope at_kernel(const Dims& d, std::span<const double> transitions,
                                       std::span<const double> init) {
        check_compatible(d, transitions, init);
        return {d, {init.begin(), init.end()}, {transitions.begin(), transitions.end()},
                {transitions.begin(), transitions.end()}, {}};
    }

    static OccupancyPolytope from_model(const OptimisticModel& m, std::span<const double> init) {
        expect_size(init, m.dims.states, "init");
        return {m.dims, {init.begin(), init.end()}, m.low, m.high, {}};
    }

    /// Throws InfeasibleError when some kernel row box misses the simplex.
    void validate() const {
        dims.validate();
        expect_size(init, dims.states, "init");
        expect_size(low, dims.sas_size(), "low");
        expect_size(high, dims.sas_size(), "high");
        for (const auto& c : extra) expect_size(c.cost, dims.sa_size(), "extra constraint");
        if (!is_distribution(init, kInputTol)) throw ValidationError("init is not a distribution");
        for (std::size_t b = 0; b < dims.sa_size(); ++b) {
            double lo = 0.0, hi = 0.0;
            for (int n = 0; n < dims.states; ++n) {
                const double l = low[b * dims.states + n], u = high[b * dims.states + n];
                if (!(l >= 0.0 && l <= u + kInputTol && u <= 1.0 + kInputTol))
                    throw InfeasibleError("kernel bounds are inverted or outside [0,1]");
                lo += l;
                hi += u;
            }
            if (lo > 1.0 + 1e-10 || hi < 1.0 - 1e-10)
                throw InfeasibleError("kernel box does not intersect the simplex");
        }
    }

    /// Largest violation of any constraint at q.
    double violation(const ExtendedOccupancy& occ) const {
        double worst = occ.invariant_violation(init);
        const std::size_t S = dims.states;
        for (std::size_t b = 0; b < dims.sa_size(); ++b) {
            double t = 0.0;
            for (std::size_t n = 0; n < S; ++n) t += occ.q[b * S + n];
            for (std::size_t n = 0; n < S; ++n) {
                const double x = occ.q[b * S + n];
                worst = std::max({worst, low[b * S + n] * t - x, x - high[b * S + n] * t});
            }
        }
        if (!extra.empty()) {
            const auto m = occ.marginal();
            for (const auto& c : extra) worst = std::max(worst, dot(c.cost, m) - c.bound);
        }
        return std::max(worst, 0.0);
    }
};

/// A kernel inside the box: low + theta (high - low) with theta fixing unit row mass.
inline std::vector<double> interior_kernel(const OccupancyPolytope& poly) {
    const std::size_t S = poly.dims.states;
    std::vector<double> p(poly.dims.sas_size());
    for (std::size_t b = 0; b < poly.dims.sa_size(); ++b) {
        double lo = 0.0, hi = 0.0;
        for (std::size_t n = 0; n < S; ++n) {
            lo += poly.low[b * S + n];
            hi += poly.high[b * S + n];
        }
        const double theta = hi - lo > 1e-15 ? std::clamp((1.0 - lo) / (hi - lo), 0.0, 1.0) : 0.0;
        double sum = 0.0;
        for (std::size_t n = 0; n < S; ++n) {
            const std::size_t j = b * S + n;
            p[j] = poly.low[j] + theta * (poly.high[j] - poly.low[j]);
            sum += p[j];
        }
        for (std::size_t n = 0; n < S; ++n) p[b * S + n] /= sum;
    }
    return p;
}

/// Occupancy of `policy` under a kernel from the box; used to seed the learner.
inline ExtendedOccupancy nominal_occupancy(const OccupancyPolytope& poly, const Policy& policy) {
    poly.validate();
    if (policy.dims != poly.dims) throw StructuralError("policy dims do not match polytope");
    return policy_to_occupancy(policy, interior_kernel(poly), poly.init);
}

struct ProjectionOptions {
    double tol = kOptimizerTol;
    int max_iterations = 0; // 0 selects 50 * dimension
    double sigma = 1e-6;
    double relaxation = 1.6;
    double initial_rho = 0.1;
    int check_every = 5;
    double adapt_ratio = 5.0;
    double polish_below = 1e-5; // try an active-set solve once the residual is this small
    int polish_every = 100;
    int polish_rounds = 40;
};

struct ProjectionResult {
    ExtendedOccupancy q;
    double residual = 0.0;
    int iterations = 0;
};

/// Clips negatives and rescales each (h,s) out-flow group to its exact in-flow.
/// Scaling a block keeps the homogeneous kernel-box rows intact, so this only
/// removes the solver's residual equality error.
inline void restore_flow(const OccupancyPolytope& poly, ExtendedOccupancy& occ) {
    const Dims& d = poly.dims;
    for (double& v : occ.q) v = std::max(v, 0.0);
    std::vector<double> inflow(poly.init), fallback;
    for (int h = 0; h < d.horizon; ++h) {
        std::vector<double> next(d.states, 0.0);
        for (int s = 0; s < d.states; ++s) {
            double out = 0.0;
            for (int a = 0; a < d.actions; ++a)
                for (int n = 0; n < d.states; ++n) out += occ.q[d.idx(h, s, a, n)];
            if (out > 0.0) {
                const double scale = inflow[s] / out;
                for (int a = 0; a < d.actions; ++a)
                    for (int n = 0; n < d.states; ++n) occ.q[d.idx(h, s, a, n)] *= scale;
            } else if (inflow[s] > 0.0) {
                if (fallback.empty()) fallback = interior_kernel(poly);
                for (int a = 0; a < d.actions; ++a)
                    for (int n = 0; n < d.states; ++n)
                        occ.q[d.idx(h, s, a, n)] = inflow[s] / d.actions * fallback[d.idx(h, s, a, n)];
            }
            for (int a = 0; a < d.actions; ++a)
                for (int n = 0; n < d.states; ++n) next[n] += occ.q[d.idx(h, s, a, n)];
        }
        inflow = std::move(next);
    }
}

namespace detail {

/// Lawson-Hanson nonnegative least squares: argmin ||a x - b|| over x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol = 1e-14) {
    const Eigen::Index n = a.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(std::size_t(n), false);
    for (int outer = 0; outer < 3 * int(n) + 10; ++outer) {
        const Eigen::VectorXd w = a.transpose() * (b - a * x);
        Eigen::Index j = -1;
        double best = tol;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!passive[std::size_t(i)] && w[i] > best) best = w[i], j = i;
        if (j < 0) break;
        passive[std::size_t(j)] = true;
        for (int inner = 0; inner < 3 * int(n) + 10; ++inner) {
            std::vector<Eigen::Index> ids;
            for (Eigen::Index i = 0; i < n; ++i)
                if (passive[std::size_t(i)]) ids.push_back(i);
            Eigen::MatrixXd ap(a.rows(), Eigen::Index(ids.size()));
            for (std::size_t k = 0; k < ids.size(); ++k) ap.col(Eigen::Index(k)) = a.col(ids[k]);
            const Eigen::VectorXd zp = ap.completeOrthogonalDecomposition().solve(b);
            if (zp.minCoeff() > 0.0) {
                x.setZero();
                for (std::size_t k = 0; k < ids.size(); ++k) x[ids[k]] = zp[Eigen::Index(k)];
                break;
            }
            double step = 1.0;
            for (std::size_t k = 0; k < ids.size(); ++k)
                if (zp[Eigen::Index(k)] <= 0.0)
                    step = std::min(step, x[ids[k]] / (x[ids[k]] - zp[Eigen::Index(k)]));
            for (std::size_t k = 0; k < ids.size(); ++k) {
                x[ids[k]] += step * (zp[Eigen::Index(k)] - x[ids[k]]);
                if (x[ids[k]] <= 1e-300) {
                    x[ids[k]] = 0.0;
                    passive[std::size_t(ids[k])] = false;
                }
            }
        }
    }
    return x;
}

} // namespace detail

/// Euclidean projection onto an OccupancyPolytope by operator splitting (ADMM).
///
/// Rows split into a low-rank group (flow equalities plus extra cost rows) and
/// per-(h,s,a) cone rows {x >= 0, x - l t >= 0, u t - x >= 0} with t = sum x.
/// The cone rows make the x-system block diagonal, and the low-rank group is
/// folded in with the Woodbury identity, so each iteration is O(n S).
/// Iterates persist between calls and warm-start the next projection.
class ProjectionSolver {
public:
    ProjectionResult project(const OccupancyPolytope& poly, std::span<const double> point,
                             const ProjectionOptions& opt = {}) {
        poly.validate();
        expect_size(point, poly.dims.sas_size(), "projection point");
        if (!all_finite(point)) throw ValidationError("projection point is not finite");
        setup(poly);

        const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : int(50 * n_);
        double residual = std::numeric_limits<double>::infinity();
        int used = 0;
        if (warm_) {
            // Warm attempt on a fifth of the budget, then a cold restart with the full budget.
            used = iterate(point, opt, std::max(max_iter / 5, 1), residual);
            if (!(residual <= opt.tol)) warm_ = false;
        }
        if (!warm_) {
            cold_start(point, opt);
            used += iterate(point, opt, max_iter, residual);
        }
        if (!(residual <= opt.tol)) {
            warm_ = false;
            throw ConvergenceError("projection did not reach tolerance in " + std::to_string(used) +
                                       " iterations",
                                   residual);
        }
        ProjectionResult res{{poly.dims, x_}, residual, used};
        restore_flow(poly, res.q);
        return res;
    }

    /// Drops the warm start.
    void reset() { warm_ = false; }

private:
    void cold_start(std::span<const double> point, const ProjectionOptions& opt) {
        x_.assign(point.begin(), point.end());
        z_.assign(rows(), 0.0);
        apply_a(x_, z_);
        clip(z_);
        y_.assign(rows(), 0.0);
        rho_ = opt.initial_rho;
        warm_ = true;
    }

    /// Runs up to `budget` ADMM iterations from the current iterates; returns the count used.
    int iterate(std::span<const double> point, const ProjectionOptions& opt, int budget, double& residual) {
        const std::size_t n = n_;
        const std::size_t m = rows();
        sigma_ = opt.sigma;
        if (factored_rho_ != rho_) factor();
        std::vector<double> rhs(n), xt(n), zt(m), w(m), aty(n), ax(m);
        residual = std::numeric_limits<double>::infinity();
        int next_polish = 0;
        int it = 0;
        for (; it < budget; ++it) {
            for (std::size_t r = 0; r < m; ++r) w[r] = row_rho(r) * z_[r] - y_[r];
            apply_at(w, rhs);
            for (std::size_t j = 0; j < n; ++j) rhs[j] += sigma_ * x_[j] + point[j];
            solve(rhs, xt);
            apply_a(xt, zt);
            const double al = opt.relaxation;
            for (std::size_t j = 0; j < n; ++j) x_[j] = al * xt[j] + (1.0 - al) * x_[j];
            for (std::size_t r = 0; r < m; ++r) {
                const double zr = al * zt[r] + (1.0 - al) * z_[r];
                const double rho = row_rho(r);
                const double zn = std::clamp(zr + y_[r] / rho, lo_[r], hi_[r]);
                y_[r] += rho * (zr - zn);
                z_[r] = zn;
            }

            if ((it + 1) % opt.check_every != 0) continue;
            apply_a(x_, ax);
            apply_at(y_, aty);
            double rp = 0.0, rd = 0.0, ax_norm = 0.0, z_norm = 0.0, aty_norm = 0.0, x_norm = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                rp = std::max(rp, std::abs(ax[r] - z_[r]));
                ax_norm = std::max(ax_norm, std::abs(ax[r]));
                z_norm = std::max(z_norm, std::abs(z_[r]));
            }
            for (std::size_t j = 0; j < n; ++j) {
                rd = std::max(rd, std::abs(x_[j] - point[j] + aty[j]));
                aty_norm = std::max(aty_norm, std::abs(aty[j]));
                x_norm = std::max({x_norm, std::abs(x_[j]), std::abs(point[j])});
            }
            residual = std::max(rp, rd);
            if (residual <= opt.tol) return it + 1;
            if (residual < opt.polish_below && it + 1 >= next_polish) {
                next_polish = it + 1 + opt.polish_every;
                if (polish(point, opt.tol, opt.polish_rounds, residual)) return it + 1;
            }
            const double scaled_p = rp / std::max({ax_norm, z_norm, 1e-12});
            const double scaled_d = rd / std::max({aty_norm, x_norm, 1e-12});
            const double rho_new =
                std::clamp(rho_ * std::sqrt(scaled_p / std::max(scaled_d, 1e-300)), 1e-6, 1e6);
            if (rho_new > opt.adapt_ratio * rho_ || rho_new * opt.adapt_ratio < rho_) {
                rho_ = rho_new;
                factor();
            }
        }
        return it;
    }

    /// Solves the projection exactly on an active set guessed from the ADMM
    /// iterates, refining the guess a few times, and keeps the result only if
    /// it is a KKT point within `tol`.
    bool polish(std::span<const double> point, double tol, int rounds, double& residual) {
        const std::size_t m = rows();
        std::vector<signed char> act(m, 0); // -1 at lower bound (or equality), +1 at upper bound
        for (std::size_t r = 0; r < m; ++r) {
            if (lo_[r] == hi_[r] || z_[r] - lo_[r] < -y_[r])
                act[r] = -1;
            else if (hi_[r] - z_[r] < y_[r])
                act[r] = 1;
        }
        std::vector<double> x, y, ax(m), aty(n_);
        std::vector<char> drop;
        for (int round = 0; round < rounds; ++round) {
            double bad = active_set_solve(point, act, tol, x, y, drop);
            apply_a(x, ax);
            apply_at(y, aty);
            bool changed = false;
            for (std::size_t r = 0; r < m; ++r) {
                const double over = std::max(lo_[r] - ax[r], ax[r] - hi_[r]);
                bad = std::max(bad, over);
                if (over > tol && act[r] == 0) {
                    act[r] = lo_[r] - ax[r] > 0.0 ? -1 : 1;
                    changed = true;
                }
                if (drop[r]) {
                    act[r] = 0;
                    changed = true;
                }
            }
            for (std::size_t j = 0; j < n_; ++j) bad = std::max(bad, std::abs(x[j] - point[j] + aty[j]));
            if (bad <= tol) {
                x_ = std::move(x);
                y_ = std::move(y);
                for (std::size_t r = 0; r < m; ++r) z_[r] = std::clamp(ax[r], lo_[r], hi_[r]);
                residual = bad;
                return true;
            }
            if (!changed) break;
        }
        return false;
    }

    /// Projection with the rows in `act` held at their bounds. Active cone rows
    /// confine each block to a subspace and the low-rank rows are handled in
    /// that reduced space. Returns the multiplier error; `drop` marks active
    /// rows whose multiplier has the wrong sign or is not needed.
    double active_set_solve(std::span<const double> point, const std::vector<signed char>& act, double tol,
                            std::vector<double>& x, std::vector<double>& y, std::vector<char>& drop) {
        const std::size_t S = dims_.states;
        const std::size_t L = lowrank_.size();
        const std::size_t nb = dims_.sa_size();
        const std::size_t m = rows();
        drop.assign(m, 0);

        std::vector<Eigen::MatrixXd> basis(nb), brows(nb);
        std::vector<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr(nb);
        std::vector<std::vector<std::size_t>> bidx(nb);
        std::vector<std::size_t> offset(nb + 1, 0);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t c = 0; c < 3; ++c)
                    if (act[L + 3 * (b * S + i) + c]) bidx[b].push_back(L + 3 * (b * S + i) + c);
            Eigen::MatrixXd bm = Eigen::MatrixXd::Zero(Eigen::Index(bidx[b].size()), Eigen::Index(S));
            for (std::size_t k = 0; k < bidx[b].size(); ++k) {
                const std::size_t cell = (bidx[b][k] - L) / 3, i = cell - b * S;
                const auto row = Eigen::Index(k);
                switch ((bidx[b][k] - L) % 3) {
                case 0: bm(row, Eigen::Index(i)) = 1.0; break;
                case 1: bm.row(row).setConstant(-low_[cell]); bm(row, Eigen::Index(i)) += 1.0; break;
                default: bm.row(row).setConstant(high_[cell]); bm(row, Eigen::Index(i)) -= 1.0; break;
                }
            }
            if (bidx[b].empty()) {
                basis[b] = Eigen::MatrixXd::Identity(Eigen::Index(S), Eigen::Index(S));
            } else {
                qr[b].setThreshold(1e-12);
                qr[b].compute(bm.transpose());
                const Eigen::MatrixXd q = qr[b].householderQ();
                basis[b] = q.rightCols(Eigen::Index(S) - qr[b].rank());
            }
            brows[b] = std::move(bm);
            offset[b + 1] = offset[b] + std::size_t(basis[b].cols());
        }

        std::vector<std::size_t> lr;
        for (std::size_t r = 0; r < L; ++r)
            if (act[r]) lr.push_back(r);
        const auto dim = Eigen::Index(offset[nb]);
        const auto nl = Eigen::Index(lr.size());
        Eigen::VectorXd w0(dim);
        for (std::size_t b = 0; b < nb; ++b)
            if (basis[b].cols() > 0)
                w0.segment(Eigen::Index(offset[b]), basis[b].cols()) =
                    basis[b].transpose() *
                    Eigen::Map<const Eigen::VectorXd>(point.data() + b * S, Eigen::Index(S));
        Eigen::MatrixXd mz = Eigen::MatrixXd::Zero(nl, dim);
        Eigen::VectorXd rhs(nl);
        Eigen::VectorXd urow = Eigen::VectorXd::Zero(Eigen::Index(n_));
        for (Eigen::Index k = 0; k < nl; ++k) {
            const std::size_t r = lr[std::size_t(k)];
            const auto& row = lowrank_[r];
            for (std::size_t j = 0; j < row.cols.size(); ++j) urow[Eigen::Index(row.cols[j])] += row.vals[j];
            for (std::size_t b = 0; b < nb; ++b)
                if (basis[b].cols() > 0)
                    mz.block(k, Eigen::Index(offset[b]), 1, basis[b].cols()) =
                        urow.segment(Eigen::Index(b * S), Eigen::Index(S)).transpose() * basis[b];
            for (std::size_t j = 0; j < row.cols.size(); ++j) urow[Eigen::Index(row.cols[j])] = 0.0;
            rhs[k] = act[r] < 0 ? lo_[r] : hi_[r];
        }
        // Dependent rows: multipliers closest to the ADMM duals.
        Eigen::VectorXd mu(nl);
        for (Eigen::Index k = 0; k < nl; ++k) mu[k] = y_[lr[std::size_t(k)]];
        if (nl > 0) {
            const Eigen::MatrixXd g = mz * mz.transpose();
            mu += g.completeOrthogonalDecomposition().solve(mz * w0 - rhs - g * mu);
        }
        const Eigen::VectorXd w = w0 - mz.transpose() * mu;

        x.assign(n_, 0.0);
        y.assign(m, 0.0);
        for (std::size_t b = 0; b < nb; ++b)
            if (basis[b].cols() > 0)
                Eigen::Map<Eigen::VectorXd>(x.data() + b * S, Eigen::Index(S)) =
                    basis[b] * w.segment(Eigen::Index(offset[b]), basis[b].cols());
        double bad = 0.0;
        for (Eigen::Index k = 0; k < nl; ++k) {
            const std::size_t r = lr[std::size_t(k)];
            y[r] = mu[k];
            if (lo_[r] != hi_[r] && double(act[r]) * -mu[k] > tol) {
                bad = std::max(bad, double(act[r]) * -mu[k]);
                drop[r] = 1;
            }
        }
        std::vector<double> aty(n_);
        apply_at(y, aty);
        for (std::size_t b = 0; b < nb; ++b) {
            if (bidx[b].empty()) continue;
            Eigen::VectorXd v(static_cast<Eigen::Index>(S));
            for (std::size_t i = 0; i < S; ++i) v[Eigen::Index(i)] = point[b * S + i] - x[b * S + i] - aty[b * S + i];
            const Eigen::MatrixXd bt = brows[b].transpose();
            const bool independent = qr[b].rank() == Eigen::Index(bidx[b].size());
            const Eigen::VectorXd lam = independent ? Eigen::VectorXd(qr[b].solve(-v)) : detail::nnls(bt, -v);
            const double miss = (bt * lam + v).cwiseAbs().maxCoeff();
            bad = std::max({bad, miss, -lam.minCoeff()});
            for (std::size_t k = 0; k < bidx[b].size(); ++k) {
                const double lk = lam[Eigen::Index(k)];
                y[bidx[b][k]] = -lk;
                if (lk < -tol || (miss > tol && lk == 0.0)) drop[bidx[b][k]] = 1;
            }
        }
        return bad;
    }

    struct SparseRow {
        std::vector<std::size_t> cols;
        std::vector<double> vals;
    };

    std::size_t rows() const { return lowrank_.size() + 3 * n_; }
    double row_rho(std::size_t r) const {
        return r < lowrank_.size() ? rho_ * lowrank_scale_[r] : rho_;
    }

    void clip(std::vector<double>& z) const {
        for (std::size_t r = 0; r < z.size(); ++r) z[r] = std::clamp(z[r], lo_[r], hi_[r]);
    }

    /// Rebuilds row structure when the polytope changed; keeps iterates if the shape is unchanged.
    void setup(const OccupancyPolytope& poly) {
        const bool same_shape = poly.dims == dims_ && poly.extra.size() == extra_count_;
        const bool same_data = same_shape && poly.low == low_ && poly.high == high_ &&
                               poly.init == init_ && same_extra(poly);
        if (same_data) return;
        if (!same_shape) warm_ = false;
        dims_ = poly.dims;
        low_ = poly.low;
        high_ = poly.high;
        init_ = poly.init;
        extra_count_ = poly.extra.size();
        extra_ = poly.extra;
        n_ = dims_.sas_size();
        const Dims& d = dims_;

        lowrank_.clear();
        lowrank_scale_.clear();
        lo_.clear();
        hi_.clear();
        for (int h = 0; h < d.horizon; ++h)
            for (int s = 0; s < d.states; ++s) {
                SparseRow row;
                for (int a = 0; a < d.actions; ++a)
                    for (int x = 0; x < d.states; ++x) {
                        row.cols.push_back(d.idx(h, s, a, x));
                        row.vals.push_back(1.0);
                    }
                if (h > 0)
                    for (int sp = 0; sp < d.states; ++sp)
                        for (int a = 0; a < d.actions; ++a) {
                            row.cols.push_back(d.idx(h - 1, sp, a, s));
                            row.vals.push_back(-1.0);
                        }
                const double rhs = h == 0 ? init_[s] : 0.0;
                lowrank_.push_back(std::move(row));
                lowrank_scale_.push_back(1e3);
                lo_.push_back(rhs);
                hi_.push_back(rhs);
            }
        for (const auto& c : extra_) {
            SparseRow row;
            for (std::size_t i = 0; i < d.sa_size(); ++i)
                for (int x = 0; x < d.states; ++x) {
                    row.cols.push_back(i * d.states + x);
                    row.vals.push_back(c.cost[i]);
                }
            lowrank_.push_back(std::move(row));
            lowrank_scale_.push_back(1.0);
            lo_.push_back(-std::numeric_limits<double>::infinity());
            hi_.push_back(c.bound);
        }
        lo_.resize(rows(), 0.0);
        hi_.resize(rows(), std::numeric_limits<double>::infinity());
        if (warm_ && z_.size() != rows()) warm_ = false;
        factored_rho_ = -1.0;
    }

    bool same_extra(const OccupancyPolytope& poly) const {
        for (std::size_t i = 0; i < extra_.size(); ++i)
            if (extra_[i].cost != poly.extra[i].cost || extra_[i].bound != poly.extra[i].bound)
                return false;
        return true;
    }

    /// out = A x.
    void apply_a(std::span<const double> x, std::span<double> out) const {
        const std::size_t L = lowrank_.size();
        for (std::size_t r = 0; r < L; ++r) {
            double acc = 0.0;
            const auto& row = lowrank_[r];
            for (std::size_t k = 0; k < row.cols.size(); ++k) acc += row.vals[k] * x[row.cols[k]];
            out[r] = acc;
        }
        const std::size_t S = dims_.states;
        for (std::size_t b = 0; b < dims_.sa_size(); ++b) {
            const std::size_t base = b * S;
            double t = 0.0;
            for (std::size_t i = 0; i < S; ++i) t += x[base + i];
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t r = L + 3 * (base + i);
                const double xi = x[base + i];
                out[r] = xi;
                out[r + 1] = xi - low_[base + i] * t;
                out[r + 2] = high_[base + i] * t - xi;
            }
        }
    }

    /// out = A^T w.
    void apply_at(std::span<const double> w, std::span<double> out) const {
        const std::size_t L = lowrank_.size();
        const std::size_t S = dims_.states;
        for (std::size_t b = 0; b < dims_.sa_size(); ++b) {
            const std::size_t base = b * S;
            double c = 0.0;
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t r = L + 3 * (base + i);
                c += -low_[base + i] * w[r + 1] + high_[base + i] * w[r + 2];
            }
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t r = L + 3 * (base + i);
                out[base + i] = w[r] + w[r + 1] - w[r + 2] + c;
            }
        }
        for (std::size_t r = 0; r < L; ++r) {
            const auto& row = lowrank_[r];
            for (std::size_t k = 0; k < row.cols.size(); ++k) out[row.cols[k]] += row.vals[k] * w[r];
        }
    }

    /// out = D^{-1} v, D block diagonal.
    void apply_dinv(std::span<const double> v, std::span<double> out) const {
        const std::size_t S = dims_.states;
        for (std::size_t b = 0; b < dims_.sa_size(); ++b) {
            const double* inv = dinv_.data() + b * S * S;
            for (std::size_t i = 0; i < S; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < S; ++j) acc += inv[i * S + j] * v[b * S + j];
                out[b * S + i] = acc;
            }
        }
    }

    /// Factors (1+sigma) I + A^T R A for the current rho.
    void factor() {
        const std::size_t S = dims_.states;
        const std::size_t L = lowrank_.size();
        dinv_.assign(dims_.sa_size() * S * S, 0.0);
        Eigen::MatrixXd block(S, S);
        for (std::size_t b = 0; b < dims_.sa_size(); ++b) {
            double sq = 0.0;
            for (std::size_t i = 0; i < S; ++i)
                sq += low_[b * S + i] * low_[b * S + i] + high_[b * S + i] * high_[b * S + i];
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t j = 0; j < S; ++j) {
                    const double si = low_[b * S + i] + high_[b * S + i];
                    const double sj = low_[b * S + j] + high_[b * S + j];
                    const double gtg = (i == j ? 3.0 : 0.0) - si - sj + sq;
                    block(i, j) = rho_ * gtg + (i == j ? 1.0 + sigma_ : 0.0);
                }
            const Eigen::MatrixXd inv = block.llt().solve(Eigen::MatrixXd::Identity(S, S));
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t j = 0; j < S; ++j) dinv_[b * S * S + i * S + j] = inv(i, j);
        }

        // W = D^{-1} U^T, sparse over the blocks each low-rank row touches;
        // capacitance = R^{-1} + U W.
        w_cols_.assign(L, SparseRow{});
        std::vector<double> urow(n_, 0.0), wrow(n_, 0.0);
        std::vector<char> touched(dims_.sa_size(), 0);
        for (std::size_t r = 0; r < L; ++r) {
            const auto& row = lowrank_[r];
            for (std::size_t k = 0; k < row.cols.size(); ++k) {
                urow[row.cols[k]] += row.vals[k];
                touched[row.cols[k] / S] = 1;
            }
            for (std::size_t b = 0; b < dims_.sa_size(); ++b) {
                if (!touched[b]) continue;
                const double* inv = dinv_.data() + b * S * S;
                for (std::size_t i = 0; i < S; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < S; ++j) acc += inv[i * S + j] * urow[b * S + j];
                    w_cols_[r].cols.push_back(b * S + i);
                    w_cols_[r].vals.push_back(acc);
                }
            }
            for (std::size_t k = 0; k < row.cols.size(); ++k) {
                urow[row.cols[k]] = 0.0;
                touched[row.cols[k] / S] = 0;
            }
        }
        Eigen::MatrixXd cap(L, L);
        for (std::size_t r2 = 0; r2 < L; ++r2) {
            const auto& col = w_cols_[r2];
            for (std::size_t k = 0; k < col.cols.size(); ++k) wrow[col.cols[k]] = col.vals[k];
            for (std::size_t r1 = 0; r1 < L; ++r1) {
                const auto& row = lowrank_[r1];
                double acc = 0.0;
                for (std::size_t k = 0; k < row.cols.size(); ++k) acc += row.vals[k] * wrow[row.cols[k]];
                cap(r1, r2) = acc + (r1 == r2 ? 1.0 / (rho_ * lowrank_scale_[r1]) : 0.0);
            }
            for (std::size_t k = 0; k < col.cols.size(); ++k) wrow[col.cols[k]] = 0.0;
        }
        cap_ = cap.llt();
        cap_t_.resize(L);
        cap_s_.resize(L);
        factored_rho_ = rho_;
    }

    /// out = ((1+sigma) I + A^T R A)^{-1} rhs.
    void solve(std::span<const double> rhs, std::span<double> out) {
        apply_dinv(rhs, out);
        const std::size_t L = lowrank_.size();
        if (L == 0) return;
        for (std::size_t r = 0; r < L; ++r) {
            const auto& row = lowrank_[r];
            double acc = 0.0;
            for (std::size_t k = 0; k < row.cols.size(); ++k) acc += row.vals[k] * out[row.cols[k]];
            cap_t_[r] = acc;
        }
        cap_s_ = cap_t_;
        cap_.solveInPlace(cap_s_);
        for (std::size_t r = 0; r < L; ++r) {
            const auto& col = w_cols_[r];
            const double sr = cap_s_[r];
            for (std::size_t k = 0; k < col.cols.size(); ++k) out[col.cols[k]] -= col.vals[k] * sr;
        }
    }

    Dims dims_{};
    std::size_t n_ = 0;
    std::vector<double> low_, high_, init_;
    std::vector<LinearConstraint> extra_;
    std::size_t extra_count_ = 0;
    std::vector<SparseRow> lowrank_;
    std::vector<double> lowrank_scale_;
    std::vector<double> lo_, hi_;

    std::vector<double> dinv_;
    std::vector<SparseRow> w_cols_;
    Eigen::LLT<Eigen::MatrixXd> cap_;
    Eigen::VectorXd cap_t_, cap_s_;
    double factored_rho_ = -1.0;

    bool warm_ = false;
    double rho_ = 0.1;
    double sigma_ = 1e-6;
    std::vector<double> x_, z_, y_;
};

/// argmin_q eta <q, gradient> + 1/2 ||q - anchor||^2 over the polytope.
inline ProjectionResult omd_argmin(const OccupancyPolytope& poly, std::span<const double> gradient,
                                   const ExtendedOccupancy& anchor, double eta,
                                   ProjectionSolver& solver, const ProjectionOptions& opt = {}) {
    expect_size(gradient, poly.dims.sas_size(), "gradient");
    if (anchor.dims != poly.dims) throw StructuralError("anchor dims do not match polytope");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("step size must be positive");
    if (!all_finite(gradient)) throw ValidationError("gradient is not finite");
    std::vector<double> point(anchor.q);
    for (std::size_t j = 0; j < point.size(); ++j) point[j] -= eta * gradient[j];
    return solver.project(poly, point, opt);
}

inline ProjectionResult omd_argmin(const OccupancyPolytope& poly, std::span<const double> gradient,
                                   const ExtendedOccupancy& anchor, double eta,
                                   const ProjectionOptions& opt = {}) {
    ProjectionSolver solver;
    return omd_argmin(poly, gradient, anchor, eta, solver, opt);
}

} // namespace omdpd
