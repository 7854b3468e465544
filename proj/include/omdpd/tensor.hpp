#pragma once

#include "omdpd/errors.hpp"

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace omdpd {

/// Shape of a tabular episodic problem. Tensors are dense row-major:
/// [H][S][A] for payoffs and policies, [H][S][A][S] for kernels and
/// extended occupancies.
struct Dims {
    int states = 0;
    int actions = 0;
    int horizon = 0;

    std::size_t layer_size() const { return std::size_t(states) * actions; }
    std::size_t sa_size() const { return std::size_t(horizon) * states * actions; }
    std::size_t sas_size() const { return sa_size() * states; }

    std::size_t idx(int h, int s, int a) const {
        return (std::size_t(h) * states + s) * actions + a;
    }
    std::size_t idx(int h, int s, int a, int next) const {
        return idx(h, s, a) * states + next;
    }

    bool operator==(const Dims&) const = default;

    void validate() const {
        if (states <= 0 || actions <= 0 || horizon <= 0)
            throw ValidationError("dimensions must be positive");
    }
};

inline std::string to_string(const Dims& d) {
    return "(S=" + std::to_string(d.states) + ", A=" + std::to_string(d.actions) +
           ", H=" + std::to_string(d.horizon) + ")";
}

inline void expect_size(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n)
        throw StructuralError(std::string(what) + ": expected " + std::to_string(n) +
                              " entries, got " + std::to_string(v.size()));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Checks nonnegativity and unit mass of a distribution.
inline bool is_distribution(std::span<const double> p, double tol) {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

/// Replicates an [H][S][A] tensor across the next-state coordinate.
inline std::vector<double> broadcast_to_extended(const Dims& d, std::span<const double> sa) {
    expect_size(sa, d.sa_size(), "broadcast_to_extended");
    std::vector<double> out(d.sas_size());
    for (std::size_t i = 0; i < sa.size(); ++i)
        for (int n = 0; n < d.states; ++n) out[i * d.states + n] = sa[i];
    return out;
}

} // namespace omdpd
