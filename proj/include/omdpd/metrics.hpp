#pragma once

#include "omdpd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace omdpd {

/// Running sum of (V* - V^{pi_k}).
inline std::vector<double> compute_regret(double baseline_value, std::span<const double> values) {
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) out[k] = (acc += baseline_value - values[k]);
    return out;
}

/// Strong violation: running sum of [V_d^{pi_k}]^+, no cancellation between episodes.
inline std::vector<double> compute_violation(std::span<const double> cost_values) {
    std::vector<double> out(cost_values.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < cost_values.size(); ++k)
        out[k] = (acc += std::max(0.0, cost_values[k]));
    return out;
}

/// Weak violation: [sum_k V_d^{pi_k}]^+ after each episode.
inline std::vector<double> compute_weak_violation(std::span<const double> cost_values) {
    std::vector<double> out(cost_values.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < cost_values.size(); ++k) out[k] = std::max(0.0, acc += cost_values[k]);
    return out;
}

struct PowerFit {
    double exponent = std::numeric_limits<double>::quiet_NaN();
    double scale = std::numeric_limits<double>::quiet_NaN();
    bool nonpositive = false; // some value in the window was <= 0
};

/// Fits series(k) ~ c k^gamma by least squares in log-log space over
/// episodes k in [from, to] (1-based, inclusive).
inline PowerFit fit_power_law(std::span<const double> series, std::size_t from, std::size_t to) {
    if (from < 1 || to > series.size() || from >= to)
        throw ValidationError("power-law fit window is empty or out of range");
    PowerFit fit;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double n = 0.0;
    for (std::size_t k = from; k <= to; ++k) {
        const double y = series[k - 1];
        if (!(y > 0.0)) {
            fit.nonpositive = true;
            return fit;
        }
        const double lx = std::log(double(k)), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        n += 1.0;
    }
    fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.scale = std::exp((sy - fit.exponent * sx) / n);
    return fit;
}

/// Least-squares c for series(k) ~ c sqrt(k) over k in [from, to].
inline double fit_sqrt_scale(std::span<const double> series, std::size_t from, std::size_t to) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = from; k <= to && k <= series.size(); ++k) {
        num += series[k - 1] * std::sqrt(double(k));
        den += double(k);
    }
    return den > 0.0 ? num / den : 0.0;
}

/// Pointwise mean of equally long series.
inline std::vector<double> mean_series(const std::vector<std::vector<double>>& runs) {
    if (runs.empty()) return {};
    std::vector<double> out(runs.front().size(), 0.0);
    for (const auto& r : runs) {
        if (r.size() != out.size()) throw StructuralError("series lengths differ");
        for (std::size_t k = 0; k < r.size(); ++k) out[k] += r[k];
    }
    for (double& v : out) v /= double(runs.size());
    return out;
}

} // namespace omdpd
