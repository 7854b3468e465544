#pragma once

#include "omdpd/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace omdpd {

inline constexpr const char* kTraceHeader =
    "k,value_reward_true,value_cost_true,dtilde_q,lambda,eta,proj_residual,cum_regret,cum_violation";

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One row per completed episode; cum_regret is nan when no baseline was solved.
inline std::string trace_csv(const RunTrace& t) {
    std::string out = kTraceHeader;
    out += '\n';
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < t.episodes.size(); ++i) {
        const auto& e = t.episodes[i];
        const double regret = i < t.cumulative_regret.size() ? t.cumulative_regret[i] : nan;
        out += std::to_string(e.k);
        for (double v : {e.reward_value_true, e.cost_value_true, e.dtilde_q, e.lambda, e.eta, e.proj_residual,
                         regret, t.cumulative_violation[i]}) {
            out += ',';
            out += format_g17(v);
        }
        out += '\n';
    }
    return out;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
    if (!f) throw Error("write failed for " + path);
}

struct PlotSeries {
    std::string label;
    std::string color;
    std::vector<double> y; // y[k-1] at episode k
    bool dashed = false;
};

/// Minimal line chart: frame, five ticks per axis, one polyline per series, legend.
inline std::string render_svg(const std::string& title, const std::string& y_label,
                              const std::vector<PlotSeries>& series) {
    const double w = 720, h = 440, ml = 70, mr = 20, mt = 40, mb = 50;
    std::size_t n = 1;
    double ymin = 0.0, ymax = 0.0;
    bool any = false;
    for (const auto& s : series) {
        n = std::max(n, s.y.size());
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            ymin = any ? std::min(ymin, v) : v;
            ymax = any ? std::max(ymax, v) : v;
            any = true;
        }
    }
    ymin = std::min(ymin, 0.0);
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto px = [&](double k) { return ml + (n > 1 ? (k - 1.0) / double(n - 1) : 0.5) * pw; };
    auto py = [&](double v) { return mt + (1.0 - (v - ymin) / (ymax - ymin)) * ph; };
    auto num = [](double v, int prec = 1) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.*f", prec, v);
        return std::string(buf);
    };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w, 0) + "\" height=\"" + num(h, 0) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";
    s += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double kx = 1.0 + double(n - 1) * i / 4.0;
        const double vy = ymin + (ymax - ymin) * i / 4.0;
        s += "<text x=\"" + num(px(kx)) + "\" y=\"" + num(h - mb + 18) + "\" text-anchor=\"middle\">" +
             num(kx, 0) + "</text>\n";
        s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(py(vy) + 4) + "\" text-anchor=\"end\">" +
             num(vy, std::abs(ymax - ymin) < 10 ? 2 : 0) + "</text>\n";
        s += "<line x1=\"" + num(ml) + "\" x2=\"" + num(ml + pw) + "\" y1=\"" + num(py(vy)) + "\" y2=\"" +
             num(py(vy)) + "\" stroke=\"#ddd\"/>\n";
    }
    s += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(h - 10) + "\" text-anchor=\"middle\">episode k</text>\n";
    s += "<text transform=\"translate(16," + num(mt + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         y_label + "</text>\n";

    const std::size_t stride = std::max<std::size_t>(1, n / 1000);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& sr = series[i];
        std::string pts;
        for (std::size_t k = 0; k < sr.y.size(); k += stride) {
            if (!std::isfinite(sr.y[k])) continue;
            pts += num(px(double(k + 1))) + "," + num(py(sr.y[k])) + " ";
        }
        if (!sr.y.empty() && (sr.y.size() - 1) % stride != 0 && std::isfinite(sr.y.back()))
            pts += num(px(double(sr.y.size()))) + "," + num(py(sr.y.back()));
        if (sr.y.size() == 1 && std::isfinite(sr.y[0]))
            s += "<circle cx=\"" + num(px(1)) + "\" cy=\"" + num(py(sr.y[0])) + "\" r=\"3\" fill=\"" + sr.color +
                 "\"/>\n";
        s += "<polyline fill=\"none\" stroke=\"" + sr.color + "\" stroke-width=\"1.8\"" +
             (sr.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + pts + "\"/>\n";
        const double ly = mt + 16 + 16 * double(i);
        s += "<line x1=\"" + num(ml + 12) + "\" x2=\"" + num(ml + 36) + "\" y1=\"" + num(ly - 4) + "\" y2=\"" +
             num(ly - 4) + "\" stroke=\"" + sr.color + "\" stroke-width=\"1.8\"" +
             (sr.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
        s += "<text x=\"" + num(ml + 42) + "\" y=\"" + num(ly) + "\">" + sr.label + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// c sqrt(k) over k = 1..n.
inline std::vector<double> sqrt_curve(double c, std::size_t n) {
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = c * std::sqrt(double(k + 1));
    return y;
}

} // namespace omdpd
