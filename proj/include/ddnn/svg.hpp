#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "ddnn/errors.hpp"

namespace ddnn {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline void append_svg_num(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    out += buf;
}

inline void append_tick_label(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    out += buf;
}

} // namespace detail

/// Standalone deterministic line chart: fixed 800x600 viewBox, one polyline
/// per series, axis ticks labelled with the data min/max. Non-finite points
/// are dropped. Identical inputs produce identical bytes.
[[nodiscard]] inline std::string render_line_chart(const std::vector<PlotSeries>& series,
                                                   std::string_view x_label, std::string_view y_label) {
    if (series.empty()) throw ConfigError("render_line_chart: no series");
    constexpr double left = 70.0, right = 780.0, top = 20.0, bottom = 550.0;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    constexpr int palette_size = 6;

    bool any_point = false;
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
    for (const PlotSeries& s : series) {
        if (s.x.size() != s.y.size()) throw ConfigError("render_line_chart: x/y sizes differ");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!any_point) {
                x_lo = x_hi = s.x[i];
                y_lo = y_hi = s.y[i];
                any_point = true;
            } else {
                x_lo = std::min(x_lo, s.x[i]);
                x_hi = std::max(x_hi, s.x[i]);
                y_lo = std::min(y_lo, s.y[i]);
                y_hi = std::max(y_hi, s.y[i]);
            }
        }
    }
    if (!any_point) throw ConfigError("render_line_chart: no finite data points");
    if (x_hi == x_lo) {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    const auto map_x = [&](double v) { return left + (v - x_lo) / (x_hi - x_lo) * (right - left); };
    const auto map_y = [&](double v) { return bottom - (v - y_lo) / (y_hi - y_lo) * (bottom - top); };

    std::string svg;
    svg.reserve(4096);
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" "
           "width=\"800\" height=\"600\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    // axes
    svg += "<line x1=\"70\" y1=\"550\" x2=\"780\" y2=\"550\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"70\" y1=\"20\" x2=\"70\" y2=\"550\" stroke=\"black\" stroke-width=\"1\"/>\n";
    // tick labels: min/max per axis
    const auto text = [&](double x, double y, std::string_view anchor, std::string_view content) {
        svg += "<text x=\"";
        detail::append_svg_num(svg, x);
        svg += "\" y=\"";
        detail::append_svg_num(svg, y);
        svg += "\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"";
        svg += anchor;
        svg += "\">";
        svg += content;
        svg += "</text>\n";
    };
    std::string tick;
    tick.clear();
    detail::append_tick_label(tick, x_lo);
    text(left, 570.0, "middle", tick);
    tick.clear();
    detail::append_tick_label(tick, x_hi);
    text(right, 570.0, "middle", tick);
    tick.clear();
    detail::append_tick_label(tick, y_lo);
    text(62.0, bottom + 4.0, "end", tick);
    tick.clear();
    detail::append_tick_label(tick, y_hi);
    text(62.0, top + 4.0, "end", tick);
    text((left + right) / 2.0, 592.0, "middle", x_label);
    text(16.0, (top + bottom) / 2.0, "middle", y_label);

    for (std::size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = palette[si % palette_size];
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"1.5\" points=\"";
        bool first_pt = true;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!first_pt) svg += ' ';
            detail::append_svg_num(svg, map_x(s.x[i]));
            svg += ',';
            detail::append_svg_num(svg, map_y(s.y[i]));
            first_pt = false;
        }
        svg += "\"/>\n";
        // legend entry
        const double ly = 36.0 + 18.0 * static_cast<double>(si);
        svg += "<rect x=\"640\" y=\"";
        detail::append_svg_num(svg, ly - 9.0);
        svg += "\" width=\"12\" height=\"12\" fill=\"";
        svg += color;
        svg += "\"/>\n";
        text(658.0, ly + 2.0, "start", s.label);
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace ddnn
