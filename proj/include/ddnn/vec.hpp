#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ddnn {

/// Dense real state/parameter vector. Dimension is fixed per run.
using Vec = std::vector<double>;

[[nodiscard]] inline bool all_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

[[nodiscard]] inline double max_abs(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

/// max_j |a_j - b_j|
[[nodiscard]] inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
}

} // namespace ddnn
