#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/rng.hpp"
#include "ddnn/solver.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

enum class Split { None, Train, Val, Test };

/// Time series sampled from a ground-truth system, optionally tagged with
/// contiguous train/val/test time ranges.
struct LabeledSeries {
    int dim = 0;
    std::vector<double> times;  // strictly increasing
    std::vector<Vec> values;
    std::vector<Split> splits;

    [[nodiscard]] std::size_t size() const { return times.size(); }
    [[nodiscard]] std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < splits.size(); ++i)
            if (splits[i] == s) idx.push_back(i);
        return idx;
    }
};

struct ClassificationSet {
    std::vector<std::array<double, 2>> points;
    std::vector<int> labels; // {0, 1}, balanced
};

/// dz/dt = a z(t) (1 - z(t - 1)), z(t <= 0) = 0.1
class DelayLogisticRhs final : public DelayRhs {
public:
    explicit DelayLogisticRhs(double a = 1.4) : a_(a) {}
    [[nodiscard]] int dim() const override { return 1; }
    [[nodiscard]] double delay() const override { return 1.0; }
    void eval(double, std::span<const double> z, std::span<const double> v,
              std::span<double> out) const override {
        out[0] = a_ * z[0] * (1.0 - v[0]);
    }

private:
    double a_;
};

inline constexpr double kLogisticHistory = 0.1;

/// dz/dt = (0.75 z(t) + 0.25 z(t - 2.5)) A with z a row vector and
/// A = [[-0.1, 3.2], [-3.2, -0.1]]; z(t <= 0) = [-0.2, 0.1].
/// A acts on the whole convex combination: that grouping keeps the solution
/// a bounded slow spiral (A has eigenvalues -0.1 +/- 3.2i); applying A to the
/// delayed term alone leaves an unstable real root and the solution blows up
/// three orders of magnitude by t = 10.
class ToyLinearRhs final : public DelayRhs {
public:
    [[nodiscard]] int dim() const override { return 2; }
    [[nodiscard]] double delay() const override { return 2.5; }
    void eval(double, std::span<const double> z, std::span<const double> v,
              std::span<double> out) const override {
        const double u0 = 0.75 * z[0] + 0.25 * v[0];
        const double u1 = 0.75 * z[1] + 0.25 * v[1];
        out[0] = u0 * -0.1 + u1 * -3.2;
        out[1] = u0 * 3.2 + u1 * -0.1;
    }
};

inline const Vec kToyHistory = {-0.2, 0.1};
inline constexpr double kToySpan = 10.0;
inline constexpr double kToyTrainEnd = 6.0;
inline constexpr double kToyValEnd = 8.0;

/// Step used for every ground-truth RK4 solve.
inline constexpr double kGroundTruthStep = 1e-4;

/// Tags samples by time range: t <= t_a train, t <= t_b val, else test
/// (boundary samples go to the earlier range). Deterministic, no shuffling;
/// temporal extrapolation is the point of the split.
[[nodiscard]] inline LabeledSeries split_series(LabeledSeries series, double t_a, double t_b) {
    if (series.size() < 1) throw EmptySplit("split_series: empty series");
    const double lo = series.times.front();
    const double hi = series.times.back();
    if (!(lo < t_a && t_a < t_b && t_b < hi))
        throw Error("split_series: boundaries must satisfy t0 < t_a < t_b < t_end");
    series.splits.assign(series.size(), Split::None);
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double t = series.times[i];
        if (t <= t_a) {
            series.splits[i] = Split::Train;
            ++counts[0];
        } else if (t <= t_b) {
            series.splits[i] = Split::Val;
            ++counts[1];
        } else {
            series.splits[i] = Split::Test;
            ++counts[2];
        }
    }
    if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0)
        throw EmptySplit("split_series: a split range received zero samples");
    return series;
}

namespace detail {

[[nodiscard]] inline LabeledSeries sample_uniform(const Trajectory& traj, double t0, double t_end, int n) {
    LabeledSeries series;
    series.dim = traj.dim();
    series.times.reserve(n);
    series.values.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double t = t0 + (t_end - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
        series.times.push_back(t);
        series.values.push_back(traj.query(t));
    }
    series.splits.assign(series.times.size(), Split::None);
    return series;
}

} // namespace detail

/// Delay logistic ground truth, n uniform samples on [0, t_end]. Untagged.
[[nodiscard]] inline LabeledSeries gen_delay_logistic(double a, double t_end, int n) {
    if (!(a > 0.0)) throw Error("gen_delay_logistic: a must be positive");
    if (n < 2) throw Error("gen_delay_logistic: need at least 2 samples");
    DelayLogisticRhs rhs(a);
    const Trajectory traj = solve_fixed_rk4(rhs, HistorySpec{{kLogisticHistory}}, 0.0, t_end, kGroundTruthStep);
    return detail::sample_uniform(traj, 0.0, t_end, n);
}

/// 2-D linear toy DDE ground truth, n uniform samples on [0, 10], tagged
/// [0, 6] train, (6, 8] val, (8, 10] test.
[[nodiscard]] inline LabeledSeries gen_toy_linear_dde(int n) {
    if (n < 10) throw Error("gen_toy_linear_dde: need at least 10 samples");
    ToyLinearRhs rhs;
    const Trajectory traj = solve_fixed_rk4(rhs, HistorySpec{kToyHistory}, 0.0, kToySpan, kGroundTruthStep);
    LabeledSeries series = detail::sample_uniform(traj, 0.0, kToySpan, n);
    return split_series(std::move(series), kToyTrainEnd, kToyValEnd);
}

/// Two concentric noisy circles (radius 1 and 2, Gaussian radial noise),
/// exactly n/2 points per class; bit-deterministic per seed.
[[nodiscard]] inline ClassificationSet gen_two_circles(int n, std::uint64_t seed, double sigma = 0.1) {
    if (n < 2 || n % 2 != 0) throw Error("gen_two_circles: n must be even and >= 2");
    ClassificationSet set;
    set.points.reserve(n);
    set.labels.reserve(n);
    Xoshiro256pp rng(seed);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int i = 0; i < n; ++i) {
        const int label = i < n / 2 ? 0 : 1;
        const double base_radius = label == 0 ? 1.0 : 2.0;
        const double angle = two_pi * rng.uniform01();
        const double radius = base_radius + sigma * rng.gaussian();
        set.points.push_back({radius * std::cos(angle), radius * std::sin(angle)});
        set.labels.push_back(label);
    }
    return set;
}

} // namespace ddnn
