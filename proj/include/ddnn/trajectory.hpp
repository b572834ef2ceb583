#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

/// Prescribed state for t <= t0. Only the constant kind exists: phi(t) = value.
struct HistorySpec {
    Vec value;
};

/// Ordered solution knots {(t_i, z_i)} with linear dense output.
///
/// Queries at t <= t0 return the history value, queries inside [t0, t_back]
/// interpolate linearly between adjacent knots (knot times are reproduced
/// exactly), queries beyond the last knot throw. A finished trajectory is
/// immutable in practice and safe to share read-only across threads; it also
/// serves as the checkpoint store for the backward pass.
class Trajectory {
public:
    Trajectory(double t0, HistorySpec history)
        : dim_(static_cast<int>(history.value.size())), history_(std::move(history)) {
        if (dim_ < 1) throw DimensionMismatch("Trajectory: state dimension must be >= 1");
        if (!all_finite(history_.value)) throw NonFiniteState("Trajectory: non-finite history value");
        times_.push_back(t0);
        states_.insert(states_.end(), history_.value.begin(), history_.value.end());
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] double t_front() const { return times_.front(); }
    [[nodiscard]] double t_back() const { return times_.back(); }
    [[nodiscard]] std::size_t knot_count() const { return times_.size(); }
    [[nodiscard]] double knot_time(std::size_t i) const { return times_[i]; }
    [[nodiscard]] std::span<const double> knot_state(std::size_t i) const {
        return {states_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    [[nodiscard]] std::span<const double> last_state() const { return knot_state(times_.size() - 1); }
    [[nodiscard]] const HistorySpec& history() const { return history_; }

    /// Appends an accepted knot; times must strictly increase.
    void append(double t, std::span<const double> z) {
        if (static_cast<int>(z.size()) != dim_) throw DimensionMismatch("Trajectory::append: state width");
        if (!(t > times_.back())) throw Error("Trajectory::append: knot times must strictly increase");
        times_.push_back(t);
        states_.insert(states_.end(), z.begin(), z.end());
    }

    /// Exact time match against the knot grid.
    [[nodiscard]] bool has_knot_at(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        return it != times_.end() && *it == t;
    }

    void query(double t, std::span<double> out) const {
        if (static_cast<int>(out.size()) != dim_) throw DimensionMismatch("Trajectory::query: output width");
        if (t <= times_.front()) {
            std::copy(history_.value.begin(), history_.value.end(), out.begin());
            return;
        }
        const double tb = times_.back();
        if (t > tb) {
            // One-ulp-scale overshoot from float arithmetic on t + h - tau is
            // clamped; anything larger is a genuine out-of-range query.
            if (t - tb > beyond_slack()) {
                throw QueryBeyondTrajectory("Trajectory::query: t = " + std::to_string(t) +
                                            " beyond last knot " + std::to_string(tb));
            }
            t = tb;
        }
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times_.begin());
        const double* flat = states_.data();
        if (k < times_.size() && times_[k] == t) {
            const double* s = flat + k * dim_;
            std::copy(s, s + dim_, out.begin());
            return;
        }
        const std::size_t i = k - 1; // k >= 1 because t > times_.front()
        const double t_i = times_[i];
        const double t_k = times_[k];
        const double w = (t - t_i) / (t_k - t_i);
        const double* zi = flat + i * dim_;
        const double* zk = flat + k * dim_;
        for (int j = 0; j < dim_; ++j) out[j] = zi[j] + (zk[j] - zi[j]) * w;
    }

    [[nodiscard]] Vec query(double t) const {
        Vec out(static_cast<std::size_t>(dim_));
        query(t, out);
        return out;
    }

private:
    [[nodiscard]] double beyond_slack() const {
        return 1e-12 * std::max(1.0, std::abs(times_.back()));
    }

    int dim_;
    HistorySpec history_;
    std::vector<double> times_;
    std::vector<double> states_; // row-major, knot_count x dim
};

/// Dense-output lookup on a trajectory (history / linear interpolation / error).
[[nodiscard]] inline Vec interpolate(const Trajectory& traj, double t) { return traj.query(t); }

} // namespace ddnn
