#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/trajectory.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

/// Tolerances and step bounds for the adaptive controller.
///
/// The effective step ceiling during a solve is min(h_max, tau): a step past
/// the delay would make the second stage read history that does not exist yet.
struct SolverConfig {
    double rtol = 1e-6;
    double atol = 1e-6;
    double h_init = 1e-2;
    double h_min = 1e-10;
    double h_max = std::numeric_limits<double>::infinity();
    double safety = 0.9;
    long max_steps = 200000;

    void validate() const {
        if (!(h_min > 0.0 && h_min <= h_init && h_init <= h_max))
            throw ConfigError("SolverConfig: need 0 < h_min <= h_init <= h_max");
        if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("SolverConfig: rtol and atol must be positive");
        if (!(safety > 0.0 && safety <= 1.0)) throw ConfigError("SolverConfig: safety must be in (0, 1]");
        if (max_steps <= 0) throw ConfigError("SolverConfig: max_steps must be positive");
    }
};

/// Right-hand side f(t, z(t), z(t - tau)) of a constant-delay DDE.
/// eval must be deterministic and write dim() outputs.
class DelayRhs {
public:
    virtual ~DelayRhs() = default;
    [[nodiscard]] virtual int dim() const = 0;
    [[nodiscard]] virtual double delay() const = 0;
    virtual void eval(double t, std::span<const double> z, std::span<const double> v,
                      std::span<double> out) const = 0;
};

namespace detail {

struct Rk12Scratch {
    Vec v1, k1, y2, v2, k2;
    void resize(int d) {
        v1.resize(d);
        k1.resize(d);
        y2.resize(d);
        v2.resize(d);
        k2.resize(d);
    }
};

/// Embedded Euler/Heun trial step from the last knot of traj. Stages:
///   k1 = f(t, z(t), z(t - tau))
///   k2 = f(t + h, z(t) + h k1, z(t + h - tau))
///   z_new = z(t) + h (k1 + k2) / 2,  err = h (k2 - k1) / 2
/// Does not mutate traj.
inline void rk12_step_into(const DelayRhs& rhs, const Trajectory& traj, double t, double h,
                           Rk12Scratch& ws, std::span<double> z_new, std::span<double> err) {
    const double tau = rhs.delay();
    if (!(h > 0.0)) throw Error("rk12_step: step size must be positive");
    if (h > tau) throw StepExceedsDelay("rk12_step: h = " + std::to_string(h) + " exceeds delay " +
                                        std::to_string(tau));
    const int d = rhs.dim();
    if (traj.dim() != d) throw DimensionMismatch("rk12_step: trajectory/rhs dimension");
    ws.resize(d);
    const std::span<const double> z = traj.last_state();

    traj.query(t - tau, ws.v1);
    rhs.eval(t, z, ws.v1, ws.k1);
    for (int j = 0; j < d; ++j) ws.y2[j] = z[j] + h * ws.k1[j];
    traj.query(t + h - tau, ws.v2);
    rhs.eval(t + h, ws.y2, ws.v2, ws.k2);
    for (int j = 0; j < d; ++j) {
        z_new[j] = z[j] + 0.5 * h * (ws.k1[j] + ws.k2[j]);
        err[j] = 0.5 * h * (ws.k2[j] - ws.k1[j]);
    }
}

} // namespace detail

struct StepResult {
    Vec z_new;
    Vec err;
};

/// Single RK12 trial step; t must be the last knot time of traj.
[[nodiscard]] inline StepResult rk12_step(const DelayRhs& rhs, const Trajectory& traj, double t, double h) {
    StepResult r;
    r.z_new.resize(rhs.dim());
    r.err.resize(rhs.dim());
    detail::Rk12Scratch ws;
    detail::rk12_step_into(rhs, traj, t, h, ws, r.z_new, r.err);
    return r;
}

struct StepDecision {
    bool accept = false;
    double h_next = 0.0;
};

/// Accept/reject a trial step and propose the next step size.
///
/// Scaled error norm: E = RMS_j of err_j / (atol + rtol * max(|z_old_j|, |z_new_j|)),
/// accepted iff E <= 1. Growth factor safety * E^(-1/2) (the embedded pair has
/// order 1), clamped to [0.2, 5.0]; E = 0 maps to the maximal growth 5.0 and a
/// non-finite E to the maximal shrink. The caller additionally caps h_next at tau.
[[nodiscard]] inline StepDecision adapt_step(std::span<const double> err, std::span<const double> z_old,
                                             std::span<const double> z_new, double h,
                                             const SolverConfig& cfg) {
    const std::size_t d = err.size();
    if (z_old.size() != d || z_new.size() != d) throw DimensionMismatch("adapt_step: vector widths");
    double sumsq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double scale = cfg.atol + cfg.rtol * std::max(std::abs(z_old[j]), std::abs(z_new[j]));
        const double r = err[j] / scale;
        sumsq += r * r;
    }
    const double e = std::sqrt(sumsq / static_cast<double>(d));

    StepDecision dec;
    double factor;
    if (!std::isfinite(e)) {
        dec.accept = false;
        factor = 0.2;
    } else if (e == 0.0) {
        dec.accept = true;
        factor = 5.0;
    } else {
        dec.accept = e <= 1.0;
        factor = std::clamp(cfg.safety * std::pow(e, -0.5), 0.2, 5.0);
    }
    dec.h_next = std::clamp(h * factor, cfg.h_min, cfg.h_max);
    return dec;
}

namespace detail {

/// Sorted, deduplicated landing times in (t0, t_end], always ending at t_end.
inline std::vector<double> landing_times(double t0, double t_end, std::vector<double> mandatory) {
    std::sort(mandatory.begin(), mandatory.end());
    mandatory.erase(std::unique(mandatory.begin(), mandatory.end()), mandatory.end());
    for (double m : mandatory) {
        if (!(m > t0 && m <= t_end))
            throw Error("solve: mandatory time " + std::to_string(m) + " outside (t0, t_end]");
    }
    if (mandatory.empty() || mandatory.back() != t_end) mandatory.push_back(t_end);
    return mandatory;
}

} // namespace detail

/// Adaptive RK12 integration of a constant-delay DDE from t0 to t_end.
///
/// Every mandatory time (and t_end) lands exactly on a knot via step
/// truncation, so downstream losses are evaluated on solver states rather
/// than interpolants. Every attempted step obeys h <= tau; rejected steps
/// contribute no knots. Breakpoints at t0 + k tau are not aligned explicitly,
/// the error controller shrinks steps across them instead.
[[nodiscard]] inline Trajectory solve_dde(const DelayRhs& rhs, HistorySpec history, double t0, double t_end,
                                          const SolverConfig& cfg, std::vector<double> mandatory_times = {}) {
    cfg.validate();
    const double tau = rhs.delay();
    if (!(tau > 0.0)) throw Error("solve_dde: delay must be positive");
    if (!(t_end > t0)) throw Error("solve_dde: t_end must exceed t0");
    const std::vector<double> landings = detail::landing_times(t0, t_end, std::move(mandatory_times));

    Trajectory traj(t0, std::move(history));
    if (traj.dim() != rhs.dim()) throw DimensionMismatch("solve_dde: history/rhs dimension");

    const int d = rhs.dim();
    detail::Rk12Scratch ws;
    Vec z_new(d), err(d);

    double h = std::clamp(cfg.h_init, cfg.h_min, std::min(cfg.h_max, tau));
    double t = t0;
    std::size_t next_landing = 0;
    long attempts = 0;

    while (next_landing < landings.size()) {
        if (++attempts > cfg.max_steps) throw MaxStepsExceeded("solve_dde: exceeded max_steps");
        const double target = landings[next_landing];
        double h_try = std::min({h, tau, cfg.h_max});
        bool truncated = false;
        if (t + h_try >= target) {
            h_try = target - t;
            truncated = true;
        }
        if (!(h_try > 0.0) || h_try > tau) throw StepExceedsDelay("solve_dde: step/delay contract violated");

        detail::rk12_step_into(rhs, traj, t, h_try, ws, z_new, err);
        const StepDecision dec = adapt_step(err, traj.last_state(), z_new, h_try, cfg);
        if (dec.accept) {
            if (!all_finite(z_new)) throw NonFiniteState("solve_dde: accepted state is non-finite");
            const double t_new = truncated ? target : t + h_try;
            traj.append(t_new, z_new);
            t = t_new;
            if (truncated) ++next_landing;
        } else if (h_try <= cfg.h_min * (1.0 + 1e-12)) {
            throw StepUnderflow("solve_dde: tolerance unreachable at h_min near t = " + std::to_string(t));
        }
        h = dec.h_next;
    }
    return traj;
}

/// RK12 with the controller disabled: every step is h (truncated only to land
/// on mandatory times and t_end). Deterministic step sequence; used for
/// training so gradients do not depend on controller decisions.
[[nodiscard]] inline Trajectory solve_dde_fixed(const DelayRhs& rhs, HistorySpec history, double t0,
                                                double t_end, double h, std::vector<double> mandatory_times = {},
                                                long max_steps = 20000000) {
    const double tau = rhs.delay();
    if (!(tau > 0.0)) throw Error("solve_dde_fixed: delay must be positive");
    if (!(t_end > t0)) throw Error("solve_dde_fixed: t_end must exceed t0");
    if (!(h > 0.0)) throw Error("solve_dde_fixed: step size must be positive");
    const std::vector<double> landings = detail::landing_times(t0, t_end, std::move(mandatory_times));

    Trajectory traj(t0, std::move(history));
    if (traj.dim() != rhs.dim()) throw DimensionMismatch("solve_dde_fixed: history/rhs dimension");

    const int d = rhs.dim();
    detail::Rk12Scratch ws;
    Vec z_new(d), err(d);

    double t = t0;
    std::size_t next_landing = 0;
    long attempts = 0;
    while (next_landing < landings.size()) {
        if (++attempts > max_steps) throw MaxStepsExceeded("solve_dde_fixed: exceeded max_steps");
        const double target = landings[next_landing];
        double h_try = std::min(h, tau);
        bool truncated = false;
        if (t + h_try >= target) {
            h_try = target - t;
            truncated = true;
        }
        detail::rk12_step_into(rhs, traj, t, h_try, ws, z_new, err);
        if (!all_finite(z_new)) throw NonFiniteState("solve_dde_fixed: state is non-finite near t = " +
                                                     std::to_string(t));
        const double t_new = truncated ? target : t + h_try;
        traj.append(t_new, z_new);
        t = t_new;
        if (truncated) ++next_landing;
    }
    return traj;
}

/// Classical 4-stage RK4 on a uniform grid, with delayed stage arguments
/// served by linear interpolation on the trajectory built so far. Requires
/// h <= tau so no stage reads past the last accepted knot. Used as the
/// accuracy oracle and for ground-truth data generation.
[[nodiscard]] inline Trajectory solve_fixed_rk4(const DelayRhs& rhs, HistorySpec history, double t0,
                                                double t_end, double h, long max_steps = 20000000) {
    const double tau = rhs.delay();
    if (!(tau > 0.0)) throw Error("solve_fixed_rk4: delay must be positive");
    if (!(t_end > t0)) throw Error("solve_fixed_rk4: t_end must exceed t0");
    if (!(h > 0.0)) throw Error("solve_fixed_rk4: step size must be positive");
    if (h > tau) throw StepExceedsDelay("solve_fixed_rk4: h exceeds delay");

    const long n = std::max(1L, static_cast<long>(std::ceil((t_end - t0) / h - 1e-9)));
    if (n > max_steps) throw MaxStepsExceeded("solve_fixed_rk4: grid does not fit max_steps");

    Trajectory traj(t0, std::move(history));
    const int d = rhs.dim();
    if (traj.dim() != d) throw DimensionMismatch("solve_fixed_rk4: history/rhs dimension");

    Vec k1(d), k2(d), k3(d), k4(d), y(d), v(d), z_new(d);
    for (long i = 1; i <= n; ++i) {
        const double t_prev = traj.t_back();
        const double t_i = (i == n) ? t_end : t0 + static_cast<double>(i) * h;
        const double hs = t_i - t_prev;
        if (!(hs > 0.0)) throw Error("solve_fixed_rk4: degenerate grid step");
        const std::span<const double> z = traj.last_state();

        traj.query(t_prev - tau, v);
        rhs.eval(t_prev, z, v, k1);
        for (int j = 0; j < d; ++j) y[j] = z[j] + 0.5 * hs * k1[j];
        traj.query(t_prev + 0.5 * hs - tau, v);
        rhs.eval(t_prev + 0.5 * hs, y, v, k2);
        for (int j = 0; j < d; ++j) y[j] = z[j] + 0.5 * hs * k2[j];
        rhs.eval(t_prev + 0.5 * hs, y, v, k3);
        for (int j = 0; j < d; ++j) y[j] = z[j] + hs * k3[j];
        traj.query(t_prev + hs - tau, v);
        rhs.eval(t_prev + hs, y, v, k4);

        for (int j = 0; j < d; ++j)
            z_new[j] = z[j] + hs / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        if (!all_finite(z_new))
            throw NonFiniteState("solve_fixed_rk4: state is non-finite near t = " + std::to_string(t_i));
        traj.append(t_i, z_new);
    }
    return traj;
}

} // namespace ddnn
