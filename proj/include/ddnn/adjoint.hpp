#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/field.hpp"
#include "ddnn/solver.hpp"
#include "ddnn/trajectory.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

/// One loss-bearing time point; payload is dL/dz at that (exact) forward knot.
struct Observation {
    double t = 0.0;
    Vec dloss_dz;
};

/// Costate knots recorded while integrating from T down to t0.
///
/// query(s) returns zero beyond T and interpolates linearly inside [t0, T].
/// At a loss jump the knot stores the post-jump value (valid below the jump
/// time); the pre-jump value is kept on the side and used when interpolating
/// from above, so the jump is not smeared across a cell.
class AdjointTrajectory {
public:
    AdjointTrajectory(double t_terminal, int dim) : t_terminal_(t_terminal), dim_(dim) {}

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] double t_terminal() const { return t_terminal_; }
    [[nodiscard]] std::size_t knot_count() const { return times_.size(); }
    [[nodiscard]] double knot_time(std::size_t i) const { return times_[i]; }

    void record(double t, std::span<const double> alpha) {
        if (static_cast<int>(alpha.size()) != dim_) throw DimensionMismatch("AdjointTrajectory::record");
        if (!times_.empty() && !(t < times_.back()))
            throw Error("AdjointTrajectory: knot times must strictly decrease");
        times_.push_back(t);
        states_.insert(states_.end(), alpha.begin(), alpha.end());
    }

    /// Stores the pre-jump costate of the most recent knot.
    void mark_prejump(std::span<const double> pre) {
        prejump_[times_.size() - 1] = Vec(pre.begin(), pre.end());
    }

    void query(double s, std::span<double> out) const {
        if (static_cast<int>(out.size()) != dim_) throw DimensionMismatch("AdjointTrajectory::query");
        if (s > t_terminal_) {
            std::fill(out.begin(), out.end(), 0.0); // no loss contribution after T
            return;
        }
        // times_ is sorted descending; find the first knot <= s.
        auto it = std::lower_bound(times_.begin(), times_.end(), s, std::greater<double>());
        std::size_t k = static_cast<std::size_t>(it - times_.begin());
        if (k == times_.size()) {
            const double tb = times_.back();
            if (tb - s > 1e-12 * std::max(1.0, std::abs(tb)))
                throw QueryBeyondTrajectory("AdjointTrajectory::query: s below recorded range");
            k = times_.size() - 1; // float slop at the moving lower edge
        }
        const double* flat = states_.data();
        if (times_[k] == s) {
            const double* a = flat + k * dim_;
            std::copy(a, a + dim_, out.begin());
            return;
        }
        // bracket: lower knot k (time < s), upper knot k-1 (time > s)
        const std::size_t up = k - 1;
        const double t_lo = times_[k];
        const double t_up = times_[up];
        const double w = (s - t_lo) / (t_up - t_lo);
        const double* a_up = flat + up * dim_;
        const double* a_lo = flat + k * dim_;
        auto pre = prejump_.find(k);
        if (pre != prejump_.end()) a_lo = pre->second.data(); // s is above the jump at t_lo
        for (int j = 0; j < dim_; ++j) out[j] = a_lo[j] + (a_up[j] - a_lo[j]) * w;
    }

    [[nodiscard]] Vec query(double s) const {
        Vec out(static_cast<std::size_t>(dim_));
        query(s, out);
        return out;
    }

private:
    double t_terminal_;
    int dim_;
    std::vector<double> times_;  // strictly decreasing
    std::vector<double> states_; // flat, knot_count x dim
    std::unordered_map<std::size_t, Vec> prejump_;
};

struct GradResult {
    Vec grad_theta;
    double loss = 0.0;
    long n_backward_steps = 0;
    /// field_eval + field_vjp calls made during the sweep; bounds backward
    /// work in tests (the forward problem is never re-solved).
    long n_field_evals = 0;
};

struct AdjointOptions {
    SolverConfig solver{};
    /// Fixed-step backward sweep when set (deterministic gradients);
    /// adaptive RK12 with `solver` otherwise.
    std::optional<double> fixed_h{};
};

/// Relates the accumulated costate quadrature q = integral of alpha^T f_theta
/// to dL/dtheta. The costate carries -dL/dz, so q integrates the negated
/// gradient; the value is pinned by the finite-difference suites.
inline constexpr double kLossGradientSign = -1.0;

namespace detail {

/// Shared state for evaluating the costate dynamics
///   d alpha/dt = -alpha(t)^T f_z(t) - alpha(t+tau)^T f_v(t+tau)
/// with z(t), z(t - tau) reconstructed from the checkpointed forward
/// trajectory and alpha(t + tau) read from the partially built costate.
struct AdjointContext {
    const Trajectory& fwd;
    const AdjointTrajectory& adj;
    const DelayFieldSpec& spec;
    const Vec& theta;

    Vec z_buf, v_buf, f_buf, alpha_adv;
    EvalCache cache;
    VjpScratch vscratch;
    VjpTriple vjp_buf;
    long n_field_evals = 0;

    AdjointContext(const Trajectory& fwd_, const AdjointTrajectory& adj_, const DelayFieldSpec& spec_,
                   const Vec& theta_)
        : fwd(fwd_), adj(adj_), spec(spec_), theta(theta_) {
        const std::size_t d = static_cast<std::size_t>(spec.state_dim);
        z_buf.resize(d);
        v_buf.resize(d);
        f_buf.resize(d);
        alpha_adv.resize(d);
    }

    void eval_rhs(double t, std::span<const double> alpha, std::span<double> out) {
        const int d = spec.state_dim;
        const double tau = spec.tau;
        // local term: -alpha^T f_z at t
        fwd.query(t, z_buf);
        fwd.query(t - tau, v_buf);
        field_eval(spec, theta, t, z_buf, v_buf, f_buf, &cache);
        field_vjp_into(spec, theta, cache, alpha, vscratch, vjp_buf);
        n_field_evals += 2;
        for (int j = 0; j < d; ++j) out[j] = -vjp_buf.wrt_z[j];
        // advanced term: -alpha(t+tau)^T f_v at t+tau; identically zero past T
        const double ta = t + tau;
        if (ta <= fwd.t_back()) {
            adj.query(ta, alpha_adv);
            fwd.query(ta, z_buf);
            fwd.query(t, v_buf); // the delayed state at time t+tau is z(t)
            field_eval(spec, theta, ta, z_buf, v_buf, f_buf, &cache);
            field_vjp_into(spec, theta, cache, alpha_adv, vscratch, vjp_buf);
            n_field_evals += 2;
            for (int j = 0; j < d; ++j) out[j] -= vjp_buf.wrt_v[j];
        }
    }

    /// Full cotangent products at (t, alpha); wrt_theta feeds the quadrature.
    void full_vjp(double t, std::span<const double> alpha, VjpTriple& out) {
        fwd.query(t, z_buf);
        fwd.query(t - spec.tau, v_buf);
        field_eval(spec, theta, t, z_buf, v_buf, f_buf, &cache);
        field_vjp_into(spec, theta, cache, alpha, vscratch, out);
        n_field_evals += 2;
    }
};

} // namespace detail

/// Costate dynamics at (t, alpha); exposed for direct checks.
[[nodiscard]] inline Vec adjoint_rhs(double t, std::span<const double> alpha,
                                     const AdjointTrajectory& adj, const Trajectory& fwd,
                                     const DelayFieldSpec& spec, const Vec& theta) {
    detail::AdjointContext ctx(fwd, adj, spec, theta);
    Vec out(static_cast<std::size_t>(spec.state_dim));
    ctx.eval_rhs(t, alpha, out);
    return out;
}

/// Gradient of the observed loss w.r.t. theta by integrating the costate DDE
/// backwards from T to t0 over the checkpointed forward trajectory.
///
/// alpha(T) = -dL/dz(T) (zero when T carries no observation); at every
/// observation time crossed the jump alpha += -dL/dz(t_obs) is applied.
/// dL/dtheta accumulates by trapezoid over accepted step endpoints. The
/// second integral of the gradient formula (over [-tau, 0]) is identically
/// zero here because the history is data, not a function of theta; it is
/// kept below as an explicit zero term.
[[nodiscard]] inline GradResult backward_pass(const Trajectory& fwd,
                                              const std::vector<Observation>& observations,
                                              const DelayFieldSpec& spec, const Vec& theta,
                                              const AdjointOptions& opts, double loss_value = 0.0) {
    spec.validate();
    const ParamLayout lay = ParamLayout::of(spec);
    if (theta.size() != lay.total()) throw DimensionMismatch("backward_pass: theta length");
    const int d = spec.state_dim;
    if (fwd.dim() != d) throw DimensionMismatch("backward_pass: trajectory dimension");
    const double tau = spec.tau;
    const double T = fwd.t_back();
    const double t0 = fwd.t_front();
    const bool fixed = opts.fixed_h.has_value();
    if (fixed && !(*opts.fixed_h > 0.0)) throw Error("backward_pass: fixed step must be positive");
    if (!fixed) opts.solver.validate();

    // Group loss gradients by exact observation time; every time must be a knot.
    std::map<double, Vec> jumps;
    for (const Observation& obs : observations) {
        if (static_cast<int>(obs.dloss_dz.size()) != d)
            throw DimensionMismatch("backward_pass: observation gradient width");
        if (!(obs.t > t0 && obs.t <= T))
            throw Error("backward_pass: observation time outside (t0, T]");
        if (!fwd.has_knot_at(obs.t))
            throw ObservationNotOnKnot("backward_pass: t_obs = " + std::to_string(obs.t) +
                                       " is not a forward knot");
        auto [it, fresh] = jumps.try_emplace(obs.t, Vec(d, 0.0));
        for (int j = 0; j < d; ++j) it->second[j] += obs.dloss_dz[j];
    }

    AdjointTrajectory adj(T, d);
    detail::AdjointContext ctx(fwd, adj, spec, theta);

    Vec alpha(d, 0.0);
    if (auto it = jumps.find(T); it != jumps.end()) {
        for (int j = 0; j < d; ++j) alpha[j] = -it->second[j];
        jumps.erase(it);
    }
    adj.record(T, alpha);

    // Backward landing points: observation jumps (descending) then t0.
    std::vector<double> stops;
    stops.reserve(jumps.size() + 1);
    for (auto it = jumps.rbegin(); it != jumps.rend(); ++it) stops.push_back(it->first);
    stops.push_back(t0);

    const std::size_t n_params = lay.total();
    Vec quad(n_params, 0.0);
    VjpTriple w_buf;
    ctx.full_vjp(T, alpha, w_buf);
    Vec w_prev_theta = w_buf.wrt_theta;

    Vec k1(d), k2(d), alpha_stage(d), alpha_new(d), err(d), pre(d);
    double h = fixed ? *opts.fixed_h : std::clamp(opts.solver.h_init, opts.solver.h_min,
                                                  std::min(opts.solver.h_max, tau));
    const long max_steps = fixed ? 20000000L : opts.solver.max_steps;
    double t = T;
    std::size_t next_stop = 0;
    long attempts = 0;
    long accepted = 0;

    while (next_stop < stops.size()) {
        if (++attempts > max_steps) throw MaxStepsExceeded("backward_pass: exceeded max_steps");
        const double target = stops[next_stop];
        double g = std::min(h, tau);
        bool truncated = false;
        if (t - g <= target) {
            g = t - target;
            truncated = true;
        }
        if (!(g > 0.0) || g > tau) throw Error("backward_pass: step/delay contract violated");

        ctx.eval_rhs(t, alpha, k1);
        for (int j = 0; j < d; ++j) alpha_stage[j] = alpha[j] - g * k1[j];
        ctx.eval_rhs(t - g, alpha_stage, k2);
        for (int j = 0; j < d; ++j) {
            alpha_new[j] = alpha[j] - 0.5 * g * (k1[j] + k2[j]);
            err[j] = 0.5 * g * (k2[j] - k1[j]);
        }

        StepDecision dec{true, h};
        if (!fixed) dec = adapt_step(err, alpha, alpha_new, g, opts.solver);
        if (dec.accept) {
            if (!all_finite(alpha_new)) throw NonFiniteGradient("backward_pass: costate is non-finite");
            const double t_new = truncated ? target : t - g;
            // quadrature over [t_new, t] uses the pre-jump costate at t_new
            ctx.full_vjp(t_new, alpha_new, w_buf);
            for (std::size_t p = 0; p < n_params; ++p)
                quad[p] += 0.5 * g * (w_prev_theta[p] + w_buf.wrt_theta[p]);

            const bool is_jump = truncated && target != t0;
            if (is_jump) {
                std::copy(alpha_new.begin(), alpha_new.end(), pre.begin());
                const Vec& dldz = jumps.at(target);
                for (int j = 0; j < d; ++j) alpha_new[j] -= dldz[j];
                adj.record(t_new, alpha_new);
                adj.mark_prejump(pre);
                ctx.full_vjp(t_new, alpha_new, w_buf); // next segment starts post-jump
            } else {
                adj.record(t_new, alpha_new);
            }
            w_prev_theta.swap(w_buf.wrt_theta);
            std::copy(alpha_new.begin(), alpha_new.end(), alpha.begin());
            t = t_new;
            ++accepted;
            if (truncated) ++next_stop;
            if (!fixed) h = dec.h_next;
        } else {
            if (g <= opts.solver.h_min * (1.0 + 1e-12))
                throw StepUnderflow("backward_pass: tolerance unreachable at h_min");
            h = dec.h_next;
        }
    }

    GradResult res;
    res.grad_theta.resize(n_params);
    // z_theta(t) = 0 for t <= t0 (the history comes from data), so the
    // [-tau, 0] integral of the gradient formula vanishes term by term.
    const Vec history_term(n_params, 0.0);
    for (std::size_t p = 0; p < n_params; ++p)
        res.grad_theta[p] = kLossGradientSign * quad[p] + history_term[p];
    if (!all_finite(res.grad_theta)) throw NonFiniteGradient("backward_pass: gradient is non-finite");
    res.loss = loss_value;
    res.n_backward_steps = accepted;
    res.n_field_evals = ctx.n_field_evals;
    return res;
}

/// Central finite differences of an arbitrary scalar loss; the independent
/// oracle the adjoint is validated against.
[[nodiscard]] inline Vec finite_diff_grad(const std::function<double(const Vec&)>& loss_fn,
                                          const Vec& theta, double eps) {
    if (!(eps > 0.0)) throw Error("finite_diff_grad: eps must be positive");
    Vec grad(theta.size());
    Vec probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + eps;
        const double up = loss_fn(probe);
        probe[j] = theta[j] - eps;
        const double down = loss_fn(probe);
        probe[j] = theta[j];
        grad[j] = (up - down) / (2.0 * eps);
    }
    return grad;
}

} // namespace ddnn
