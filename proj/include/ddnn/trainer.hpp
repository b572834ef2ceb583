#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ddnn/adjoint.hpp"
#include "ddnn/datagen.hpp"
#include "ddnn/errors.hpp"
#include "ddnn/field.hpp"
#include "ddnn/solver.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct MseResult {
    double loss = 0.0;
    std::vector<Vec> dloss_dz; // one gradient per observation
};

/// Mean over observations and components of the squared error.
/// Prediction and target time grids must match exactly.
[[nodiscard]] inline MseResult trajectory_mse(std::span<const double> pred_times,
                                              const std::vector<Vec>& pred,
                                              std::span<const double> target_times,
                                              const std::vector<Vec>& target) {
    const std::size_t n = pred.size();
    if (pred_times.size() != n || target_times.size() != n || target.size() != n)
        throw TimeMismatch("trajectory_mse: grid sizes differ");
    if (n == 0) throw TimeMismatch("trajectory_mse: no observations");
    for (std::size_t i = 0; i < n; ++i)
        if (pred_times[i] != target_times[i]) throw TimeMismatch("trajectory_mse: times differ");
    const std::size_t d = pred.front().size();

    MseResult res;
    res.dloss_dz.resize(n);
    const double denom = static_cast<double>(n) * static_cast<double>(d);
    for (std::size_t i = 0; i < n; ++i) {
        if (pred[i].size() != d || target[i].size() != d)
            throw DimensionMismatch("trajectory_mse: state width");
        Vec& g = res.dloss_dz[i];
        g.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = pred[i][j] - target[i][j];
            res.loss += diff * diff / denom;
            g[j] = 2.0 * diff / denom;
        }
    }
    return res;
}

struct CrossEntropyResult {
    double loss = 0.0;
    Vec dlogits; // softmax - onehot
};

/// Softmax cross-entropy with log-sum-exp stabilization.
[[nodiscard]] inline CrossEntropyResult cross_entropy(std::span<const double> logits, int label) {
    const int classes = static_cast<int>(logits.size());
    if (classes < 2) throw DimensionMismatch("cross_entropy: need at least 2 classes");
    if (label < 0 || label >= classes) throw Error("cross_entropy: label out of range");
    double peak = logits[0];
    for (double l : logits) peak = std::max(peak, l);
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    const double lse = peak + std::log(sum);

    CrossEntropyResult res;
    res.loss = lse - logits[label];
    res.dlogits.resize(classes);
    for (int c = 0; c < classes; ++c) res.dlogits[c] = std::exp(logits[c] - lse);
    res.dlogits[label] -= 1.0;
    return res;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vec m, v;
    long step_count = 0;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(Vec& theta, std::span<const double> grad, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
    if (grad.size() != theta.size() || state.m.size() != theta.size())
        throw DimensionMismatch("adam_step: vector widths");
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * grad[j];
        state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        const double m_hat = state.m[j] / bc1;
        const double v_hat = state.v[j] / bc2;
        theta[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Run configuration and reports
// ---------------------------------------------------------------------------

enum class StepKind { FixedStep, Adaptive };
enum class LossKind { TrajectoryMse, CrossEntropy };

struct RunConfig {
    DelayFieldSpec field{};
    std::vector<double> tau_candidates{};
    int epochs = 2000;
    double lr = 1e-3;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    SolverConfig solver{};
    StepKind mode = StepKind::FixedStep;
    double fixed_h = 0.05;
    LossKind loss = LossKind::TrajectoryMse;
    std::string dataset = "toy-2d";
    int n_samples = 1000;

    void validate() const {
        field.validate();
        if (epochs < 1) throw ConfigError("RunConfig: epochs must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("RunConfig: lr must be positive");
        if (mode == StepKind::FixedStep && !(fixed_h > 0.0))
            throw ConfigError("RunConfig: fixed_h must be positive");
        if (mode == StepKind::Adaptive) solver.validate();
        for (double tau : tau_candidates)
            if (!(tau > 0.0)) throw ConfigError("RunConfig: tau candidates must be positive");
        if (n_samples < 2) throw ConfigError("RunConfig: n_samples must be >= 2");
    }

    [[nodiscard]] AdjointOptions adjoint_options() const {
        AdjointOptions opts;
        opts.solver = solver;
        if (mode == StepKind::FixedStep) opts.fixed_h = fixed_h;
        return opts;
    }
};

struct FitReport {
    std::vector<double> train_loss; // one finite entry per completed epoch
    double final_val_loss = 0.0;
    double final_test_loss = 0.0;
    double train_accuracy = 0.0; // classification only
    double wall_seconds = 0.0;
    bool diverged = false;
    Vec theta;
};

namespace detail {

[[nodiscard]] inline bool is_numeric_failure(const Error& e) {
    return dynamic_cast<const NonFiniteState*>(&e) != nullptr ||
           dynamic_cast<const NonFiniteOutput*>(&e) != nullptr ||
           dynamic_cast<const NonFiniteGradient*>(&e) != nullptr ||
           dynamic_cast<const StepUnderflow*>(&e) != nullptr ||
           dynamic_cast<const MaxStepsExceeded*>(&e) != nullptr;
}

[[nodiscard]] inline Trajectory solve_run(const RunConfig& cfg, const DelayRhs& rhs, HistorySpec history,
                                          double t0, double t_end, const std::vector<double>& mandatory) {
    if (cfg.mode == StepKind::FixedStep)
        return solve_dde_fixed(rhs, std::move(history), t0, t_end, cfg.fixed_h, mandatory);
    return solve_dde(rhs, std::move(history), t0, t_end, cfg.solver, mandatory);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Trajectory fitting
// ---------------------------------------------------------------------------

/// Fits the neural field to the train range of `data` by full-batch gradient
/// descent: one forward solve over the train times, trajectory MSE on the
/// train observations, one backward pass, one Adam step per epoch. The
/// initial state is the first train sample; validation/test losses come from
/// a single solve across the full time range with the trained parameters
/// (extrapolation past the train range).
///
/// A diverged run (non-finite loss or a solver/adjoint numerical failure) is
/// reported via FitReport::diverged with val/test losses of +infinity;
/// configuration errors still throw.
[[nodiscard]] inline FitReport train_trajectory(const RunConfig& cfg, const LabeledSeries& data) {
    cfg.validate();
    if (cfg.loss != LossKind::TrajectoryMse) throw ConfigError("train_trajectory: loss must be trajectory_mse");
    const int d = data.dim;
    if (cfg.field.state_dim != d) throw DimensionMismatch("train_trajectory: state_dim vs data");

    const auto train_idx = data.indices_of(Split::Train);
    const auto val_idx = data.indices_of(Split::Val);
    const auto test_idx = data.indices_of(Split::Test);
    if (train_idx.empty() || val_idx.empty() || test_idx.empty())
        throw EmptySplit("train_trajectory: data must carry all three splits");
    if (train_idx.front() != 0) throw Error("train_trajectory: train range must start the series");

    const double t0 = data.times[train_idx.front()];
    const Vec z0 = data.values[train_idx.front()];

    std::vector<double> obs_times;
    std::vector<Vec> obs_targets;
    for (std::size_t i : train_idx) {
        if (data.times[i] <= t0) continue; // the initial state is not an observation
        obs_times.push_back(data.times[i]);
        obs_targets.push_back(data.values[i]);
    }
    if (obs_times.empty()) throw EmptySplit("train_trajectory: no train observations after t0");
    const double t_train_end = obs_times.back();

    const DelayFieldSpec& spec = cfg.field;
    Vec theta = init_params(spec, cfg.seed);
    AdamState adam(theta.size());
    const AdjointOptions adj_opts = cfg.adjoint_options();

    FitReport report;
    const auto started = std::chrono::steady_clock::now();
    std::vector<Vec> pred(obs_times.size());
    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            NeuralDelayRhs rhs(spec, theta);
            const Trajectory traj =
                detail::solve_run(cfg, rhs, HistorySpec{z0}, t0, t_train_end, obs_times);
            for (std::size_t i = 0; i < obs_times.size(); ++i) pred[i] = traj.query(obs_times[i]);
            const MseResult mse = trajectory_mse(obs_times, pred, obs_times, obs_targets);
            if (!std::isfinite(mse.loss)) throw NonFiniteState("train_trajectory: loss diverged");

            std::vector<Observation> observations(obs_times.size());
            for (std::size_t i = 0; i < obs_times.size(); ++i)
                observations[i] = {obs_times[i], mse.dloss_dz[i]};
            const GradResult grad = backward_pass(traj, observations, spec, theta, adj_opts, mse.loss);
            adam_step(theta, grad.grad_theta, adam, cfg.lr, cfg.adam);
            report.train_loss.push_back(mse.loss);
        }
    } catch (const Error& e) {
        if (!detail::is_numeric_failure(e)) throw;
        report.diverged = true;
    }

    if (!report.diverged) {
        try {
            std::vector<double> eval_times;
            for (std::size_t i = 1; i < data.size(); ++i) eval_times.push_back(data.times[i]);
            NeuralDelayRhs rhs(spec, theta);
            const Trajectory full =
                detail::solve_run(cfg, rhs, HistorySpec{z0}, t0, data.times.back(), eval_times);
            auto subset_mse = [&](const std::vector<std::size_t>& idx) {
                std::vector<double> times;
                std::vector<Vec> predicted, targets;
                for (std::size_t i : idx) {
                    times.push_back(data.times[i]);
                    predicted.push_back(full.query(data.times[i]));
                    targets.push_back(data.values[i]);
                }
                return trajectory_mse(times, predicted, times, targets).loss;
            };
            report.final_val_loss = subset_mse(val_idx);
            report.final_test_loss = subset_mse(test_idx);
            if (!std::isfinite(report.final_val_loss) || !std::isfinite(report.final_test_loss))
                report.diverged = true;
        } catch (const Error& e) {
            if (!detail::is_numeric_failure(e)) throw;
            report.diverged = true;
        }
    }
    if (report.diverged) {
        report.final_val_loss = std::numeric_limits<double>::infinity();
        report.final_test_loss = std::numeric_limits<double>::infinity();
    }
    report.theta = std::move(theta);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// ---------------------------------------------------------------------------
// Delay hyperparameter sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    double tau = 0.0;
    double val_loss = 0.0;
    double test_loss = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows; // sorted by tau
    std::size_t best_index = 0; // argmin by validation loss, smallest tau on ties
    [[nodiscard]] double best_tau() const { return rows[best_index].tau; }
};

/// One train_trajectory run per candidate delay, identical seed and budget.
/// Runs are self-contained and may execute on several threads; results are
/// identical regardless of execution order. A diverged candidate is recorded
/// as +infinity instead of aborting the sweep.
[[nodiscard]] inline SweepResult delay_sweep(const RunConfig& cfg, const LabeledSeries& data,
                                             int n_threads = 1) {
    if (cfg.tau_candidates.size() < 2) throw ConfigError("delay_sweep: need at least 2 tau candidates");
    std::vector<double> taus = cfg.tau_candidates;
    std::stable_sort(taus.begin(), taus.end());

    SweepResult result;
    result.rows.resize(taus.size());
    const auto run_one = [&](std::size_t i) {
        RunConfig run_cfg = cfg;
        run_cfg.field.tau = taus[i];
        run_cfg.tau_candidates.clear();
        SweepRow row{taus[i], std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
        try {
            const FitReport rep = train_trajectory(run_cfg, data);
            row.val_loss = rep.final_val_loss;
            row.test_loss = rep.final_test_loss;
        } catch (const Error& e) {
            if (!detail::is_numeric_failure(e)) throw;
        }
        result.rows[i] = row;
    };

    if (n_threads <= 1) {
        for (std::size_t i = 0; i < taus.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < taus.size(); i = next.fetch_add(1)) run_one(i);
        };
        std::vector<std::thread> pool;
        const int count = std::min<int>(n_threads, static_cast<int>(taus.size()));
        pool.reserve(count);
        for (int k = 0; k < count; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    result.best_index = 0;
    for (std::size_t i = 1; i < result.rows.size(); ++i)
        if (result.rows[i].val_loss < result.rows[result.best_index].val_loss) result.best_index = i;
    return result;
}

// ---------------------------------------------------------------------------
// Classification demo
// ---------------------------------------------------------------------------

inline constexpr int kClassifierStateDim = 4; // 2-D input padded with zeros
inline constexpr int kClassifierClasses = 2;
inline constexpr double kClassifierHorizon = 1.0;

/// Trainable parameters: field theta followed by the linear readout
/// (W_r row-major classes x state_dim, then b_r).
[[nodiscard]] inline std::size_t classifier_param_count(const DelayFieldSpec& spec) {
    return param_count(spec) + static_cast<std::size_t>(kClassifierClasses) * spec.state_dim +
           kClassifierClasses;
}

/// Per point: z(0) = x padded to 4 dims, solve the field over [0, 1], linear
/// readout of z(1) into 2 logits, softmax cross-entropy. The readout is
/// appended to theta and trained jointly; the adjoint sees only the terminal
/// loss gradient W_r^T dL/dlogits.
[[nodiscard]] inline FitReport train_classifier(const RunConfig& cfg, const ClassificationSet& data) {
    cfg.validate();
    if (cfg.loss != LossKind::CrossEntropy) throw ConfigError("train_classifier: loss must be cross_entropy");
    const DelayFieldSpec& spec = cfg.field;
    if (spec.state_dim != kClassifierStateDim)
        throw ConfigError("train_classifier: state_dim must be 4 (2-D input padded with zeros)");
    if (data.points.empty()) throw Error("train_classifier: empty dataset");

    const int d = spec.state_dim;
    const int classes = kClassifierClasses;
    const std::size_t p_field = param_count(spec);
    const std::size_t p_total = classifier_param_count(spec);
    const std::size_t readout_w = p_field;            // offset of W_r
    const std::size_t readout_b = p_field + static_cast<std::size_t>(classes) * d;

    Vec params(p_total, 0.0);
    {
        const Vec field_init = init_params(spec, cfg.seed);
        std::copy(field_init.begin(), field_init.end(), params.begin());
        Xoshiro256pp rng(cfg.seed + 1); // readout stream, biases stay zero
        const double s = std::sqrt(6.0 / (d + classes));
        for (std::size_t i = readout_w; i < readout_b; ++i) params[i] = rng.uniform(-s, s);
    }

    AdamState adam(p_total);
    const AdjointOptions adj_opts = cfg.adjoint_options();
    const double n_inv = 1.0 / static_cast<double>(data.points.size());
    const std::vector<double> terminal{kClassifierHorizon};

    Vec theta_field(p_field);
    Vec logits(classes), dldz1(d), grad(p_total);
    FitReport report;
    const auto started = std::chrono::steady_clock::now();

    const auto forward_logits = [&](const Trajectory& traj, const Vec& p) {
        const Vec z1 = traj.query(kClassifierHorizon);
        for (int c = 0; c < classes; ++c) {
            double s = p[readout_b + c];
            for (int j = 0; j < d; ++j) s += p[readout_w + static_cast<std::size_t>(c) * d + j] * z1[j];
            logits[c] = s;
        }
        return z1;
    };

    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            theta_field.assign(params.begin(), params.begin() + p_field);
            NeuralDelayRhs rhs(spec, theta_field);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss_sum = 0.0;
            for (std::size_t p = 0; p < data.points.size(); ++p) {
                Vec z0(d, 0.0);
                z0[0] = data.points[p][0];
                z0[1] = data.points[p][1];
                const Trajectory traj =
                    detail::solve_run(cfg, rhs, HistorySpec{z0}, 0.0, kClassifierHorizon, terminal);
                const Vec z1 = forward_logits(traj, params);
                const CrossEntropyResult ce = cross_entropy(logits, data.labels[p]);
                loss_sum += ce.loss * n_inv;
                for (int c = 0; c < classes; ++c) {
                    const double gl = ce.dlogits[c] * n_inv;
                    for (int j = 0; j < d; ++j)
                        grad[readout_w + static_cast<std::size_t>(c) * d + j] += gl * z1[j];
                    grad[readout_b + c] += gl;
                }
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int c = 0; c < classes; ++c)
                        s += params[readout_w + static_cast<std::size_t>(c) * d + j] * ce.dlogits[c] * n_inv;
                    dldz1[j] = s;
                }
                const std::vector<Observation> obs{{kClassifierHorizon, dldz1}};
                const GradResult gr = backward_pass(traj, obs, spec, theta_field, adj_opts, ce.loss);
                for (std::size_t i = 0; i < p_field; ++i) grad[i] += gr.grad_theta[i];
            }
            if (!std::isfinite(loss_sum)) throw NonFiniteState("train_classifier: loss diverged");
            adam_step(params, grad, adam, cfg.lr, cfg.adam);
            report.train_loss.push_back(loss_sum);
        }

        // final-accuracy pass with the trained parameters
        theta_field.assign(params.begin(), params.begin() + p_field);
        NeuralDelayRhs rhs(spec, theta_field);
        std::size_t correct = 0;
        double loss_sum = 0.0;
        for (std::size_t p = 0; p < data.points.size(); ++p) {
            Vec z0(d, 0.0);
            z0[0] = data.points[p][0];
            z0[1] = data.points[p][1];
            const Trajectory traj =
                detail::solve_run(cfg, rhs, HistorySpec{z0}, 0.0, kClassifierHorizon, terminal);
            forward_logits(traj, params);
            loss_sum += cross_entropy(logits, data.labels[p]).loss * n_inv;
            const int predicted = logits[1] > logits[0] ? 1 : 0;
            if (predicted == data.labels[p]) ++correct;
        }
        report.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.points.size());
        report.final_val_loss = loss_sum;  // no held-out split in this demo
        report.final_test_loss = loss_sum;
    } catch (const Error& e) {
        if (!detail::is_numeric_failure(e)) throw;
        report.diverged = true;
        report.final_val_loss = std::numeric_limits<double>::infinity();
        report.final_test_loss = std::numeric_limits<double>::infinity();
    }

    report.theta = std::move(params);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

} // namespace ddnn
