// Command-line front end: solve the bundled systems, train and sweep models
// from JSON configs, validate the adjoint against finite differences, and
// render CSV columns as SVG line charts.
//
// Exit codes: 0 success, 1 numerical/run failure, 2 usage or config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddnn/adjoint.hpp"
#include "ddnn/config_json.hpp"
#include "ddnn/csv.hpp"
#include "ddnn/datagen.hpp"
#include "ddnn/gradcheck.hpp"
#include "ddnn/solver.hpp"
#include "ddnn/svg.hpp"
#include "ddnn/trainer.hpp"

namespace {

using namespace ddnn;

/// DDNN_SEED overrides the config seed when set.
void apply_seed_override(RunConfig& cfg) {
    const char* env = std::getenv("DDNN_SEED");
    if (env == nullptr || *env == '\0') return;
    char* end = nullptr;
    const unsigned long long value = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("DDNN_SEED must be an unsigned integer");
    cfg.seed = static_cast<std::uint64_t>(value);
}

struct SolveArgs {
    std::string system;
    double a = 1.4;
    double t_end = 0.0;
    std::string out;
    double rtol = 1e-6;
    double atol = 1e-6;
    std::optional<double> fixed_h;
};

int cmd_solve(const SolveArgs& args) {
    if (!(args.t_end > 0.0)) throw ConfigError("solve: --t-end must be positive");

    std::optional<DelayLogisticRhs> logistic;
    std::optional<ToyLinearRhs> toy;
    const DelayRhs* rhs = nullptr;
    HistorySpec history;
    if (args.system == "delay-logistic") {
        if (!(args.a > 0.0)) throw ConfigError("solve: --a must be positive");
        logistic.emplace(args.a);
        rhs = &*logistic;
        history.value = {kLogisticHistory};
    } else { // toy-2d, verified by CLI11
        toy.emplace();
        rhs = &*toy;
        history.value = kToyHistory;
    }

    Trajectory traj = [&] {
        if (args.fixed_h) {
            if (!(*args.fixed_h > 0.0)) throw ConfigError("solve: --fixed-h must be positive");
            return solve_fixed_rk4(*rhs, history, 0.0, args.t_end, *args.fixed_h);
        }
        SolverConfig cfg;
        cfg.rtol = args.rtol;
        cfg.atol = args.atol;
        return solve_dde(*rhs, history, 0.0, args.t_end, cfg);
    }();
    write_text_file(args.out, trajectory_csv(traj));
    std::printf("solve: %s t_end=%s knots=%zu -> %s\n", args.system.c_str(),
                format_double(args.t_end).c_str(), traj.knot_count(), args.out.c_str());
    return 0;
}

void write_timing(const std::string& dir, double wall_seconds) {
    Json j;
    j["wall_seconds"] = detail::json_number(wall_seconds);
    write_text_file(dir + "/timing.json", j.dump(2) + "\n");
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = load_run_config_file(config_path);
    apply_seed_override(cfg);
    std::filesystem::create_directories(out_dir);

    if (cfg.dataset == "toy-2d") {
        if (cfg.loss != LossKind::TrajectoryMse)
            throw ConfigError("train: dataset toy-2d requires loss trajectory_mse");
        const LabeledSeries data = gen_toy_linear_dde(cfg.n_samples);
        const FitReport report = train_trajectory(cfg, data);

        write_text_file(out_dir + "/model.json", model_to_json(cfg.field, report.theta).dump(2) + "\n");
        write_text_file(out_dir + "/report.json", report_to_json(report, cfg).dump(2) + "\n");
        write_timing(out_dir, report.wall_seconds);
        write_text_file(out_dir + "/actual.csv", series_csv(data.times, data.values));

        if (!report.diverged) {
            // predicted trajectory across the full range, evaluated at the sample times
            NeuralDelayRhs rhs(cfg.field, report.theta);
            std::vector<double> eval_times(data.times.begin() + 1, data.times.end());
            const Trajectory full = cfg.mode == StepKind::FixedStep
                                        ? solve_dde_fixed(rhs, HistorySpec{data.values.front()},
                                                          data.times.front(), data.times.back(),
                                                          cfg.fixed_h, eval_times)
                                        : solve_dde(rhs, HistorySpec{data.values.front()},
                                                    data.times.front(), data.times.back(), cfg.solver,
                                                    eval_times);
            std::vector<Vec> pred(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) pred[i] = full.query(data.times[i]);
            write_text_file(out_dir + "/predicted.csv", series_csv(data.times, pred));
        }
        std::printf("train: dataset=toy-2d tau=%s final_train=%s val=%s test=%s\n",
                    format_double(cfg.field.tau).c_str(),
                    format_double(report.train_loss.empty() ? std::numeric_limits<double>::infinity()
                                                            : report.train_loss.back())
                        .c_str(),
                    format_double(report.final_val_loss).c_str(),
                    format_double(report.final_test_loss).c_str());
        return report.diverged ? 1 : 0;
    }
    if (cfg.dataset == "two-circles") {
        if (cfg.loss != LossKind::CrossEntropy)
            throw ConfigError("train: dataset two-circles requires loss cross_entropy");
        const ClassificationSet data = gen_two_circles(cfg.n_samples, cfg.seed);
        const FitReport report = train_classifier(cfg, data);
        write_text_file(out_dir + "/model.json",
                        model_to_json(cfg.field, report.theta, kClassifierClasses).dump(2) + "\n");
        write_text_file(out_dir + "/report.json", report_to_json(report, cfg).dump(2) + "\n");
        write_timing(out_dir, report.wall_seconds);
        std::printf("train: dataset=two-circles final_loss=%s accuracy=%s\n",
                    format_double(report.train_loss.empty() ? std::numeric_limits<double>::infinity()
                                                            : report.train_loss.back())
                        .c_str(),
                    format_double(report.train_accuracy).c_str());
        return report.diverged ? 1 : 0;
    }
    throw ConfigError("train: unknown dataset '" + cfg.dataset + "' (toy-2d | two-circles)");
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, int parallel) {
    RunConfig cfg = load_run_config_file(config_path);
    apply_seed_override(cfg);
    if (cfg.dataset != "toy-2d") throw ConfigError("sweep: only dataset toy-2d is supported");
    if (cfg.tau_candidates.size() < 2) throw ConfigError("sweep: config needs >= 2 tau_candidates");
    if (parallel < 1) throw ConfigError("sweep: --parallel must be >= 1");
    std::filesystem::create_directories(out_dir);

    const LabeledSeries data = gen_toy_linear_dde(cfg.n_samples);
    const SweepResult result = delay_sweep(cfg, data, parallel);

    std::string csv = "tau,val_mse,test_mse\n";
    for (const SweepRow& row : result.rows) {
        append_double(csv, row.tau);
        csv += ',';
        append_double(csv, row.val_loss);
        csv += ',';
        append_double(csv, row.test_loss);
        csv += '\n';
    }
    write_text_file(out_dir + "/sweep.csv", csv);

    PlotSeries series;
    series.label = "val_mse";
    for (const SweepRow& row : result.rows) {
        series.x.push_back(row.tau);
        series.y.push_back(row.val_loss);
    }
    write_text_file(out_dir + "/sweep.svg", render_line_chart({series}, "tau", "val_mse"));

    bool any_finished = false;
    for (const SweepRow& row : result.rows)
        if (std::isfinite(row.val_loss)) any_finished = true;
    std::printf("sweep: best tau %s (val mse %s)\n", format_double(result.best_tau()).c_str(),
                format_double(result.rows[result.best_index].val_loss).c_str());
    return any_finished ? 0 : 1;
}

int cmd_gradcheck(const std::string& mode, int seeds, double h) {
    if (seeds < 1) throw ConfigError("gradcheck: --seeds must be >= 1");
    if (!(h > 0.0)) throw ConfigError("gradcheck: --h must be positive");
    GradcheckConfig cfg;
    cfg.mode = mode == "concat" ? CombineMode::Concat : CombineMode::Convex;
    cfg.n_seeds = seeds;
    cfg.h = h;
    const GradcheckReport report = run_gradcheck(cfg);
    for (const GradcheckSeedResult& sr : report.seeds)
        std::fprintf(stderr, "seed %llu: max=%s median=%s\n",
                     static_cast<unsigned long long>(sr.seed), format_double(sr.max_rel_err).c_str(),
                     format_double(sr.median_rel_err).c_str());
    std::printf("gradcheck: mode=%s seeds=%d h=%s max=%s median=%s\n", mode.c_str(), seeds,
                format_double(h).c_str(), format_double(report.max_rel_err).c_str(),
                format_double(report.median_rel_err).c_str());
    return report.max_rel_err < 1e-3 ? 0 : 1;
}

struct PlotArgs {
    std::vector<std::string> csv_paths;
    std::string x_col;
    std::string y_cols;
    std::string out;
    bool phase = false;
};

int cmd_plot(const PlotArgs& args) {
    if (args.csv_paths.empty()) throw ConfigError("plot: at least one --csv is required");
    if (!args.phase && (args.x_col.empty() || args.y_cols.empty()))
        throw ConfigError("plot: --x and --y are required unless --phase is given");

    std::vector<std::string> y_names;
    if (args.phase) {
        y_names = {"z1"};
    } else {
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = args.y_cols.find(',', start);
            y_names.push_back(args.y_cols.substr(start, comma == std::string::npos ? comma : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    const std::string x_name = args.phase ? "z0" : args.x_col;

    std::vector<PlotSeries> series;
    for (const std::string& path : args.csv_paths) {
        const CsvTable table = parse_csv(read_text_file(path));
        if (table.rows.empty()) throw ConfigError("plot: " + path + " has no data rows");
        const std::vector<double> xs = table.values(x_name);
        for (const std::string& y_name : y_names) {
            PlotSeries s;
            s.label = args.csv_paths.size() > 1
                          ? std::filesystem::path(path).filename().string() + ":" + y_name
                          : y_name;
            s.x = xs;
            s.y = table.values(y_name);
            series.push_back(std::move(s));
        }
    }
    write_text_file(args.out, render_line_chart(series, x_name, args.phase ? "z1" : args.y_cols));
    std::printf("plot: %zu series -> %s\n", series.size(), args.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"delay differential neural networks: solvers, training, sweeps, plots"};
    app.require_subcommand(1);

    SolveArgs solve_args;
    CLI::App* solve = app.add_subcommand("solve", "integrate a bundled DDE system and write a CSV");
    solve->add_option("--system", solve_args.system, "delay-logistic | toy-2d")
        ->required()
        ->check(CLI::IsMember({"delay-logistic", "toy-2d"}));
    solve->add_option("--a", solve_args.a, "growth rate of the delay logistic (default 1.4)");
    solve->add_option("--t-end", solve_args.t_end, "end of the integration interval")->required();
    solve->add_option("--out", solve_args.out, "output CSV path")->required();
    solve->add_option("--rtol", solve_args.rtol, "relative tolerance (adaptive mode)");
    solve->add_option("--atol", solve_args.atol, "absolute tolerance (adaptive mode)");
    double fixed_h_value = 0.0;
    CLI::Option* fixed_h_opt =
        solve->add_option("--fixed-h", fixed_h_value, "use the fixed-step RK4 reference solver");

    std::string config_path, out_dir;
    CLI::App* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--out-dir", out_dir, "output directory")->required();

    int parallel = 1;
    CLI::App* sweep = app.add_subcommand("sweep", "train one model per delay candidate");
    sweep->add_option("--config", config_path, "run config JSON with tau_candidates")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_option("--out-dir", out_dir, "output directory")->required();
    sweep->add_option("--parallel", parallel, "number of worker threads (default 1)");

    std::string gc_mode;
    int gc_seeds = 20;
    double gc_h = 1e-3;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "adjoint vs finite differences (CI gate)");
    gradcheck->set_help_flag("--help", "print help"); // frees -h for the --h step option
    gradcheck->add_option("--mode", gc_mode, "concat | convex")
        ->required()
        ->check(CLI::IsMember({"concat", "convex"}));
    gradcheck->add_option("--seeds", gc_seeds, "number of random seeds (default 20)");
    gradcheck->add_option("--h", gc_h, "fixed solver step (default 1e-3)");

    PlotArgs plot_args;
    CLI::App* plot = app.add_subcommand("plot", "render CSV columns as an SVG line chart");
    plot->add_option("--csv", plot_args.csv_paths, "input CSV (repeatable)")->required();
    plot->add_option("--x", plot_args.x_col, "x column name");
    plot->add_option("--y", plot_args.y_cols, "y column name(s), comma separated");
    plot->add_option("--out", plot_args.out, "output SVG path")->required();
    plot->add_flag("--phase", plot_args.phase, "plot z0 against z1");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*solve) {
            if (fixed_h_opt->count() > 0) solve_args.fixed_h = fixed_h_value;
            return cmd_solve(solve_args);
        }
        if (*train) return cmd_train(config_path, out_dir);
        if (*sweep) return cmd_sweep(config_path, out_dir, parallel);
        if (*gradcheck) return cmd_gradcheck(gc_mode, gc_seeds, gc_h);
        if (*plot) return cmd_plot(plot_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
