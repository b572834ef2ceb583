#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddnn/csv.hpp"
#include "ddnn/errors.hpp"
#include "ddnn/field.hpp"
#include "ddnn/trainer.hpp"

namespace ddnn {

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed,
                                const std::string& prefix) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const std::string& key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("config: unknown key '" + prefix + item.key() + "'");
    }
}

template <typename T>
inline void read_field(const Json& obj, const char* key, const std::string& prefix, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("config: bad value for '" + prefix + key + "'");
    }
}

/// JSON numbers cannot carry inf/nan; encode them as strings.
[[nodiscard]] inline Json json_number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

} // namespace detail

[[nodiscard]] inline RunConfig parse_run_config(const Json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    detail::reject_unknown_keys(j, {"dataset", "n_samples", "field", "tau_candidates", "epochs", "lr",
                                    "adam", "seed", "mode", "fixed_h", "loss", "solver"},
                                "");
    RunConfig cfg;
    detail::read_field(j, "dataset", "", cfg.dataset);
    detail::read_field(j, "n_samples", "", cfg.n_samples);
    detail::read_field(j, "tau_candidates", "", cfg.tau_candidates);
    detail::read_field(j, "epochs", "", cfg.epochs);
    detail::read_field(j, "lr", "", cfg.lr);
    detail::read_field(j, "seed", "", cfg.seed);
    detail::read_field(j, "fixed_h", "", cfg.fixed_h);

    if (j.contains("mode")) {
        const std::string mode = j.at("mode").is_string() ? j.at("mode").get<std::string>() : "";
        if (mode == "fixed_step")
            cfg.mode = StepKind::FixedStep;
        else if (mode == "adaptive")
            cfg.mode = StepKind::Adaptive;
        else
            throw ConfigError("config: 'mode' must be \"fixed_step\" or \"adaptive\"");
    }
    if (j.contains("loss")) {
        const std::string loss = j.at("loss").is_string() ? j.at("loss").get<std::string>() : "";
        if (loss == "trajectory_mse")
            cfg.loss = LossKind::TrajectoryMse;
        else if (loss == "cross_entropy")
            cfg.loss = LossKind::CrossEntropy;
        else
            throw ConfigError("config: 'loss' must be \"trajectory_mse\" or \"cross_entropy\"");
    }
    if (j.contains("field")) {
        const Json& f = j.at("field");
        if (!f.is_object()) throw ConfigError("config: 'field' must be an object");
        detail::reject_unknown_keys(
            f, {"state_dim", "hidden_dim", "combine", "lambda", "tau", "include_time"}, "field.");
        detail::read_field(f, "state_dim", "field.", cfg.field.state_dim);
        detail::read_field(f, "hidden_dim", "field.", cfg.field.hidden_dim);
        detail::read_field(f, "lambda", "field.", cfg.field.lambda);
        detail::read_field(f, "tau", "field.", cfg.field.tau);
        detail::read_field(f, "include_time", "field.", cfg.field.include_time);
        if (f.contains("combine")) {
            const std::string mode = f.at("combine").is_string() ? f.at("combine").get<std::string>() : "";
            if (mode == "concat")
                cfg.field.combine = CombineMode::Concat;
            else if (mode == "convex")
                cfg.field.combine = CombineMode::Convex;
            else
                throw ConfigError("config: 'field.combine' must be \"concat\" or \"convex\"");
        }
    }
    if (j.contains("adam")) {
        const Json& a = j.at("adam");
        if (!a.is_object()) throw ConfigError("config: 'adam' must be an object");
        detail::reject_unknown_keys(a, {"beta1", "beta2", "eps"}, "adam.");
        detail::read_field(a, "beta1", "adam.", cfg.adam.beta1);
        detail::read_field(a, "beta2", "adam.", cfg.adam.beta2);
        detail::read_field(a, "eps", "adam.", cfg.adam.eps);
    }
    if (j.contains("solver")) {
        const Json& s = j.at("solver");
        if (!s.is_object()) throw ConfigError("config: 'solver' must be an object");
        detail::reject_unknown_keys(s, {"rtol", "atol", "h_init", "h_min", "h_max", "safety", "max_steps"},
                                    "solver.");
        detail::read_field(s, "rtol", "solver.", cfg.solver.rtol);
        detail::read_field(s, "atol", "solver.", cfg.solver.atol);
        detail::read_field(s, "h_init", "solver.", cfg.solver.h_init);
        detail::read_field(s, "h_min", "solver.", cfg.solver.h_min);
        detail::read_field(s, "h_max", "solver.", cfg.solver.h_max);
        detail::read_field(s, "safety", "solver.", cfg.solver.safety);
        detail::read_field(s, "max_steps", "solver.", cfg.solver.max_steps);
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

[[nodiscard]] inline RunConfig load_run_config_file(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError("config: failed to parse " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

[[nodiscard]] inline Json field_spec_to_json(const DelayFieldSpec& spec) {
    return Json{{"state_dim", spec.state_dim},
                {"hidden_dim", spec.hidden_dim},
                {"combine", spec.combine == CombineMode::Concat ? "concat" : "convex"},
                {"lambda", spec.lambda},
                {"tau", spec.tau},
                {"include_time", spec.include_time}};
}

/// Model file: architecture plus the flat parameter vector in layout order
/// (64-bit values round-trip exactly through the JSON text).
[[nodiscard]] inline Json model_to_json(const DelayFieldSpec& spec, const Vec& theta,
                                        int readout_classes = 0) {
    Json j;
    j["field"] = field_spec_to_json(spec);
    j["theta"] = theta;
    j["readout_classes"] = readout_classes;
    return j;
}

/// Report file; wall-clock time deliberately lives elsewhere so that
/// identical runs produce identical report bytes.
[[nodiscard]] inline Json report_to_json(const FitReport& report, const RunConfig& cfg) {
    Json j;
    j["dataset"] = cfg.dataset;
    j["tau"] = cfg.field.tau;
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["diverged"] = report.diverged;
    Json losses = Json::array();
    for (double l : report.train_loss) losses.push_back(detail::json_number(l));
    j["train_loss"] = std::move(losses);
    j["final_train_loss"] =
        detail::json_number(report.train_loss.empty() ? std::numeric_limits<double>::infinity()
                                                      : report.train_loss.back());
    j["final_val_mse"] = detail::json_number(report.final_val_loss);
    j["final_test_mse"] = detail::json_number(report.final_test_loss);
    if (cfg.loss == LossKind::CrossEntropy) j["train_accuracy"] = detail::json_number(report.train_accuracy);
    return j;
}

} // namespace ddnn
