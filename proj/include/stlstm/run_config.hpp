#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "stlstm/io.hpp"
#include "stlstm/training.hpp"

// Structured run configuration for the command-line tool. Flat JSON object;
// every key is optional and defaults to the values below, unknown keys are
// rejected so typos cannot silently fall back to a default.

namespace stlstm {

struct RunConfig {
    ModelConfig model{.class_count = 0};  // class_count 0: infer from the training labels
    OptimizerState optimizer;
    TraversalKind traversal = TraversalKind::Tree;
    std::string dataset;              // dataset directory (manifest.json inside)
    std::string train_split = "train";
    std::string eval_split = "test";  // empty or missing split: no eval column
    std::size_t epochs = 50;
    std::uint64_t seed = 1;
    std::optional<double> stop_at_train_accuracy;
    bool center_on_root = false;  // off by default: raw coordinates go in
    bool pad_short = false;       // off-protocol frame repetition when F < T
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + ": bad value for '" + key + "'");
    }
}

} // namespace detail

inline RunConfig run_config_from_json(const Json& j, const std::string& where = "config") {
    static const std::set<std::string> known{
        "cell_kind", "layers",    "d",        "lambda",          "T",          "dropout_p",
        "class_count", "learning_rate", "momentum", "decay",     "clip_norm",  "traversal",
        "dataset",   "train_split", "eval_split", "epochs",      "seed",       "stop_at_train_accuracy",
        "center_on_root", "pad_short"};
    detail::reject_unknown_keys(j, known, where);
    RunConfig c;
    std::string kind = to_string(c.model.cell_kind), traversal = to_string(c.traversal);
    detail::read_opt(j, "cell_kind", kind, where);
    detail::read_opt(j, "layers", c.model.layers, where);
    detail::read_opt(j, "d", c.model.d, where);
    detail::read_opt(j, "lambda", c.model.lambda, where);
    detail::read_opt(j, "T", c.model.T, where);
    detail::read_opt(j, "dropout_p", c.model.dropout_p, where);
    detail::read_opt(j, "class_count", c.model.class_count, where);
    detail::read_opt(j, "learning_rate", c.optimizer.learning_rate, where);
    detail::read_opt(j, "momentum", c.optimizer.momentum, where);
    detail::read_opt(j, "decay", c.optimizer.decay, where);
    detail::read_opt(j, "clip_norm", c.optimizer.clip_norm, where);
    detail::read_opt(j, "traversal", traversal, where);
    detail::read_opt(j, "dataset", c.dataset, where);
    detail::read_opt(j, "train_split", c.train_split, where);
    detail::read_opt(j, "eval_split", c.eval_split, where);
    detail::read_opt(j, "epochs", c.epochs, where);
    detail::read_opt(j, "seed", c.seed, where);
    if (j.contains("stop_at_train_accuracy") && !j["stop_at_train_accuracy"].is_null()) {
        double v = 0.0;
        detail::read_opt(j, "stop_at_train_accuracy", v, where);
        c.stop_at_train_accuracy = v;
    }
    detail::read_opt(j, "center_on_root", c.center_on_root, where);
    detail::read_opt(j, "pad_short", c.pad_short, where);
    c.model.cell_kind = parse_cell_kind(kind);
    c.traversal = parse_traversal_kind(traversal);
    if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError(where + ": learning_rate must be > 0");
    if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0)) throw ConfigError(where + ": momentum must be in [0, 1)");
    if (!(c.optimizer.decay > 0.0)) throw ConfigError(where + ": decay must be > 0");
    if (c.optimizer.clip_norm < 0.0) throw ConfigError(where + ": clip_norm must be >= 0");
    return c;
}

inline Json run_config_to_json(const RunConfig& c) {
    return Json{{"cell_kind", to_string(c.model.cell_kind)},
                {"layers", c.model.layers},
                {"d", c.model.d},
                {"lambda", c.model.lambda},
                {"T", c.model.T},
                {"dropout_p", c.model.dropout_p},
                {"class_count", c.model.class_count},
                {"learning_rate", c.optimizer.learning_rate},
                {"momentum", c.optimizer.momentum},
                {"decay", c.optimizer.decay},
                {"clip_norm", c.optimizer.clip_norm},
                {"traversal", to_string(c.traversal)},
                {"dataset", c.dataset},
                {"train_split", c.train_split},
                {"eval_split", c.eval_split},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"stop_at_train_accuracy",
                 c.stop_at_train_accuracy ? Json(*c.stop_at_train_accuracy) : Json(nullptr)},
                {"center_on_root", c.center_on_root},
                {"pad_short", c.pad_short}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: '" + path.string() + "'");
    return run_config_from_json(load_json(path), path.string());
}

// ---- synthetic dataset spec ----------------------------------------------------

struct SynthConfig {
    SynthSpec spec{.test_samples_per_class = 10};
    std::string topology = "body16";  // "body16" or a topology JSON path
};

inline SynthConfig synth_config_from_json(const Json& j, const std::string& where = "synth config") {
    static const std::set<std::string> known{
        "topology",        "class_count",      "samples_per_class", "test_samples_per_class",
        "frames",          "seed",             "amplitude_spread",  "frequency_spread",
        "phase_spread",    "position_spread",  "joint_jitter",      "motions"};
    detail::reject_unknown_keys(j, known, where);
    SynthConfig c;
    auto& s = c.spec;
    detail::read_opt(j, "topology", c.topology, where);
    detail::read_opt(j, "class_count", s.class_count, where);
    detail::read_opt(j, "samples_per_class", s.samples_per_class, where);
    detail::read_opt(j, "test_samples_per_class", s.test_samples_per_class, where);
    detail::read_opt(j, "frames", s.frames, where);
    detail::read_opt(j, "seed", s.seed, where);
    detail::read_opt(j, "amplitude_spread", s.amplitude_spread, where);
    detail::read_opt(j, "frequency_spread", s.frequency_spread, where);
    detail::read_opt(j, "phase_spread", s.phase_spread, where);
    detail::read_opt(j, "position_spread", s.position_spread, where);
    detail::read_opt(j, "joint_jitter", s.joint_jitter, where);
    if (j.contains("motions")) {
        const Json& ms = j["motions"];
        if (!ms.is_array()) throw ConfigError(where + ": motions must be an array");
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const std::string mw = where + ".motions[" + std::to_string(k) + "]";
            detail::reject_unknown_keys(ms[k], {"name", "roots", "frequency", "phase", "amplitude", "axis", "offset"}, mw);
            MotionSpec m;
            std::vector<std::size_t> roots;
            detail::read_opt(ms[k], "name", m.name, mw);
            detail::read_opt(ms[k], "roots", roots, mw);
            detail::read_opt(ms[k], "frequency", m.frequency, mw);
            detail::read_opt(ms[k], "phase", m.phase, mw);
            detail::read_opt(ms[k], "amplitude", m.amplitude, mw);
            detail::read_opt(ms[k], "axis", m.axis, mw);
            detail::read_opt(ms[k], "offset", m.offset, mw);
            for (std::size_t r : roots) {
                if (r == 0) throw ConfigError(mw + ": joint indices are 1-based");
                m.roots.push_back(r - 1);
            }
            s.motions.push_back(std::move(m));
        }
    }
    return c;
}

} // namespace stlstm
