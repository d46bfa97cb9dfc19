#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stlstm/io.hpp"
#include "stlstm/run_config.hpp"
#include "stlstm/training.hpp"

// The work behind each subcommand of the `stlstm` tool. Kept in the library so
// tests can drive the same code paths in-process.

namespace stlstm {

/// Bad invocation or configuration: exit code 2.
class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// `--out` if given, otherwise runs/<UTC timestamp>-<command>.
inline std::filesystem::path resolve_run_dir(const std::string& out, const std::string& command) {
    if (!out.empty()) return out;
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream name;
    name << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-" << command;
    return std::filesystem::path("runs") / name.str();
}

// ---- traverse ---------------------------------------------------------------

inline void cmd_traverse(const std::filesystem::path& topology_path, const std::string& mode, std::ostream& out) {
    const auto kind = parse_traversal_kind(mode);
    const auto topo = load_topology(topology_path);
    out << make_traversal(topo, kind).to_string() << "\n";
}

// ---- synth --------------------------------------------------------------------

inline Dataset synth_dataset(const SynthConfig& cfg) {
    Dataset ds;
    ds.topology = cfg.topology == "body16" ? body16_topology() : load_topology(cfg.topology);
    const std::string ref = cfg.topology == "body16" ? "body16" : std::filesystem::path(cfg.topology).stem().string();
    auto gen = synth_generate(ds.topology, cfg.spec, ref);
    ds.splits["train"] = std::move(gen.train);
    if (!gen.test.empty()) ds.splits["test"] = std::move(gen.test);
    return ds;
}

inline void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
    const auto ds = synth_dataset(cfg);
    save_dataset(out_dir, ds);
    log << "wrote " << out_dir.string() << ":";
    for (const auto& [name, seqs] : ds.splits) log << " " << name << "=" << seqs.size();
    log << "\n";
}

// ---- train --------------------------------------------------------------------

inline Dataset load_dataset_checked(const std::string& path) {
    if (path.empty()) throw UsageError("no dataset path given");
    if (!std::filesystem::exists(path)) throw UsageError("dataset path does not exist: '" + path + "'");
    return load_dataset(path);
}

inline void maybe_center(std::vector<JointSequence>& seqs, const SkeletonTopology& topo, bool on) {
    if (!on) return;
    for (auto& s : seqs) center_on_root(s.frames, topo.root);
}

inline std::size_t infer_class_count(const std::vector<JointSequence>& seqs) {
    std::size_t c = 0;
    for (const auto& s : seqs) c = std::max(c, s.label + 1);
    return c;
}

inline std::string train_log_header() { return "epoch,loss,train_acc,eval_acc,lr,seconds"; }

inline std::string train_log_row(const EpochRecord& r) {
    return std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.train_accuracy) + "," +
           format_double(r.eval_accuracy) + "," + format_double(r.learning_rate) + "," + format_double(r.seconds);
}

struct TrainOutcome {
    Checkpoint checkpoint;
    TrainRunReport report;
};

/// Trains per `cfg` and writes config.json, train_log.csv and checkpoint.json
/// into `run_dir`.
inline TrainOutcome cmd_train(RunConfig cfg, const std::filesystem::path& run_dir, std::ostream& log) {
    const Dataset ds = load_dataset_checked(cfg.dataset);
    auto train_set = ds.split(cfg.train_split);
    std::vector<JointSequence> eval_set;
    if (!cfg.eval_split.empty() && ds.splits.count(cfg.eval_split)) eval_set = ds.split(cfg.eval_split);
    maybe_center(train_set, ds.topology, cfg.center_on_root);
    maybe_center(eval_set, ds.topology, cfg.center_on_root);
    if (cfg.model.class_count == 0) cfg.model.class_count = infer_class_count(train_set);
    cfg.model.D = 3;
    cfg.model.validate();

    std::filesystem::create_directories(run_dir);
    save_json(run_dir / "config.json", run_config_to_json(cfg));
    std::ofstream csv(run_dir / "train_log.csv");
    csv << train_log_header() << "\n";

    const auto order = make_traversal(ds.topology, cfg.traversal);
    TrainOptions opts;
    opts.epochs = cfg.epochs;
    opts.seed = cfg.seed;
    opts.stop_at_train_accuracy = cfg.stop_at_train_accuracy;
    opts.sampling.pad_short = cfg.pad_short;
    opts.on_epoch = [&](const EpochRecord& r) {
        csv << train_log_row(r) << "\n";
        csv.flush();
        log << "epoch " << r.epoch << " loss " << r.loss << " train_acc " << r.train_accuracy;
        if (!std::isnan(r.eval_accuracy)) log << " eval_acc " << r.eval_accuracy;
        log << "\n";
    };
    auto result = train(train_set, eval_set, order, cfg.model, cfg.optimizer, opts);

    TrainOutcome out;
    out.checkpoint = {cfg.model, cfg.traversal, ds.topology, std::move(result.params), cfg.seed, cfg.center_on_root};
    out.report = std::move(result.report);
    save_checkpoint(run_dir / "checkpoint.json", out.checkpoint);
    log << "wrote " << (run_dir / "checkpoint.json").string() << "\n";
    return out;
}

// ---- eval -----------------------------------------------------------------------

/// Loads one split and applies the checkpoint's input convention.
inline std::vector<JointSequence> load_split_for(const Checkpoint& ck, const std::string& dataset,
                                                 const std::string& split) {
    const Dataset ds = load_dataset_checked(dataset);
    if (ds.topology != ck.topology && ds.topology.parent != ck.topology.parent)
        throw DataError("dataset topology differs from the checkpoint's");
    auto seqs = ds.split(split);
    maybe_center(seqs, ck.topology, ck.center_on_root);
    return seqs;
}

inline std::string confusion_csv(const EvalResult& r) {
    std::ostringstream out;
    out << "true";
    for (std::size_t c = 0; c < r.confusion.size(); ++c) out << ",pred_" << c + 1;
    out << "\n";
    for (std::size_t t = 0; t < r.confusion.size(); ++t) {
        out << t + 1;
        for (std::size_t n : r.confusion[t]) out << "," << n;
        out << "\n";
    }
    return out.str();
}

inline EvalResult cmd_eval(const Checkpoint& ck, const std::vector<JointSequence>& samples, std::ostream& out) {
    const auto order = make_traversal(ck.topology, ck.traversal);
    const auto r = evaluate(samples, order, ck.params, ck.config);
    out << "accuracy," << format_double(r.accuracy) << "\n" << confusion_csv(r);
    return r;
}

// ---- gradcheck --------------------------------------------------------------------

struct GradCheckInstance {
    ModelConfig cfg;
    SkeletonTopology topology;
    TraversalOrder order;
    FrameTensor frames;
    std::size_t label = 0;
    ModelParams params;
};

/// Random tree of `joints` joints, random frames and weights (biases included).
inline GradCheckInstance make_gradcheck_instance(CellKind kind, std::size_t layers, std::uint64_t seed,
                                                 std::size_t d = 4, std::size_t joints = 5, std::size_t T = 3,
                                                 std::size_t classes = 3) {
    std::mt19937_64 rng(seed);
    GradCheckInstance g;
    g.cfg = {.cell_kind = kind, .layers = layers, .d = d, .D = 3, .lambda = 0.5, .T = T, .dropout_p = 0.0,
             .class_count = classes};
    g.topology.parent.assign(joints, kNoParent);
    for (std::size_t j = 1; j < joints; ++j) g.topology.parent[j] = std::uniform_int_distribution<std::size_t>(0, j - 1)(rng);
    g.order = tree_traversal(g.topology);
    std::normal_distribution<double> gauss(0.0, 1.0);
    g.frames = FrameTensor(T, joints);
    for (double& v : g.frames.xyz) v = gauss(rng);
    g.label = std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng);
    g.params = init_model_params(g.cfg, rng);
    std::uniform_real_distribution<double> small(-0.5, 0.5);
    for (auto& t : g.params.tensors())
        for (double& v : t.values) v += 0.5 * small(rng);
    return g;
}

inline GradientComparison run_gradcheck(const GradCheckInstance& g, double epsilon = 1e-5) {
    const auto fo = forward(g.frames, g.order, g.params, g.cfg, Mode::Eval, 0);
    const auto analytic = backward(fo, g.label, g.params, g.cfg);
    const auto numeric = finite_diff_grad(g.params, g.frames, g.order, g.cfg, g.label, epsilon);
    return compare_gradients(analytic, numeric);
}

inline constexpr double kGradTolerance = 1e-4;

/// Prints "PASS max_rel_err=..." or "FAIL ..." and returns whether it passed.
inline bool cmd_gradcheck(CellKind kind, std::size_t layers, std::uint64_t seed, std::size_t d, std::size_t T,
                          std::ostream& out) {
    const auto g = make_gradcheck_instance(kind, layers, seed, d, 5, T);
    const auto r = run_gradcheck(g);
    const bool pass = r.max_relative_error <= kGradTolerance;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s max_rel_err=%.3e (%s, layers=%zu, d=%zu, T=%zu, worst %s[%zu])",
                  pass ? "PASS" : "FAIL", r.max_relative_error, to_string(kind).c_str(), layers, d, T,
                  r.worst_tensor.c_str(), r.worst_index);
    out << buf << "\n";
    return pass;
}

// ---- noise probe ----------------------------------------------------------------

struct NoiseProbeResult {
    std::size_t steps = 0, frames = 0;
    std::vector<double> diff;  // lattice index t*S+s: mean over samples of (clean - noisy) mean tau
    double clean_accuracy = 0.0;
    double noisy_accuracy = 0.0;
    double injected_diff = 0.0;  // diff averaged over the lattice cells of (joint, time)
};

inline double mean_of(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Clean vs noisy forwards on every sample; tau is read from the first layer,
/// whose input is the displaced joint itself. Noise directions derive from `seed`.
inline NoiseProbeResult noise_probe(const Checkpoint& ck, const std::vector<JointSequence>& samples, NoiseSpec noise,
                                    std::uint64_t seed) {
    if (ck.config.cell_kind != CellKind::StLstmTrust)
        throw ConfigError("noise-probe needs a checkpoint with trust gates (cell_kind st-lstm-trust)");
    if (samples.empty()) throw DataError("noise-probe: no samples");
    const auto order = make_traversal(ck.topology, ck.traversal);
    const std::size_t S = order.steps.size(), T = ck.config.T;
    if (noise.joint >= ck.topology.joint_count()) throw DataError("noise-probe: joint out of range");
    if (noise.time_step >= T) throw DataError("noise-probe: time step out of range");

    NoiseProbeResult r;
    r.steps = S;
    r.frames = T;
    r.diff.assign(S * T, 0.0);
    std::mt19937_64 unused(0);
    std::size_t clean_ok = 0, noisy_ok = 0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto clean = sample_frames(samples[k], T, unused, {.deterministic = true});
        noise.seed = detail::splitmix64(seed + k);
        const auto noisy = inject_noise(clean, noise);
        const auto a = forward(clean, order, ck.params, ck.config, Mode::Eval, 0);
        const auto b = forward(noisy, order, ck.params, ck.config, Mode::Eval, 0);
        for (std::size_t idx = 0; idx < S * T; ++idx)
            r.diff[idx] += mean_of(a.traces[0][idx].tau) - mean_of(b.traces[0][idx].tau);
        clean_ok += predict(a).label == samples[k].label;
        noisy_ok += predict(b).label == samples[k].label;
    }
    const double n = static_cast<double>(samples.size());
    for (double& v : r.diff) v /= n;
    r.clean_accuracy = static_cast<double>(clean_ok) / n;
    r.noisy_accuracy = static_cast<double>(noisy_ok) / n;
    std::size_t hits = 0;
    for (std::size_t s = 0; s < S; ++s)
        if (order.steps[s] == noise.joint) {
            r.injected_diff += r.diff[noise.time_step * S + s];
            ++hits;
        }
    if (hits) r.injected_diff /= static_cast<double>(hits);
    return r;
}

inline std::string noise_steps_csv(const NoiseProbeResult& r, const TraversalOrder& order) {
    std::ostringstream out;
    out << "spatial_step,time_step,joint,tau_diff\n";
    for (std::size_t t = 0; t < r.frames; ++t)
        for (std::size_t s = 0; s < r.steps; ++s)
            out << s + 1 << "," << t + 1 << "," << order.steps[s] + 1 << "," << format_double(r.diff[t * r.steps + s])
                << "\n";
    return out.str();
}

inline std::string noise_summary_csv(const NoiseProbeResult& r, const NoiseSpec& n) {
    std::ostringstream out;
    out << "noise_joint,noise_time,noise_norm,injected_tau_diff,clean_accuracy,noisy_accuracy\n"
        << n.joint + 1 << "," << n.time_step + 1 << "," << format_double(n.norm_mean) << ","
        << format_double(r.injected_diff) << "," << format_double(r.clean_accuracy) << ","
        << format_double(r.noisy_accuracy) << "\n";
    return out.str();
}

// ---- early-stop probe ---------------------------------------------------------------

inline std::vector<double> parse_p_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double p = 0.0;
        try {
            p = std::stod(item, &used);
        } catch (const std::exception&) {
            throw UsageError("bad p value '" + item + "'");
        }
        if (used != item.size()) throw UsageError("bad p value '" + item + "'");
        if (!(p > 0.0 && p <= 1.0)) throw UsageError("p must be in (0, 1], got " + item);
        out.push_back(p);
    }
    if (out.empty()) throw UsageError("empty p list");
    return out;
}

struct PrefixAccuracy {
    double p = 0.0;
    double accuracy = 0.0;
};

inline std::vector<PrefixAccuracy> earlystop_probe(const Checkpoint& ck, const std::vector<JointSequence>& samples,
                                                   const std::vector<double>& ps) {
    if (samples.empty()) throw DataError("earlystop-probe: no samples");
    const auto order = make_traversal(ck.topology, ck.traversal);
    std::mt19937_64 unused(0);
    std::vector<FrameTensor> frames;
    for (const auto& s : samples) frames.push_back(sample_frames(s, ck.config.T, unused, {.deterministic = true}));
    std::vector<PrefixAccuracy> out;
    for (double p : ps) {
        std::size_t ok = 0;
        for (std::size_t k = 0; k < samples.size(); ++k)
            ok += predict_prefix(frames[k], order, ck.params, ck.config, p).label == samples[k].label;
        out.push_back({p, static_cast<double>(ok) / static_cast<double>(samples.size())});
    }
    return out;
}

inline std::string earlystop_csv(const std::vector<PrefixAccuracy>& rows) {
    std::ostringstream out;
    out << "p,accuracy\n";
    for (const auto& r : rows) out << format_double(r.p) << "," << format_double(r.accuracy) << "\n";
    return out.str();
}

} // namespace stlstm
