// stlstm: command-line front end. Exit codes: 0 ok, 1 runtime failure,
// 2 usage or configuration error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "stlstm/commands.hpp"

namespace {

using namespace stlstm;

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path) << text;
}

int run(int argc, char** argv) {
    CLI::App app{"Spatio-temporal LSTM skeleton action recognition"};
    app.require_subcommand(1);

    std::string topology_path, mode = "tree";
    auto* traverse = app.add_subcommand("traverse", "print the 1-based joint visiting order");
    traverse->add_option("topology", topology_path, "topology JSON file")->required();
    traverse->add_option("--mode", mode, "chain or tree");

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
    synth->add_option("--config", config_path, "synthetic spec JSON (defaults if omitted)");
    synth->add_option("--seed", seed, "override the generator seed");
    synth->add_option("--out", out_dir, "dataset directory to write")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model, write checkpoint and CSV log");
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    train_cmd->add_option("--seed", seed, "override the config seed");
    train_cmd->add_option("--out", out_dir, "run directory (default runs/<timestamp>-train)");

    std::string checkpoint_path, dataset_path, split = "test";
    auto* eval = app.add_subcommand("eval", "accuracy and confusion CSV of a checkpoint");
    eval->add_option("checkpoint", checkpoint_path)->required();
    eval->add_option("dataset", dataset_path)->required();
    eval->add_option("--split", split, "dataset split");
    eval->add_option("--out", out_dir, "also write eval.csv here");

    std::string cell = "st-lstm-trust";
    std::size_t layers = 2, d = 4, T = 3;
    auto* gradcheck = app.add_subcommand("gradcheck", "compare BPTT with central differences");
    gradcheck->add_option("--config", config_path, "run config JSON supplying cell_kind and layers");
    gradcheck->add_option("--cell", cell, "chain-lstm, st-lstm or st-lstm-trust");
    gradcheck->add_option("--layers", layers);
    gradcheck->add_option("--d", d);
    gradcheck->add_option("--T", T);
    gradcheck->add_option("--seed", seed);

    std::size_t noise_joint = 16, noise_time = 5;
    double noise_norm = 0.30, noise_jitter = 0.0;
    auto* noise = app.add_subcommand("noise-probe", "trust-gate response to one displaced joint");
    noise->add_option("checkpoint", checkpoint_path)->required();
    noise->add_option("dataset", dataset_path)->required();
    noise->add_option("--split", split);
    noise->add_option("--noise-joint", noise_joint, "1-based joint");
    noise->add_option("--noise-time", noise_time, "1-based sampled time step");
    noise->add_option("--noise-norm", noise_norm, "displacement norm, meters");
    noise->add_option("--noise-jitter", noise_jitter, "half-width of the norm distribution");
    noise->add_option("--seed", seed);
    noise->add_option("--out", out_dir);

    std::string p_list = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    auto* early = app.add_subcommand("earlystop-probe", "accuracy from the first p of each sequence");
    early->add_option("checkpoint", checkpoint_path)->required();
    early->add_option("dataset", dataset_path)->required();
    early->add_option("--split", split);
    early->add_option("--p-list", p_list, "comma-separated fractions in (0, 1]");
    early->add_option("--out", out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (traverse->parsed()) {
        cmd_traverse(topology_path, mode, std::cout);
    } else if (synth->parsed()) {
        SynthConfig cfg;
        if (!config_path.empty()) {
            if (!std::filesystem::exists(config_path)) throw UsageError("config file not found: '" + config_path + "'");
            cfg = synth_config_from_json(load_json(config_path), config_path);
        }
        if (seed) cfg.spec.seed = *seed;
        cmd_synth(cfg, out_dir, std::cout);
    } else if (train_cmd->parsed()) {
        auto cfg = load_run_config(config_path);
        if (seed) cfg.seed = *seed;
        const auto dir = resolve_run_dir(out_dir, "train");
        cmd_train(cfg, dir, std::cout);
        std::cout << "run directory " << dir.string() << " seed " << cfg.seed << "\n";
    } else if (eval->parsed()) {
        const auto ck = load_checkpoint(checkpoint_path);
        std::ostringstream csv;
        cmd_eval(ck, load_split_for(ck, dataset_path, split), csv);
        std::cout << csv.str();
        if (!out_dir.empty()) write_file(std::filesystem::path(out_dir) / "eval.csv", csv.str());
    } else if (gradcheck->parsed()) {
        if (!config_path.empty()) {
            const auto cfg = load_run_config(config_path);
            cell = to_string(cfg.model.cell_kind);
            layers = cfg.model.layers;
        }
        const bool pass = cmd_gradcheck(parse_cell_kind(cell), layers, seed.value_or(1), d, T, std::cout);
        return pass ? 0 : 1;
    } else if (noise->parsed()) {
        if (noise_joint == 0 || noise_time == 0) throw UsageError("--noise-joint and --noise-time are 1-based");
        const auto ck = load_checkpoint(checkpoint_path);
        const auto samples = load_split_for(ck, dataset_path, split);
        NoiseSpec spec{.joint = noise_joint - 1, .time_step = noise_time - 1, .norm_mean = noise_norm,
                       .norm_jitter = noise_jitter};
        const std::uint64_t s = seed.value_or(1);
        const auto r = noise_probe(ck, samples, spec, s);
        const auto dir = resolve_run_dir(out_dir, "noise-probe");
        write_file(dir / "noise_steps.csv", noise_steps_csv(r, make_traversal(ck.topology, ck.traversal)));
        write_file(dir / "noise_summary.csv", noise_summary_csv(r, spec));
        std::cout << noise_summary_csv(r, spec) << "run directory " << dir.string() << " seed " << s << "\n";
    } else if (early->parsed()) {
        const auto ps = parse_p_list(p_list);
        const auto ck = load_checkpoint(checkpoint_path);
        const auto csv = earlystop_csv(earlystop_probe(ck, load_split_for(ck, dataset_path, split), ps));
        std::cout << csv;
        if (!out_dir.empty()) write_file(std::filesystem::path(out_dir) / "earlystop.csv", csv);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const stlstm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
