#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlstm/data.hpp"
#include "stlstm/network.hpp"
#include "stlstm/skeleton.hpp"

// On-disk formats. Everything is JSON; joint and class indices are 1-based in
// files and 0-based in memory.

namespace stlstm {

using Json = nlohmann::json;

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// Field access with the file name in every message.
inline const Json& field(const Json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
    return *it;
}

template <class T>
T get_as(const Json& v, const std::string& where) {
    try {
        return v.get<T>();
    } catch (const Json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

inline std::size_t get_index(const Json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ParseError(where + ": expected an integer");
    const auto n = v.get<long long>();
    if (n < 0) throw ParseError(where + ": expected a non-negative integer");
    return static_cast<std::size_t>(n);
}

} // namespace detail

/// Parses JSON text; syntax errors become ParseError with the line number.
inline Json parse_json(const std::string& text, const std::string& where) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(where + ": malformed JSON", detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1));
    }
}

inline Json load_json(const std::filesystem::path& path) { return parse_json(detail::read_text(path), path.string()); }

inline void save_json(const std::filesystem::path& path, const Json& j) { detail::write_text(path, j.dump(2) + "\n"); }

// ---- topology ------------------------------------------------------------

inline Json topology_to_json(const SkeletonTopology& t) {
    Json parent = Json::array();
    for (std::size_t p : t.parent) parent.push_back(p == kNoParent ? 0 : p + 1);
    Json j{{"joint_count", t.joint_count()}, {"root", t.root + 1}, {"parent", parent}};
    if (!t.names.empty()) j["names"] = t.names;
    return j;
}

inline SkeletonTopology topology_from_json(const Json& j, const std::string& where = "topology") {
    const std::size_t J = detail::get_index(detail::field(j, "joint_count", where), where + ".joint_count");
    const std::size_t root = detail::get_index(detail::field(j, "root", where), where + ".root");
    const Json& parent = detail::field(j, "parent", where);
    if (!parent.is_array()) throw ParseError(where + ".parent: expected an array");
    if (parent.size() != J)
        throw ParseError(where + ".parent: " + std::to_string(parent.size()) + " entries for joint_count " +
                         std::to_string(J));
    if (root == 0 || root > J) throw ParseError(where + ".root: " + std::to_string(root) + " outside [1, J]");
    SkeletonTopology t;
    t.root = root - 1;
    for (std::size_t k = 0; k < J; ++k) {
        const std::size_t p = detail::get_index(parent[k], where + ".parent[" + std::to_string(k) + "]");
        if (p > J) throw ParseError(where + ".parent[" + std::to_string(k) + "]: " + std::to_string(p) + " > J");
        t.parent.push_back(p == 0 ? kNoParent : p - 1);
    }
    if (j.contains("names")) {
        t.names = detail::get_as<std::vector<std::string>>(j["names"], where + ".names");
        if (!t.names.empty() && t.names.size() != J) throw ParseError(where + ".names: length differs from joint_count");
    }
    validate_topology(t);
    return t;
}

inline SkeletonTopology load_topology(const std::filesystem::path& path) {
    return topology_from_json(load_json(path), path.string());
}

inline void save_topology(const std::filesystem::path& path, const SkeletonTopology& t) {
    save_json(path, topology_to_json(t));
}

// ---- samples ---------------------------------------------------------------

inline Json sequence_to_json(const JointSequence& s) {
    Json frames = Json::array();
    for (std::size_t f = 0; f < s.frames.frames; ++f) {
        Json joints = Json::array();
        for (std::size_t j = 0; j < s.frames.joints; ++j) {
            auto p = s.frames.at(f, j);
            joints.push_back({p[0], p[1], p[2]});
        }
        frames.push_back(std::move(joints));
    }
    Json out{{"topology_ref", s.topology_ref}, {"label", s.label + 1}, {"frames", std::move(frames)}};
    if (!s.subject.empty()) out["subject"] = s.subject;
    return out;
}

inline JointSequence sequence_from_json(const Json& j, const std::string& where = "sample") {
    JointSequence s;
    if (j.contains("topology_ref")) s.topology_ref = detail::get_as<std::string>(j["topology_ref"], where + ".topology_ref");
    if (j.contains("subject")) s.subject = detail::get_as<std::string>(j["subject"], where + ".subject");
    const std::size_t label = detail::get_index(detail::field(j, "label", where), where + ".label");
    if (label == 0) throw ParseError(where + ".label: labels are 1-based");
    s.label = label - 1;
    const Json& frames = detail::field(j, "frames", where);
    if (!frames.is_array()) throw ParseError(where + ".frames: expected an array");
    if (frames.empty()) throw DataError(where + ": sequence has 0 frames");
    const std::size_t J = frames[0].is_array() ? frames[0].size() : 0;
    s.frames = FrameTensor(frames.size(), J);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const std::string fw = where + ".frames[" + std::to_string(f) + "]";
        if (!frames[f].is_array()) throw ParseError(fw + ": expected an array of joints");
        if (frames[f].size() != J)
            throw DimensionError(fw + ": " + std::to_string(frames[f].size()) + " joints, frame 0 has " +
                                 std::to_string(J));
        for (std::size_t k = 0; k < J; ++k) {
            const Json& xyz = frames[f][k];
            if (!xyz.is_array() || xyz.size() != 3)
                throw ParseError(fw + "[" + std::to_string(k) + "]: expected [x, y, z]");
            auto p = s.frames.at(f, k);
            for (std::size_t a = 0; a < 3; ++a) {
                if (!xyz[a].is_number()) throw ParseError(fw + "[" + std::to_string(k) + "]: non-numeric coordinate");
                p[a] = xyz[a].get<double>();
            }
        }
    }
    validate_sequence(s, J);
    return s;
}

/// A sample file holds one sample object or an array of them.
inline std::vector<JointSequence> load_sequences(const std::filesystem::path& path) {
    const Json j = load_json(path);
    std::vector<JointSequence> out;
    if (j.is_array()) {
        for (std::size_t k = 0; k < j.size(); ++k)
            out.push_back(sequence_from_json(j[k], path.string() + "[" + std::to_string(k) + "]"));
    } else {
        out.push_back(sequence_from_json(j, path.string()));
    }
    return out;
}

inline void save_sequences(const std::filesystem::path& path, const std::vector<JointSequence>& seqs) {
    Json arr = Json::array();
    for (const auto& s : seqs) arr.push_back(sequence_to_json(s));
    // dump() keeps enough digits for doubles to round-trip exactly
    detail::write_text(path, arr.dump() + "\n");
}

// ---- dataset directories ---------------------------------------------------
//
// <dir>/manifest.json:
//   {"topology": "topology.json", "splits": {"train": ["train/0001.json", ...], "test": [...]}}
// Paths are relative to <dir>.

struct Dataset {
    SkeletonTopology topology;
    std::map<std::string, std::vector<JointSequence>> splits;

    const std::vector<JointSequence>& split(const std::string& name) const {
        auto it = splits.find(name);
        if (it == splits.end()) throw DataError("dataset has no split '" + name + "'");
        return it->second;
    }
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir)) throw DataError("dataset path does not exist: '" + dir.string() + "'");
    const auto manifest_path = dir / "manifest.json";
    const Json m = load_json(manifest_path);
    const std::string where = manifest_path.string();
    Dataset ds;
    ds.topology = load_topology(dir / detail::get_as<std::string>(detail::field(m, "topology", where), where));
    const Json& splits = detail::field(m, "splits", where);
    if (!splits.is_object()) throw ParseError(where + ".splits: expected an object");
    for (const auto& [name, files] : splits.items()) {
        auto& dst = ds.splits[name];
        for (const auto& f : detail::get_as<std::vector<std::string>>(files, where + ".splits." + name)) {
            for (auto& s : load_sequences(dir / f)) {
                validate_sequence(s, ds.topology.joint_count());
                dst.push_back(std::move(s));
            }
        }
    }
    return ds;
}

/// One file per sample under <dir>/<split>/.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    save_topology(dir / "topology.json", ds.topology);
    Json splits = Json::object();
    for (const auto& [name, seqs] : ds.splits) {
        Json files = Json::array();
        for (std::size_t k = 0; k < seqs.size(); ++k) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%04zu.json", k + 1);
            const std::string rel = name + "/" + buf;
            detail::write_text(dir / rel, sequence_to_json(seqs[k]).dump() + "\n");
            files.push_back(rel);
        }
        splits[name] = std::move(files);
    }
    save_json(dir / "manifest.json", Json{{"topology", "topology.json"}, {"splits", splits}});
}

// ---- checkpoints -------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "stlstm-checkpoint/1";

inline Json model_config_to_json(const ModelConfig& c) {
    return Json{{"cell_kind", to_string(c.cell_kind)}, {"layers", c.layers},   {"d", c.d},
                {"D", c.D},                            {"lambda", c.lambda},   {"T", c.T},
                {"dropout_p", c.dropout_p},            {"class_count", c.class_count}};
}

inline ModelConfig model_config_from_json(const Json& j, const std::string& where) {
    ModelConfig c;
    c.cell_kind = parse_cell_kind(detail::get_as<std::string>(detail::field(j, "cell_kind", where), where));
    c.layers = detail::get_index(detail::field(j, "layers", where), where + ".layers");
    c.d = detail::get_index(detail::field(j, "d", where), where + ".d");
    c.D = detail::get_index(detail::field(j, "D", where), where + ".D");
    c.lambda = detail::get_as<double>(detail::field(j, "lambda", where), where + ".lambda");
    c.T = detail::get_index(detail::field(j, "T", where), where + ".T");
    c.dropout_p = detail::get_as<double>(detail::field(j, "dropout_p", where), where + ".dropout_p");
    c.class_count = detail::get_index(detail::field(j, "class_count", where), where + ".class_count");
    c.validate();
    return c;
}

/// Everything needed to run a trained model again.
struct Checkpoint {
    ModelConfig config;
    TraversalKind traversal = TraversalKind::Tree;
    SkeletonTopology topology;
    ModelParams params;
    std::uint64_t seed = 0;
    bool center_on_root = false;  // inputs were root-centred during training

    bool operator==(const Checkpoint&) const = default;
};

inline Json checkpoint_to_json(const Checkpoint& ck) {
    Json params = Json::object();
    for (const auto& t : ck.params.tensors()) params[t.name] = std::vector<double>(t.values.begin(), t.values.end());
    return Json{{"format", kCheckpointFormat},
                {"seed", ck.seed},
                {"config", model_config_to_json(ck.config)},
                {"traversal", to_string(ck.traversal)},
                {"center_on_root", ck.center_on_root},
                {"topology", topology_to_json(ck.topology)},
                {"params", params}};
}

inline Checkpoint checkpoint_from_json(const Json& j, const std::string& where = "checkpoint") {
    const auto format = detail::get_as<std::string>(detail::field(j, "format", where), where + ".format");
    if (format != kCheckpointFormat) throw ParseError(where + ": unsupported format '" + format + "'");
    Checkpoint ck;
    if (j.contains("seed")) ck.seed = detail::get_as<std::uint64_t>(j["seed"], where + ".seed");
    if (j.contains("center_on_root")) ck.center_on_root = detail::get_as<bool>(j["center_on_root"], where);
    ck.config = model_config_from_json(detail::field(j, "config", where), where + ".config");
    ck.traversal = parse_traversal_kind(detail::get_as<std::string>(detail::field(j, "traversal", where), where));
    ck.topology = topology_from_json(detail::field(j, "topology", where), where + ".topology");

    // shapes come from the config; values must match them exactly
    std::mt19937_64 scratch(0);
    ck.params = init_model_params(ck.config, scratch);
    const Json& params = detail::field(j, "params", where);
    for (auto& t : ck.params.tensors()) {
        const std::string pw = where + ".params." + t.name;
        const auto values = detail::get_as<std::vector<double>>(detail::field(params, t.name.c_str(), where + ".params"), pw);
        if (values.size() != t.values.size())
            throw DimensionError(pw + ": " + std::to_string(values.size()) + " values, expected " +
                                 std::to_string(t.values.size()));
        std::copy(values.begin(), values.end(), t.values.begin());
    }
    if (params.size() != ck.params.tensors().size()) throw ParseError(where + ".params: unexpected extra arrays");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    detail::write_text(path, checkpoint_to_json(ck).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(load_json(path), path.string());
}

} // namespace stlstm
