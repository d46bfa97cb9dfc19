#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stlstm/frames.hpp"
#include "stlstm/math.hpp"
#include "stlstm/skeleton.hpp"

namespace stlstm {

/// One labeled skeleton sequence. `label` is 0-based in memory, 1-based on disk.
struct JointSequence {
    FrameTensor frames;
    std::size_t label = 0;
    std::string topology_ref;
    std::string subject;

    bool operator==(const JointSequence&) const = default;
};

inline void validate_sequence(const JointSequence& seq, std::size_t joint_count) {
    if (seq.frames.frames == 0) throw DataError("sequence has no frames");
    if (seq.frames.joints != joint_count)
        throw DataError("sequence has " + std::to_string(seq.frames.joints) + " joints, topology has " +
                        std::to_string(joint_count));
    if (!all_finite(seq.frames.xyz)) throw DataError("sequence contains non-finite coordinates");
}

struct SamplingOptions {
    bool deterministic = false;  // take each segment's middle frame instead of a random one
    bool pad_short = false;      // off-protocol: repeat frames when F < T instead of failing
};

/// Splits F frames into T contiguous segments (the first F mod T segments are
/// one frame longer) and picks one frame from each. Returns increasing indices.
inline std::vector<std::size_t> sample_frame_indices(std::size_t F, std::size_t T, std::mt19937_64& rng,
                                                     SamplingOptions opts = {}) {
    if (T == 0) throw ConfigError("sample_frames: T must be >= 1");
    if (F < T) {
        if (!opts.pad_short)
            throw DataError("sample_frames: sequence has " + std::to_string(F) + " frames but T=" + std::to_string(T) +
                            "; use a smaller T or enable padding");
        std::vector<std::size_t> idx(T);
        for (std::size_t k = 0; k < T; ++k) idx[k] = k * F / T;
        return idx;
    }
    const std::size_t base = F / T;
    const std::size_t extra = F % T;
    std::vector<std::size_t> idx(T);
    std::size_t start = 0;
    for (std::size_t k = 0; k < T; ++k) {
        const std::size_t len = base + (k < extra ? 1 : 0);
        if (opts.deterministic) {
            idx[k] = start + (len - 1) / 2;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, len - 1);
            idx[k] = start + pick(rng);
        }
        start += len;
    }
    return idx;
}

inline FrameTensor sample_frames(const JointSequence& seq, std::size_t T, std::mt19937_64& rng,
                                 SamplingOptions opts = {}) {
    const auto idx = sample_frame_indices(seq.frames.frames, T, rng, opts);
    return seq.frames.select(idx);
}

/// Subtracts the root joint position from every joint, per frame. Off by default.
inline void center_on_root(FrameTensor& frames, std::size_t root) {
    if (root >= frames.joints) throw DataError("center_on_root: root index out of range");
    for (std::size_t t = 0; t < frames.frames; ++t) {
        const std::array<double, 3> origin{frames.at(t, root)[0], frames.at(t, root)[1], frames.at(t, root)[2]};
        for (std::size_t j = 0; j < frames.joints; ++j)
            for (std::size_t a = 0; a < 3; ++a) frames.at(t, j)[a] -= origin[a];
    }
}

/// Displacement of one joint at one (sampled) time step. Indices 0-based.
struct NoiseSpec {
    std::size_t joint = 0;
    std::size_t time_step = 0;
    double norm_mean = 0.30;   // meters
    double norm_jitter = 0.0;  // half-width of the uniform norm distribution
    std::uint64_t seed = 0;
};

/// Random displacement u·n with u uniform on the unit sphere and n uniform in
/// [norm_mean - norm_jitter, norm_mean + norm_jitter].
inline std::array<double, 3> draw_noise_displacement(const NoiseSpec& spec) {
    if (spec.norm_mean < 0.0 || spec.norm_jitter < 0.0) throw ConfigError("inject_noise: norms must be >= 0");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<double, 3> dir{};
    double len = 0.0;
    while (len < 1e-12) {
        for (double& v : dir) v = gauss(rng);
        len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    }
    std::uniform_real_distribution<double> norm_dist(spec.norm_mean - spec.norm_jitter,
                                                     std::nextafter(spec.norm_mean + spec.norm_jitter, INFINITY));
    const double n = spec.norm_jitter > 0.0 ? norm_dist(rng) : spec.norm_mean;
    for (double& v : dir) v = v / len * n;
    return dir;
}

/// Moves exactly one joint at one time step; everything else is untouched.
inline FrameTensor inject_noise(const FrameTensor& frames, const NoiseSpec& spec) {
    if (spec.joint >= frames.joints)
        throw DataError("inject_noise: joint " + std::to_string(spec.joint + 1) + " out of range");
    if (spec.time_step >= frames.frames)
        throw DataError("inject_noise: time step " + std::to_string(spec.time_step + 1) + " out of range");
    const auto delta = draw_noise_displacement(spec);
    FrameTensor out = frames;
    if (spec.norm_mean == 0.0 && spec.norm_jitter == 0.0) return out;
    auto cell = out.at(spec.time_step, spec.joint);
    for (std::size_t a = 0; a < 3; ++a) cell[a] += delta[a];
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic skeleton actions

/// One class: the subtrees under `roots` are held displaced by `offset` and
/// swing along `axis` with a sinusoid. Joints deeper below a root move further;
/// both quantities are the values reached at the deepest joint.
struct MotionSpec {
    std::string name;
    std::vector<std::size_t> roots;  // 0-based
    double frequency = 1.0;          // cycles over the whole sequence
    double phase = 0.0;              // radians
    double amplitude = 0.25;         // meters
    std::array<double, 3> axis{0.0, 1.0, 0.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};  // meters

    bool operator==(const MotionSpec&) const = default;
};

struct SynthSpec {
    std::size_t class_count = 4;
    std::size_t samples_per_class = 10;
    std::size_t test_samples_per_class = 0;
    std::size_t frames = 40;  // F per sequence
    std::uint64_t seed = 1;
    std::vector<MotionSpec> motions;  // empty -> default_motions()

    // Per-sample variation.
    double amplitude_spread = 0.25;    // amplitude scaled by U[1-a, 1+a]
    double frequency_spread = 0.15;    // frequency scaled by U[1-f, 1+f]
    double phase_spread = 0.6;         // phase offset U[-p, p] radians
    double position_spread = 0.3;      // body offset in x and z, U[-s, s] meters
    double joint_jitter = 0.015;       // per-coordinate Gaussian sigma, meters

    bool operator==(const SynthSpec&) const = default;
};

/// Rest pose for the 16-joint body tree (meters, y up, facing +z).
inline std::vector<std::array<double, 3>> body16_rest_pose() {
    return {{0.0, 1.10, 0.0},   {0.0, 1.45, 0.0},   {0.0, 1.65, 0.0},  {0.20, 1.40, 0.0},
            {0.25, 1.15, 0.0},  {0.27, 0.90, 0.0},  {-0.20, 1.40, 0.0}, {-0.25, 1.15, 0.0},
            {-0.27, 0.90, 0.0}, {0.0, 0.90, 0.0},   {0.10, 0.88, 0.0}, {0.10, 0.48, 0.0},
            {0.10, 0.06, 0.0},  {-0.10, 0.88, 0.0}, {-0.10, 0.48, 0.0}, {-0.10, 0.06, 0.0}};
}

/// Rest pose for an arbitrary tree: each joint hangs 0.2 m below its parent,
/// siblings fanned out along x.
inline std::vector<std::array<double, 3>> generic_rest_pose(const SkeletonTopology& t) {
    std::vector<std::array<double, 3>> pose(t.joint_count(), {0.0, 1.0, 0.0});
    const auto kids = t.children();
    std::vector<std::size_t> stack{t.root};
    while (!stack.empty()) {
        const std::size_t j = stack.back();
        stack.pop_back();
        const auto& ch = kids[j];
        for (std::size_t k = 0; k < ch.size(); ++k) {
            const double spread = static_cast<double>(k) - 0.5 * static_cast<double>(ch.size() - 1);
            pose[ch[k]] = {pose[j][0] + 0.15 * spread, pose[j][1] - 0.2, pose[j][2]};
            stack.push_back(ch[k]);
        }
    }
    return pose;
}

/// Left-arm wave, right-arm wave, left-leg kick and both-arms raise on the
/// 16-joint body tree; other topologies get one subtree per class, cycling
/// through non-root joints.
inline std::vector<MotionSpec> default_motions(const SkeletonTopology& t, std::size_t class_count) {
    std::vector<MotionSpec> out;
    if (t.parent == body16_topology().parent && t.root == 0) {
        const std::vector<MotionSpec> body{
            {"left-arm-wave", {3}, 2.0, 0.0, 0.20, {1.0, 0.0, 0.0}, {0.15, 0.60, 0.0}},
            {"right-arm-wave", {6}, 2.0, 0.0, 0.20, {1.0, 0.0, 0.0}, {-0.15, 0.60, 0.0}},
            {"left-leg-kick", {10}, 1.0, 0.0, 0.25, {0.0, 0.3, 1.0}, {0.0, 0.20, 0.35}},
            {"both-arms-raise", {3, 6}, 0.5, 0.0, 0.15, {0.0, 1.0, 0.0}, {0.0, 0.70, 0.0}},
        };
        for (std::size_t k = 0; k < std::min(class_count, body.size()); ++k) out.push_back(body[k]);
    }
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < t.joint_count(); ++j)
        if (j != t.root) candidates.push_back(j);
    if (candidates.empty()) candidates.push_back(t.root);
    for (std::size_t k = out.size(); k < class_count; ++k) {
        const double angle = 0.9 * static_cast<double>(k);
        MotionSpec m;
        m.name = "class-" + std::to_string(k + 1);
        m.roots = {candidates[k % candidates.size()]};
        m.frequency = 0.5 + 0.5 * static_cast<double>(k / candidates.size() % 4);
        m.phase = 0.7 * static_cast<double>(k);
        m.amplitude = 0.25;
        m.axis = {std::cos(angle), 0.5, std::sin(angle)};
        out.push_back(m);
    }
    return out;
}

namespace detail {

// Per joint: weight of the motion at that joint (0 = not moving).
inline std::vector<double> motion_weights(const SkeletonTopology& t, const MotionSpec& m) {
    const auto kids = t.children();
    std::vector<double> weight(t.joint_count(), 0.0);
    for (std::size_t r : m.roots) {
        if (r >= t.joint_count())
            throw DataError("motion '" + m.name + "' references joint " + std::to_string(r + 1) + " but topology has " +
                            std::to_string(t.joint_count()) + " joints");
        std::vector<std::pair<std::size_t, std::size_t>> members;  // joint, depth below r
        std::vector<std::pair<std::size_t, std::size_t>> stack{{r, 0}};
        std::size_t max_depth = 0;
        while (!stack.empty()) {
            auto [j, depth] = stack.back();
            stack.pop_back();
            members.emplace_back(j, depth);
            max_depth = std::max(max_depth, depth);
            for (std::size_t c : kids[j]) stack.emplace_back(c, depth + 1);
        }
        for (auto [j, depth] : members)
            weight[j] = std::max(weight[j], static_cast<double>(depth + 1) / static_cast<double>(max_depth + 1));
    }
    return weight;
}

inline JointSequence synth_sample(const SkeletonTopology& t, const std::vector<std::array<double, 3>>& rest,
                                  const MotionSpec& motion, const std::vector<double>& weight, std::size_t label,
                                  const SynthSpec& spec, std::mt19937_64& rng) {
    auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double amp = motion.amplitude * uniform(1.0 - spec.amplitude_spread, 1.0 + spec.amplitude_spread);
    const double freq = motion.frequency * uniform(1.0 - spec.frequency_spread, 1.0 + spec.frequency_spread);
    const double phase = motion.phase + uniform(-spec.phase_spread, spec.phase_spread);
    const double off_x = uniform(-spec.position_spread, spec.position_spread);
    const double off_z = uniform(-spec.position_spread, spec.position_spread);
    const double lift = uniform(1.0 - spec.amplitude_spread, 1.0 + spec.amplitude_spread);
    std::normal_distribution<double> jitter(0.0, spec.joint_jitter);

    const double axis_len =
        std::sqrt(motion.axis[0] * motion.axis[0] + motion.axis[1] * motion.axis[1] + motion.axis[2] * motion.axis[2]);
    if (!(axis_len > 0.0)) throw DataError("motion '" + motion.name + "' has a zero axis");

    JointSequence seq;
    seq.label = label;
    seq.frames = FrameTensor(spec.frames, t.joint_count());
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const double wave = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(f) /
                                         static_cast<double>(spec.frames) +
                                     phase);
        for (std::size_t j = 0; j < t.joint_count(); ++j) {
            auto p = seq.frames.at(f, j);
            const double swing = amp * weight[j] * wave / axis_len;
            const double hold = weight[j] * lift;
            p[0] = rest[j][0] + off_x + swing * motion.axis[0] + hold * motion.offset[0];
            p[1] = rest[j][1] + swing * motion.axis[1] + hold * motion.offset[1];
            p[2] = rest[j][2] + off_z + swing * motion.axis[2] + hold * motion.offset[2];
            if (spec.joint_jitter > 0.0)
                for (std::size_t a = 0; a < 3; ++a) p[a] += jitter(rng);
        }
    }
    return seq;
}

} // namespace detail

struct SynthDataset {
    std::vector<JointSequence> train;
    std::vector<JointSequence> test;
};

/// Seed-deterministic labeled dataset: samples_per_class training and
/// test_samples_per_class test sequences per class, interleaved by class.
inline SynthDataset synth_generate(const SkeletonTopology& topology, const SynthSpec& spec,
                                   const std::string& topology_ref = "") {
    validate_topology(topology);
    if (spec.class_count < 2) throw ConfigError("synth: class_count must be >= 2");
    if (spec.frames == 0) throw ConfigError("synth: frames must be >= 1");
    const auto motions = spec.motions.empty() ? default_motions(topology, spec.class_count) : spec.motions;
    if (motions.size() != spec.class_count)
        throw ConfigError("synth: " + std::to_string(motions.size()) + " motions for " +
                          std::to_string(spec.class_count) + " classes");
    std::vector<std::vector<double>> weights;
    for (const auto& m : motions) weights.push_back(detail::motion_weights(topology, m));

    const auto rest = topology.parent == body16_topology().parent ? body16_rest_pose() : generic_rest_pose(topology);
    std::mt19937_64 rng(spec.seed);
    SynthDataset out;
    auto fill = [&](std::vector<JointSequence>& dst, std::size_t per_class, const std::string& prefix) {
        for (std::size_t n = 0; n < per_class; ++n)
            for (std::size_t c = 0; c < spec.class_count; ++c) {
                auto seq = detail::synth_sample(topology, rest, motions[c], weights[c], c, spec, rng);
                seq.topology_ref = topology_ref;
                seq.subject = prefix + std::to_string(n + 1);
                dst.push_back(std::move(seq));
            }
    };
    fill(out.train, spec.samples_per_class, "train-");
    fill(out.test, spec.test_samples_per_class, "test-");
    return out;
}

} // namespace stlstm
