#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stlstm/cells.hpp"
#include "stlstm/frames.hpp"
#include "stlstm/math.hpp"
#include "stlstm/skeleton.hpp"

namespace stlstm {

enum class CellKind { ChainLstm, StLstm, StLstmTrust };

inline std::string to_string(CellKind kind) {
    switch (kind) {
    case CellKind::ChainLstm: return "chain-lstm";
    case CellKind::StLstm: return "st-lstm";
    case CellKind::StLstmTrust: return "st-lstm-trust";
    }
    return "unknown";
}

inline CellKind parse_cell_kind(const std::string& s) {
    if (s == "chain-lstm") return CellKind::ChainLstm;
    if (s == "st-lstm") return CellKind::StLstm;
    if (s == "st-lstm-trust") return CellKind::StLstmTrust;
    throw ConfigError("unknown cell kind '" + s + "' (expected chain-lstm, st-lstm or st-lstm-trust)");
}

struct ModelConfig {
    CellKind cell_kind = CellKind::StLstmTrust;
    std::size_t layers = 2;
    std::size_t d = 128;
    std::size_t D = 3;
    double lambda = 0.5;
    std::size_t T = 20;
    double dropout_p = 0.5;
    std::size_t class_count = 0;

    void validate() const {
        if (layers == 0) throw ConfigError("layers must be >= 1");
        if (d == 0) throw ConfigError("d must be >= 1");
        if (D == 0) throw ConfigError("D must be >= 1");
        if (T == 0) throw ConfigError("T must be >= 1");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
        if (class_count == 0) throw ConfigError("class_count must be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

using LayerParams = std::variant<LstmParams, StLstmParams>;

/// A learnable array exposed by name for optimizers, checkers and I/O.
struct NamedTensor {
    std::string name;
    std::span<double> values;
};

struct ConstNamedTensor {
    std::string name;
    std::span<const double> values;
};

struct ModelParams {
    std::vector<LayerParams> layers;
    Matrix classifier;       // class_count x d
    Vector classifier_bias;  // class_count

    /// Every learnable array in a fixed order. Layer arrays are named
    /// "layer<k>.<M|bias|M_x|bias_x|M_p|bias_p>" (k 1-based).
    std::vector<NamedTensor> tensors() {
        std::vector<NamedTensor> out;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const std::string prefix = "layer" + std::to_string(k + 1) + ".";
            std::visit(
                [&](auto& layer) {
                    out.push_back({prefix + "M", layer.M.values()});
                    out.push_back({prefix + "bias", layer.bias});
                    if constexpr (std::is_same_v<std::decay_t<decltype(layer)>, StLstmParams>) {
                        if (layer.trust) {
                            out.push_back({prefix + "M_x", layer.trust->M_x.values()});
                            out.push_back({prefix + "bias_x", layer.trust->bias_x});
                            out.push_back({prefix + "M_p", layer.trust->M_p.values()});
                            out.push_back({prefix + "bias_p", layer.trust->bias_p});
                        }
                    }
                },
                layers[k]);
        }
        out.push_back({"classifier.W", classifier.values()});
        out.push_back({"classifier.bias", classifier_bias});
        return out;
    }

    std::vector<ConstNamedTensor> tensors() const {
        std::vector<ConstNamedTensor> out;
        for (auto& t : const_cast<ModelParams*>(this)->tensors()) out.push_back({t.name, t.values});
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors()) n += t.values.size();
        return n;
    }

    /// Same shapes, all entries zero.
    ModelParams zeros_like() const {
        ModelParams out = *this;
        for (auto& t : out.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
        return out;
    }

    bool operator==(const ModelParams&) const = default;
};

inline ModelParams init_model_params(const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    ModelParams params;
    for (std::size_t k = 0; k < cfg.layers; ++k) {
        const std::size_t in = k == 0 ? cfg.D : cfg.d;
        if (cfg.cell_kind == CellKind::ChainLstm)
            params.layers.emplace_back(init_lstm_params(in, cfg.d, rng));
        else
            params.layers.emplace_back(
                init_st_lstm_params(in, cfg.d, cfg.cell_kind == CellKind::StLstmTrust, cfg.lambda, rng));
    }
    params.classifier = detail::uniform_matrix(cfg.class_count, cfg.d, rng);
    params.classifier_bias.assign(cfg.class_count, 0.0);
    return params;
}

enum class Mode { Train, Eval };

/// Every cell evaluation of one forward pass over the S x T lattice.
/// Lattice index of (spatial step s, time step t) is t*S + s.
struct ForwardOutput {
    std::size_t steps = 0;   // S
    std::size_t frames = 0;  // T actually unrolled
    std::vector<std::vector<StepTrace>> traces;      // [layer][index]
    std::vector<std::vector<Vector>> inputs;         // [layer][index], input consumed by the cell
    std::vector<std::vector<Vector>> dropout_masks;  // [layer][index]; empty in eval mode and for layer 0

    std::size_t index(std::size_t s, std::size_t t) const noexcept { return t * steps + s; }
    std::size_t lattice_size() const noexcept { return steps * frames; }
    const Vector& logits(std::size_t idx) const { return traces.back()[idx].logits; }
    bool has_traces() const noexcept { return !traces.empty() && traces.back().size() == lattice_size(); }
};

namespace detail {

inline void check_forward_inputs(const FrameTensor& frames, const TraversalOrder& order, std::size_t frame_limit) {
    if (order.steps.empty()) throw DataError("forward: traversal order is empty");
    if (frames.frames < frame_limit)
        throw DataError("forward: sample has " + std::to_string(frames.frames) + " frames, needs " +
                        std::to_string(frame_limit));
    for (std::size_t j : order.steps)
        if (j >= frames.joints)
            throw DataError("forward: traversal references joint " + std::to_string(j + 1) + " but sample has " +
                            std::to_string(frames.joints) + " joints");
}

} // namespace detail

/// Unrolls the model over `order` x the first `frame_limit` frames.
/// Layer 1 reads joint coordinates; layer k>1 reads layer k-1's hidden state
/// at the same lattice step (dropped out in train mode). Contexts outside the
/// lattice are zero. The classifier maps top-layer hidden states to logits at
/// every step.
inline ForwardOutput forward_frames(const FrameTensor& frames, const TraversalOrder& order, const ModelParams& params,
                                    const ModelConfig& cfg, Mode mode, std::uint64_t rng_seed,
                                    std::size_t frame_limit) {
    cfg.validate();
    detail::check_forward_inputs(frames, order, frame_limit);
    if (params.layers.size() != cfg.layers)
        throw DimensionError("forward: params have " + std::to_string(params.layers.size()) + " layers, config " +
                             std::to_string(cfg.layers));
    if (params.classifier.rows() != cfg.class_count || params.classifier.cols() != cfg.d)
        throw DimensionError("forward: classifier shape does not match class_count x d");

    const std::size_t S = order.size();
    const std::size_t T = frame_limit;
    const std::size_t d = cfg.d;
    const Vector zero(d, 0.0);

    ForwardOutput out;
    out.steps = S;
    out.frames = T;
    out.traces.assign(cfg.layers, std::vector<StepTrace>(S * T));
    out.inputs.assign(cfg.layers, std::vector<Vector>(S * T));
    out.dropout_masks.assign(cfg.layers, {});

    std::mt19937_64 rng(rng_seed);
    std::bernoulli_distribution keep(1.0 - cfg.dropout_p);
    const double scale = 1.0 / (1.0 - cfg.dropout_p);
    const bool use_dropout = mode == Mode::Train && cfg.dropout_p > 0.0;

    for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
        auto& inputs = out.inputs[layer];
        if (layer == 0) {
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t s = 0; s < S; ++s) {
                    const auto xyz = frames.at(t, order.steps[s]);
                    inputs[out.index(s, t)].assign(xyz.begin(), xyz.end());
                }
        } else {
            const auto& below = out.traces[layer - 1];
            if (use_dropout) out.dropout_masks[layer].assign(S * T, Vector(d));
            for (std::size_t idx = 0; idx < S * T; ++idx) {
                inputs[idx] = below[idx].h;
                if (use_dropout) {
                    Vector& mask = out.dropout_masks[layer][idx];
                    for (std::size_t k = 0; k < d; ++k) {
                        mask[k] = keep(rng) ? scale : 0.0;
                        inputs[idx][k] *= mask[k];
                    }
                }
            }
        }

        auto& traces = out.traces[layer];
        const LayerParams& lp = params.layers[layer];
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t s = 0; s < S; ++s) {
                const std::size_t idx = out.index(s, t);
                const StepTrace* temporal = t > 0 ? &traces[out.index(s, t - 1)] : nullptr;
                const Vector& h_t = temporal ? temporal->h : zero;
                const Vector& c_t = temporal ? temporal->c : zero;
                if (const auto* lstm = std::get_if<LstmParams>(&lp)) {
                    traces[idx] = lstm_step(inputs[idx], h_t, c_t, *lstm);
                    continue;
                }
                const auto& st = std::get<StLstmParams>(lp);
                const StepTrace* spatial = s > 0 ? &traces[out.index(s - 1, t)] : nullptr;
                const Vector& h_s = spatial ? spatial->h : zero;
                const Vector& c_s = spatial ? spatial->c : zero;
                traces[idx] = cfg.cell_kind == CellKind::StLstmTrust
                                  ? trust_gate_st_lstm_step(inputs[idx], h_s, h_t, c_s, c_t, st)
                                  : st_lstm_step(inputs[idx], h_s, h_t, c_s, c_t, st);
            }
        }
    }

    for (auto& tr : out.traces.back()) tr.logits = affine(params.classifier, params.classifier_bias, tr.h);
    return out;
}

/// Full-length forward: the sample must carry exactly cfg.T frames.
inline ForwardOutput forward(const FrameTensor& frames, const TraversalOrder& order, const ModelParams& params,
                             const ModelConfig& cfg, Mode mode, std::uint64_t rng_seed) {
    if (frames.frames != cfg.T)
        throw DataError("forward: sample has " + std::to_string(frames.frames) + " frames, model expects T=" +
                        std::to_string(cfg.T));
    return forward_frames(frames, order, params, cfg, mode, rng_seed, cfg.T);
}

struct Prediction {
    std::size_t label = 0;  // 0-based class index
    Vector probabilities;
};

/// Mean of the per-step softmax distributions; argmax breaks ties toward the
/// lowest class index.
inline Prediction predict(const ForwardOutput& fo) {
    Prediction pred;
    const std::size_t n = fo.lattice_size();
    if (n == 0) throw DataError("predict: empty lattice");
    for (std::size_t idx = 0; idx < n; ++idx) {
        const Vector probs = softmax(fo.logits(idx));
        if (pred.probabilities.empty()) pred.probabilities.assign(probs.size(), 0.0);
        for (std::size_t k = 0; k < probs.size(); ++k) pred.probabilities[k] += probs[k];
    }
    for (double& v : pred.probabilities) v /= static_cast<double>(n);
    for (std::size_t k = 1; k < pred.probabilities.size(); ++k)
        if (pred.probabilities[k] > pred.probabilities[pred.label]) pred.label = k;
    return pred;
}

/// Sum over every lattice step of -log softmax(logits)[label].
inline double loss(const ForwardOutput& fo, std::size_t label) {
    const std::size_t n = fo.lattice_size();
    if (n == 0) throw DataError("loss: empty lattice");
    const std::size_t classes = fo.logits(0).size();
    if (label >= classes)
        throw DataError("loss: label " + std::to_string(label + 1) + " outside [1, " + std::to_string(classes) + "]");
    double total = 0.0;
    for (std::size_t idx = 0; idx < n; ++idx) total -= log_softmax(fo.logits(idx))[label];
    return total;
}

/// Number of leading frames fed for a prefix fraction p in (0, 1].
inline std::size_t prefix_frames(double p, std::size_t T) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("prefix fraction p must be in (0, 1], got " + std::to_string(p));
    // Tolerance keeps e.g. 0.3*10 = 3.0000000000000004 from rounding up to 4.
    const double scaled = p * static_cast<double>(T);
    const auto n = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * static_cast<double>(T)));
    return std::max<std::size_t>(1, std::min(n, T));
}

/// Classifies from the first ceil(p*T) frames only (eval mode).
inline Prediction predict_prefix(const FrameTensor& frames, const TraversalOrder& order, const ModelParams& params,
                                 const ModelConfig& cfg, double p) {
    const std::size_t n = prefix_frames(p, cfg.T);
    if (frames.frames != cfg.T)
        throw DataError("predict_prefix: sample has " + std::to_string(frames.frames) + " frames, model expects T=" +
                        std::to_string(cfg.T));
    return predict(forward_frames(frames, order, params, cfg, Mode::Eval, 0, n));
}

} // namespace stlstm
