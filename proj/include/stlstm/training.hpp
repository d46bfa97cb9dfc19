#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stlstm/data.hpp"
#include "stlstm/network.hpp"

namespace stlstm {

// ---------------------------------------------------------------------------
// Exact gradients

/// Reverse-mode gradient of loss(fo, label) with respect to every parameter,
/// through the classifier, every layer and both recurrence axes (including
/// the trust-gate path). Dropout masks recorded in `fo` are honoured.
inline ModelParams backward(const ForwardOutput& fo, std::size_t label, const ModelParams& params,
                            const ModelConfig& cfg) {
    if (!fo.has_traces() || fo.inputs.size() != params.layers.size())
        throw DataError("backward: forward output carries no traces");
    const std::size_t S = fo.steps;
    const std::size_t T = fo.frames;
    const std::size_t n = fo.lattice_size();
    const std::size_t d = cfg.d;
    const std::size_t classes = params.classifier.rows();
    if (label >= classes)
        throw DataError("backward: label " + std::to_string(label + 1) + " outside [1, " + std::to_string(classes) +
                        "]");

    ModelParams grads = params.zeros_like();
    const Vector zero(d, 0.0);

    // Loss gradient wrt the top layer's hidden states.
    std::vector<Vector> dh_from_above(n, Vector(d, 0.0));
    const auto& top = fo.traces.back();
    for (std::size_t idx = 0; idx < n; ++idx) {
        Vector g = softmax(top[idx].logits);
        g[label] -= 1.0;
        add_outer_product(grads.classifier, g, top[idx].h);
        for (std::size_t k = 0; k < classes; ++k) grads.classifier_bias[k] += g[k];
        add_transposed_product(params.classifier, g, dh_from_above[idx]);
    }

    for (std::size_t layer = params.layers.size(); layer-- > 0;) {
        const auto& traces = fo.traces[layer];
        const auto& inputs = fo.inputs[layer];
        std::vector<Vector> dh_next(n, Vector(d, 0.0));
        std::vector<Vector> dc_next(n, Vector(d, 0.0));
        std::vector<Vector> dx(layer > 0 ? n : 0);

        for (std::size_t t = T; t-- > 0;) {
            for (std::size_t s = S; s-- > 0;) {
                const std::size_t idx = fo.index(s, t);
                Vector dh = dh_from_above[idx];
                for (std::size_t k = 0; k < d; ++k) dh[k] += dh_next[idx][k];
                const Vector& dc = dc_next[idx];
                const StepTrace* temporal = t > 0 ? &traces[fo.index(s, t - 1)] : nullptr;
                const Vector& h_t = temporal ? temporal->h : zero;
                const Vector& c_t = temporal ? temporal->c : zero;

                if (const auto* lstm = std::get_if<LstmParams>(&params.layers[layer])) {
                    auto& g = std::get<LstmParams>(grads.layers[layer]);
                    auto back = lstm_backward(inputs[idx], h_t, c_t, *lstm, traces[idx], dh, dc, g);
                    if (temporal) {
                        const std::size_t prev = fo.index(s, t - 1);
                        for (std::size_t k = 0; k < d; ++k) {
                            dh_next[prev][k] += back.h_prev[k];
                            dc_next[prev][k] += back.c_prev[k];
                        }
                    }
                    if (layer > 0) dx[idx] = std::move(back.x);
                    continue;
                }

                const auto& st = std::get<StLstmParams>(params.layers[layer]);
                auto& g = std::get<StLstmParams>(grads.layers[layer]);
                const StepTrace* spatial = s > 0 ? &traces[fo.index(s - 1, t)] : nullptr;
                const Vector& h_s = spatial ? spatial->h : zero;
                const Vector& c_s = spatial ? spatial->c : zero;
                auto back = st_lstm_backward(inputs[idx], h_s, h_t, c_s, c_t, st, traces[idx], dh, dc, g);
                if (spatial) {
                    const std::size_t prev = fo.index(s - 1, t);
                    for (std::size_t k = 0; k < d; ++k) {
                        dh_next[prev][k] += back.h_spatial[k];
                        dc_next[prev][k] += back.c_spatial[k];
                    }
                }
                if (temporal) {
                    const std::size_t prev = fo.index(s, t - 1);
                    for (std::size_t k = 0; k < d; ++k) {
                        dh_next[prev][k] += back.h_temporal[k];
                        dc_next[prev][k] += back.c_temporal[k];
                    }
                }
                if (layer > 0) dx[idx] = std::move(back.x);
            }
        }

        if (layer > 0) {
            const auto& masks = fo.dropout_masks[layer];
            for (std::size_t idx = 0; idx < n; ++idx) {
                if (!masks.empty())
                    for (std::size_t k = 0; k < d; ++k) dx[idx][k] *= masks[idx][k];
                dh_from_above[idx] = std::move(dx[idx]);
            }
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// (f(x + eps) - f(x - eps)) / (2 eps)
inline double central_difference(const std::function<double(double)>& f, double x, double eps) {
    if (!(eps > 0.0)) throw ConfigError("central_difference: epsilon must be > 0");
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

/// Numerical gradient of the loss, one coordinate at a time, using
/// deterministic eval-mode forwards (no dropout).
inline ModelParams finite_diff_grad(const ModelParams& params, const FrameTensor& frames, const TraversalOrder& order,
                                    const ModelConfig& cfg, std::size_t label, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("finite_diff_grad: epsilon must be > 0");
    ModelParams probe = params;
    ModelParams grads = params.zeros_like();
    auto probe_tensors = probe.tensors();
    auto grad_tensors = grads.tensors();
    for (std::size_t a = 0; a < probe_tensors.size(); ++a) {
        auto values = probe_tensors[a].values;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double original = values[k];
            auto objective = [&](double v) {
                values[k] = v;
                return loss(forward(frames, order, probe, cfg, Mode::Eval, 0), label);
            };
            grad_tensors[a].values[k] = central_difference(objective, original, epsilon);
            values[k] = original;
        }
    }
    return grads;
}

struct GradientComparison {
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Per coordinate |a - n| / max(|a|, |n|, floor); the floor keeps round-off on
/// near-zero coordinates from dominating the maximum.
inline GradientComparison compare_gradients(const ModelParams& analytic, const ModelParams& numeric, double floor = 1e-4) {
    GradientComparison out;
    auto a = analytic.tensors();
    auto b = numeric.tensors();
    if (a.size() != b.size()) throw DimensionError("compare_gradients: tensor count mismatch");
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (a[t].values.size() != b[t].values.size())
            throw DimensionError("compare_gradients: shape mismatch in " + a[t].name);
        for (std::size_t k = 0; k < a[t].values.size(); ++k) {
            const double x = a[t].values[k];
            const double y = b[t].values[k];
            const double rel = std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor});
            if (rel > out.max_relative_error || !std::isfinite(rel)) {
                out = {rel, a[t].name, k, x, y};
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
    double learning_rate = 2e-3;
    double momentum = 0.9;
    double decay = 0.95;      // per-epoch learning-rate multiplier
    double clip_norm = 0.0;   // global gradient-norm clip; 0 disables
    std::optional<ModelParams> velocity;
};

/// velocity = momentum·velocity - lr·grad; params += velocity.
inline void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& opt) {
    if (!opt.velocity) opt.velocity = params.zeros_like();
    auto p = params.tensors();
    const auto g = grads.tensors();
    auto v = opt.velocity->tensors();
    if (p.size() != g.size() || p.size() != v.size()) throw DimensionError("sgd_step: tensor count mismatch");
    for (std::size_t t = 0; t < p.size(); ++t)
        if (p[t].values.size() != g[t].values.size() || p[t].values.size() != v[t].values.size())
            throw DimensionError("sgd_step: shape mismatch in " + p[t].name);

    double scale = 1.0;
    if (opt.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& t : g)
            for (double x : t.values) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
    }
    for (std::size_t t = 0; t < p.size(); ++t)
        for (std::size_t k = 0; k < p[t].values.size(); ++k) {
            double& vel = v[t].values[k];
            vel = opt.momentum * vel - opt.learning_rate * scale * g[t].values[k];
            p[t].values[k] += vel;
        }
}

inline void end_epoch(OptimizerState& opt) { opt.learning_rate *= opt.decay; }

// ---------------------------------------------------------------------------
// Evaluation and training loop

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<std::size_t> predictions;
};

/// Eval-mode accuracy with each segment's middle frame.
inline EvalResult evaluate(const std::vector<JointSequence>& samples, const TraversalOrder& order,
                           const ModelParams& params, const ModelConfig& cfg) {
    EvalResult out;
    out.confusion.assign(cfg.class_count, std::vector<std::size_t>(cfg.class_count, 0));
    if (samples.empty()) return out;
    std::mt19937_64 unused(0);
    std::size_t correct = 0;
    for (const auto& seq : samples) {
        if (seq.label >= cfg.class_count) throw DataError("evaluate: label out of range");
        const auto frames = sample_frames(seq, cfg.T, unused, {.deterministic = true});
        const auto pred = predict(forward(frames, order, params, cfg, Mode::Eval, 0));
        out.predictions.push_back(pred.label);
        out.confusion[seq.label][pred.label]++;
        if (pred.label == seq.label) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean training loss per sample
    double train_accuracy = 0.0;
    double eval_accuracy = std::numeric_limits<double>::quiet_NaN();
    double learning_rate = 0.0;
    double seconds = 0.0;
};

struct TrainRunReport {
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
};

struct TrainOptions {
    std::size_t epochs = 50;
    std::uint64_t seed = 1;
    std::optional<double> stop_at_train_accuracy;  // stop once reached
    SamplingOptions sampling;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    ModelParams params;
    TrainRunReport report;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Per-sample momentum SGD over shuffled epochs. Frames are re-sampled every
/// epoch; init, shuffling, frame sampling and dropout all derive from `opts.seed`.
inline TrainResult train(const std::vector<JointSequence>& train_set, const std::vector<JointSequence>& eval_set,
                         const TraversalOrder& order, const ModelConfig& cfg, OptimizerState opt,
                         const TrainOptions& opts) {
    cfg.validate();
    if (train_set.empty()) throw DataError("train: empty dataset");
    for (const auto& seq : train_set)
        if (seq.label >= cfg.class_count)
            throw DataError("train: label " + std::to_string(seq.label + 1) + " outside [1, " +
                            std::to_string(cfg.class_count) + "]");

    std::mt19937_64 init_rng(detail::splitmix64(opts.seed ^ 0x1));
    std::mt19937_64 shuffle_rng(detail::splitmix64(opts.seed ^ 0x2));
    std::mt19937_64 sample_rng(detail::splitmix64(opts.seed ^ 0x3));
    std::mt19937_64 dropout_rng(detail::splitmix64(opts.seed ^ 0x4));

    TrainResult result;
    result.params = init_model_params(cfg, init_rng);
    result.report.seed = opts.seed;

    std::vector<std::size_t> visit(train_set.size());
    std::iota(visit.begin(), visit.end(), 0);
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(visit.begin(), visit.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t k : visit) {
            const auto frames = sample_frames(train_set[k], cfg.T, sample_rng, opts.sampling);
            const auto fo = forward(frames, order, result.params, cfg, Mode::Train, dropout_rng());
            total += loss(fo, train_set[k].label);
            sgd_step(result.params, backward(fo, train_set[k].label, result.params, cfg), opt);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = total / static_cast<double>(train_set.size());
        rec.train_accuracy = evaluate(train_set, order, result.params, cfg).accuracy;
        if (!eval_set.empty()) rec.eval_accuracy = evaluate(eval_set, order, result.params, cfg).accuracy;
        rec.learning_rate = opt.learning_rate;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.report.epochs.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
        end_epoch(opt);
        if (opts.stop_at_train_accuracy && rec.train_accuracy >= *opts.stop_at_train_accuracy) break;
    }
    return result;
}

} // namespace stlstm
