#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "stlstm/math.hpp"

namespace stlstm {

/// Plain LSTM transform. M is (4d)x(D+d); row blocks are i, f, o, u.
struct LstmParams {
    Matrix M;
    Vector bias;

    std::size_t state_dim() const noexcept { return M.rows() / 4; }
    std::size_t input_dim() const noexcept { return M.cols() - state_dim(); }

    bool operator==(const LstmParams&) const = default;
};

/// Trust-gate extension: input projection M_x (d x D), context predictor
/// M_p (d x 2d) and the spread of the Gaussian response.
struct TrustParams {
    Matrix M_x;
    Vector bias_x;
    Matrix M_p;
    Vector bias_p;
    double lambda = 0.5;

    bool operator==(const TrustParams&) const = default;
};

/// Spatio-temporal LSTM transform. M is (5d)x(D+2d) over the concatenated
/// (x, h_spatial, h_temporal); row blocks are i, f_spatial, f_temporal, o, u.
struct StLstmParams {
    Matrix M;
    Vector bias;
    std::optional<TrustParams> trust;

    std::size_t state_dim() const noexcept { return M.rows() / 5; }
    std::size_t input_dim() const noexcept { return M.cols() - 2 * state_dim(); }

    bool operator==(const StLstmParams&) const = default;
};

/// Activations of one cell evaluation. `tau`, `p` and `x_proj` are empty
/// unless the trust gate ran; the plain LSTM stores its single forget gate
/// in `f_temporal` and leaves `f_spatial` empty.
struct StepTrace {
    Vector i, f_spatial, f_temporal, o, u;
    Vector tau, p, x_proj;
    Vector c, h;
    Vector logits;
};

namespace detail {

inline void check_lstm_shapes(const LstmParams& p, std::size_t D, std::size_t d) {
    if (p.M.rows() % 4 != 0 || p.M.rows() / 4 != d || p.M.cols() != D + d)
        throw DimensionError("lstm: M is " + std::to_string(p.M.rows()) + "x" + std::to_string(p.M.cols()) +
                             ", expected " + std::to_string(4 * d) + "x" + std::to_string(D + d));
    require_dim(p.bias.size(), 4 * d, "lstm: bias");
}

inline void check_st_shapes(const StLstmParams& p, std::size_t D, std::size_t d) {
    if (p.M.rows() % 5 != 0 || p.M.rows() / 5 != d || p.M.cols() != D + 2 * d)
        throw DimensionError("st-lstm: M is " + std::to_string(p.M.rows()) + "x" + std::to_string(p.M.cols()) +
                             ", expected " + std::to_string(5 * d) + "x" + std::to_string(D + 2 * d));
    require_dim(p.bias.size(), 5 * d, "st-lstm: bias");
}

inline void check_trust_shapes(const TrustParams& t, std::size_t D, std::size_t d) {
    if (t.M_x.rows() != d || t.M_x.cols() != D)
        throw DimensionError("trust gate: M_x is " + std::to_string(t.M_x.rows()) + "x" +
                             std::to_string(t.M_x.cols()) + ", expected " + std::to_string(d) + "x" +
                             std::to_string(D));
    if (t.M_p.rows() != d || t.M_p.cols() != 2 * d)
        throw DimensionError("trust gate: M_p is " + std::to_string(t.M_p.rows()) + "x" +
                             std::to_string(t.M_p.cols()) + ", expected " + std::to_string(d) + "x" +
                             std::to_string(2 * d));
    require_dim(t.bias_x.size(), d, "trust gate: bias_x");
    require_dim(t.bias_p.size(), d, "trust gate: bias_p");
    if (!(t.lambda > 0.0)) throw ConfigError("trust gate: lambda must be > 0");
}

inline Vector block(const Vector& z, std::size_t k, std::size_t d) {
    return Vector(z.begin() + static_cast<std::ptrdiff_t>(k * d), z.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
}

// Shared by both ST variants; `use_trust` selects the cell-state update.
inline StepTrace st_step(std::span<const double> x, std::span<const double> h_spatial,
                         std::span<const double> h_temporal, std::span<const double> c_spatial,
                         std::span<const double> c_temporal, const StLstmParams& p, bool use_trust) {
    const std::size_t d = p.state_dim();
    const std::size_t D = x.size();
    check_st_shapes(p, D, d);
    require_dim(h_spatial.size(), d, "st-lstm: h_spatial");
    require_dim(h_temporal.size(), d, "st-lstm: h_temporal");
    require_dim(c_spatial.size(), d, "st-lstm: c_spatial");
    require_dim(c_temporal.size(), d, "st-lstm: c_temporal");

    const Vector z = affine(p.M, p.bias, concat({x, h_spatial, h_temporal}));
    StepTrace tr;
    tr.i = sigmoid(block(z, 0, d));
    tr.f_spatial = sigmoid(block(z, 1, d));
    tr.f_temporal = sigmoid(block(z, 2, d));
    tr.o = sigmoid(block(z, 3, d));
    tr.u = tanh(block(z, 4, d));
    tr.c.resize(d);
    tr.h.resize(d);

    if (use_trust) {
        const TrustParams& t = *p.trust;
        check_trust_shapes(t, D, d);
        tr.p = tanh(affine(t.M_p, t.bias_p, concat({h_spatial, h_temporal})));
        tr.x_proj = tanh(affine(t.M_x, t.bias_x, x));
        Vector mismatch(d);
        for (std::size_t k = 0; k < d; ++k) mismatch[k] = tr.x_proj[k] - tr.p[k];
        tr.tau = gaussian_response(mismatch, t.lambda);
        for (std::size_t k = 0; k < d; ++k) {
            const double keep = 1.0 - tr.tau[k];
            tr.c[k] = tr.tau[k] * tr.i[k] * tr.u[k] + keep * tr.f_spatial[k] * c_spatial[k] +
                      keep * tr.f_temporal[k] * c_temporal[k];
        }
    } else {
        for (std::size_t k = 0; k < d; ++k)
            tr.c[k] = tr.i[k] * tr.u[k] + tr.f_spatial[k] * c_spatial[k] + tr.f_temporal[k] * c_temporal[k];
    }
    for (std::size_t k = 0; k < d; ++k) tr.h[k] = tr.o[k] * std::tanh(tr.c[k]);
    return tr;
}

} // namespace detail

/// Temporal LSTM step: gates from M·(x, h_prev), c = i⊙u + f⊙c_prev, h = o⊙tanh(c).
inline StepTrace lstm_step(std::span<const double> x, std::span<const double> h_prev,
                           std::span<const double> c_prev, const LstmParams& p) {
    const std::size_t d = p.state_dim();
    detail::check_lstm_shapes(p, x.size(), d);
    detail::require_dim(h_prev.size(), d, "lstm: h_prev");
    detail::require_dim(c_prev.size(), d, "lstm: c_prev");

    const Vector z = affine(p.M, p.bias, concat({x, h_prev}));
    StepTrace tr;
    tr.i = sigmoid(detail::block(z, 0, d));
    tr.f_temporal = sigmoid(detail::block(z, 1, d));
    tr.o = sigmoid(detail::block(z, 2, d));
    tr.u = tanh(detail::block(z, 3, d));
    tr.c.resize(d);
    tr.h.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        tr.c[k] = tr.i[k] * tr.u[k] + tr.f_temporal[k] * c_prev[k];
        tr.h[k] = tr.o[k] * std::tanh(tr.c[k]);
    }
    return tr;
}

/// ST-LSTM step with separate spatial and temporal forget gates. A trust
/// extension on `p`, if present, is ignored.
inline StepTrace st_lstm_step(std::span<const double> x, std::span<const double> h_spatial,
                              std::span<const double> h_temporal, std::span<const double> c_spatial,
                              std::span<const double> c_temporal, const StLstmParams& p) {
    return detail::st_step(x, h_spatial, h_temporal, c_spatial, c_temporal, p, false);
}

/// ST-LSTM step gated by input reliability. The context predicts the input
/// (p = tanh(M_p·(h_spatial, h_temporal))), the input is projected
/// (x' = tanh(M_x·x)), and tau = exp(-lambda (x' - p)²) scales the new input
/// while (1 - tau) scales both context cells.
inline StepTrace trust_gate_st_lstm_step(std::span<const double> x, std::span<const double> h_spatial,
                                         std::span<const double> h_temporal, std::span<const double> c_spatial,
                                         std::span<const double> c_temporal, const StLstmParams& p) {
    if (!p.trust) throw ConfigError("trust_gate_st_lstm_step: parameters have no trust extension");
    return detail::st_step(x, h_spatial, h_temporal, c_spatial, c_temporal, p, true);
}

// ---------------------------------------------------------------------------
// Reverse mode

/// Gradients flowing out of one ST cell into its inputs and contexts.
struct StCellInputGrads {
    Vector x, h_spatial, h_temporal, c_spatial, c_temporal;
};

/// Gradients flowing out of one LSTM cell.
struct LstmCellInputGrads {
    Vector x, h_prev, c_prev;
};

/// Backpropagates (dh, dc) through one ST cell evaluation recorded in `tr`.
/// Parameter gradients are accumulated into `grads` (same shapes as `p`).
inline StCellInputGrads st_lstm_backward(std::span<const double> x, std::span<const double> h_spatial,
                                         std::span<const double> h_temporal, std::span<const double> c_spatial,
                                         std::span<const double> c_temporal, const StLstmParams& p,
                                         const StepTrace& tr, std::span<const double> dh,
                                         std::span<const double> dc, StLstmParams& grads) {
    const std::size_t d = p.state_dim();
    const std::size_t D = x.size();
    const bool trusted = !tr.tau.empty();
    Vector dz(5 * d);
    Vector dtau_pre(trusted ? d : 0);  // gradient wrt the mismatch x' - p

    for (std::size_t k = 0; k < d; ++k) {
        const double tc = std::tanh(tr.c[k]);
        const double dct = dc[k] + dh[k] * tr.o[k] * (1.0 - tc * tc);
        const double d_o = dh[k] * tc;
        double d_in = dct;   // wrt i⊙u
        double d_ctx = dct;  // wrt f_s⊙c_s + f_t⊙c_t
        if (trusted) {
            const double tau = tr.tau[k];
            const double ctx = tr.f_spatial[k] * c_spatial[k] + tr.f_temporal[k] * c_temporal[k];
            const double dtau = dct * (tr.i[k] * tr.u[k] - ctx);
            d_in = dct * tau;
            d_ctx = dct * (1.0 - tau);
            const double mismatch = tr.x_proj[k] - tr.p[k];
            dtau_pre[k] = dtau * tau * (-2.0 * p.trust->lambda * mismatch);
        }
        const double di = d_in * tr.u[k];
        const double du = d_in * tr.i[k];
        const double dfs = d_ctx * c_spatial[k];
        const double dft = d_ctx * c_temporal[k];
        dz[k] = di * tr.i[k] * (1.0 - tr.i[k]);
        dz[d + k] = dfs * tr.f_spatial[k] * (1.0 - tr.f_spatial[k]);
        dz[2 * d + k] = dft * tr.f_temporal[k] * (1.0 - tr.f_temporal[k]);
        dz[3 * d + k] = d_o * tr.o[k] * (1.0 - tr.o[k]);
        dz[4 * d + k] = du * (1.0 - tr.u[k] * tr.u[k]);
    }

    StCellInputGrads out;
    out.c_spatial.resize(d);
    out.c_temporal.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double tc = std::tanh(tr.c[k]);
        const double dct = dc[k] + dh[k] * tr.o[k] * (1.0 - tc * tc);
        const double d_ctx = trusted ? dct * (1.0 - tr.tau[k]) : dct;
        out.c_spatial[k] = d_ctx * tr.f_spatial[k];
        out.c_temporal[k] = d_ctx * tr.f_temporal[k];
    }

    const Vector joined = concat({x, h_spatial, h_temporal});
    add_outer_product(grads.M, dz, joined);
    for (std::size_t k = 0; k < 5 * d; ++k) grads.bias[k] += dz[k];
    Vector djoined(D + 2 * d, 0.0);
    add_transposed_product(p.M, dz, djoined);

    if (trusted) {
        const TrustParams& t = *p.trust;
        TrustParams& g = *grads.trust;
        Vector dzx(d), dzp(d);
        for (std::size_t k = 0; k < d; ++k) {
            dzx[k] = dtau_pre[k] * (1.0 - tr.x_proj[k] * tr.x_proj[k]);
            dzp[k] = -dtau_pre[k] * (1.0 - tr.p[k] * tr.p[k]);
        }
        add_outer_product(g.M_x, dzx, x);
        add_outer_product(g.M_p, dzp, concat({h_spatial, h_temporal}));
        for (std::size_t k = 0; k < d; ++k) {
            g.bias_x[k] += dzx[k];
            g.bias_p[k] += dzp[k];
        }
        add_transposed_product(t.M_x, dzx, std::span<double>(djoined).subspan(0, D));
        add_transposed_product(t.M_p, dzp, std::span<double>(djoined).subspan(D, 2 * d));
    }

    out.x.assign(djoined.begin(), djoined.begin() + static_cast<std::ptrdiff_t>(D));
    out.h_spatial.assign(djoined.begin() + static_cast<std::ptrdiff_t>(D),
                         djoined.begin() + static_cast<std::ptrdiff_t>(D + d));
    out.h_temporal.assign(djoined.begin() + static_cast<std::ptrdiff_t>(D + d), djoined.end());
    return out;
}

/// Backpropagates (dh, dc) through one plain LSTM evaluation.
inline LstmCellInputGrads lstm_backward(std::span<const double> x, std::span<const double> h_prev,
                                        std::span<const double> c_prev, const LstmParams& p, const StepTrace& tr,
                                        std::span<const double> dh, std::span<const double> dc,
                                        LstmParams& grads) {
    const std::size_t d = p.state_dim();
    const std::size_t D = x.size();
    Vector dz(4 * d);
    LstmCellInputGrads out;
    out.c_prev.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double tc = std::tanh(tr.c[k]);
        const double dct = dc[k] + dh[k] * tr.o[k] * (1.0 - tc * tc);
        const double f = tr.f_temporal[k];
        dz[k] = dct * tr.u[k] * tr.i[k] * (1.0 - tr.i[k]);
        dz[d + k] = dct * c_prev[k] * f * (1.0 - f);
        dz[2 * d + k] = dh[k] * tc * tr.o[k] * (1.0 - tr.o[k]);
        dz[3 * d + k] = dct * tr.i[k] * (1.0 - tr.u[k] * tr.u[k]);
        out.c_prev[k] = dct * f;
    }
    add_outer_product(grads.M, dz, concat({x, h_prev}));
    for (std::size_t k = 0; k < 4 * d; ++k) grads.bias[k] += dz[k];
    Vector djoined(D + d, 0.0);
    add_transposed_product(p.M, dz, djoined);
    out.x.assign(djoined.begin(), djoined.begin() + static_cast<std::ptrdiff_t>(D));
    out.h_prev.assign(djoined.begin() + static_cast<std::ptrdiff_t>(D), djoined.end());
    return out;
}

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

} // namespace detail

/// Weights uniform in ±1/sqrt(fan_in); biases zero.
inline LstmParams init_lstm_params(std::size_t input_dim, std::size_t state_dim, std::mt19937_64& rng) {
    return {detail::uniform_matrix(4 * state_dim, input_dim + state_dim, rng), Vector(4 * state_dim, 0.0)};
}

inline StLstmParams init_st_lstm_params(std::size_t input_dim, std::size_t state_dim, bool with_trust,
                                        double lambda, std::mt19937_64& rng) {
    StLstmParams p{detail::uniform_matrix(5 * state_dim, input_dim + 2 * state_dim, rng),
                   Vector(5 * state_dim, 0.0), std::nullopt};
    if (with_trust) {
        if (!(lambda > 0.0)) throw ConfigError("trust gate: lambda must be > 0");
        TrustParams t;
        t.M_x = detail::uniform_matrix(state_dim, input_dim, rng);
        t.bias_x = Vector(state_dim, 0.0);
        t.M_p = detail::uniform_matrix(state_dim, 2 * state_dim, rng);
        t.bias_p = Vector(state_dim, 0.0);
        t.lambda = lambda;
        p.trust = std::move(t);
    }
    return p;
}

} // namespace stlstm
