#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stlstm/cells.hpp"

using namespace stlstm;

namespace {

LstmParams scalar_lstm() {
    // every gate row reads (x, h_prev) with weights (0.1, 0.2)
    return {Matrix(4, 2, {0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1, 0.2}), Vector(4, 0.0)};
}

StLstmParams scalar_st(bool trust) {
    StLstmParams p{Matrix(5, 3, 0.1), Vector(5, 0.0), std::nullopt};
    if (trust) p.trust = TrustParams{Matrix(1, 1, 0.1), Vector(1, 0.0), Matrix(1, 2, 0.1), Vector(1, 0.0), 0.5};
    return p;
}

const Vector x1{1.0}, hs{0.2}, ht{-0.2}, cs{0.3}, ct{0.7};

} // namespace

TEST(LstmCell, ScalarHandEvaluation) {
    const auto tr = lstm_step(x1, Vector{0.5}, Vector{1.0}, scalar_lstm());
    const double g = 1.0 / (1.0 + std::exp(-0.2));
    EXPECT_NEAR(tr.i[0], g, 1e-15);
    EXPECT_NEAR(tr.f_temporal[0], g, 1e-15);
    EXPECT_NEAR(tr.o[0], g, 1e-15);
    EXPECT_NEAR(tr.u[0], std::tanh(0.2), 1e-15);
    EXPECT_NEAR(tr.c[0], 0.65835765860256724149, 1e-12);
    EXPECT_NEAR(tr.h[0], 0.31740234371896515681, 1e-12);
}

TEST(LstmCell, SaturatedGatesPassInput) {
    LstmParams p{Matrix(4, 2, 0.0), Vector{50.0, -50.0, 50.0, 0.3}};
    const auto tr = lstm_step(x1, Vector{0.0}, Vector{5.0}, p);
    EXPECT_NEAR(tr.c[0], std::tanh(0.3), 1e-12);
}

TEST(LstmCell, ShapeChecks) {
    EXPECT_THROW(lstm_step(Vector{1.0, 2.0}, Vector{0.0}, Vector{0.0}, scalar_lstm()), DimensionError);
    EXPECT_THROW(lstm_step(x1, Vector{0.0, 0.0}, Vector{0.0}, scalar_lstm()), DimensionError);
}

TEST(StLstmCell, ScalarHandEvaluation) {
    const auto tr = st_lstm_step(x1, hs, ht, cs, ct, scalar_st(false));
    const double g = 1.0 / (1.0 + std::exp(-0.1));
    EXPECT_NEAR(tr.i[0], g, 1e-15);
    EXPECT_NEAR(tr.f_spatial[0], g, 1e-15);
    EXPECT_NEAR(tr.f_temporal[0], g, 1e-15);
    EXPECT_NEAR(tr.c[0], 0.57730281031480464884, 1e-12);
    EXPECT_NEAR(tr.h[0], 0.27335786683534309638, 1e-12);
    EXPECT_TRUE(tr.tau.empty());
}

TEST(StLstmCell, SeparateForgetGatesSelectContext) {
    // f_spatial saturated open, f_temporal shut, input gate shut
    StLstmParams p{Matrix(5, 3, 0.0), Vector{-60.0, 60.0, -60.0, 0.0, 0.0}, std::nullopt};
    const auto tr = st_lstm_step(x1, hs, ht, cs, ct, p);
    EXPECT_NEAR(tr.c[0], cs[0], 1e-12);
    p.bias = {-60.0, -60.0, 60.0, 0.0, 0.0};
    EXPECT_NEAR(st_lstm_step(x1, hs, ht, cs, ct, p).c[0], ct[0], 1e-12);
}

TEST(StLstmCell, IgnoresTrustExtension) {
    const auto a = st_lstm_step(x1, hs, ht, cs, ct, scalar_st(false));
    const auto b = st_lstm_step(x1, hs, ht, cs, ct, scalar_st(true));
    EXPECT_EQ(a.c, b.c);
    EXPECT_EQ(a.h, b.h);
}

TEST(TrustCell, ScalarHandEvaluation) {
    const auto tr = trust_gate_st_lstm_step(x1, hs, ht, cs, ct, scalar_st(true));
    EXPECT_NEAR(tr.x_proj[0], std::tanh(0.1), 1e-15);
    EXPECT_NEAR(tr.p[0], 0.0, 1e-15);
    EXPECT_NEAR(tr.tau[0], 0.99504545984948763497, 1e-12);
    EXPECT_NEAR(tr.c[0], 0.054665413808251872032, 1e-12);
    EXPECT_NEAR(tr.h[0], 0.028669652299945748822, 1e-12);
}

TEST(TrustCell, RequiresTrustParams) {
    EXPECT_THROW(trust_gate_st_lstm_step(x1, hs, ht, cs, ct, scalar_st(false)), ConfigError);
}

TEST(TrustCell, FullTrustKeepsOnlyNewInput) {
    // x' and p both collapse to tanh(b): tau = 1 and c = i*u exactly
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    const std::size_t D = 3, d = 4;
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = init_st_lstm_params(D, d, true, 0.5, rng);
        for (double& v : p.bias) v = U(rng);
        std::fill(p.trust->M_x.values().begin(), p.trust->M_x.values().end(), 0.0);
        std::fill(p.trust->M_p.values().begin(), p.trust->M_p.values().end(), 0.0);
        for (std::size_t k = 0; k < d; ++k) p.trust->bias_x[k] = p.trust->bias_p[k] = U(rng);
        Vector x(D), a(d), b(d), c(d), e(d);
        for (auto* v : {&x, &a, &b, &c, &e})
            for (double& z : *v) z = U(rng);
        const auto tr = trust_gate_st_lstm_step(x, a, b, c, e, p);
        for (std::size_t k = 0; k < d; ++k) {
            ASSERT_EQ(tr.tau[k], 1.0);
            ASSERT_EQ(tr.c[k], tr.i[k] * tr.u[k]);
        }
    }
}

TEST(TrustCell, LargeMismatchFavoursContext) {
    // x' = tanh(40) ~ 1 while p = tanh(-40) ~ -1: tau = exp(-0.5*4)
    StLstmParams p = scalar_st(true);
    p.trust->bias_x = {40.0};
    p.trust->bias_p = {-40.0};
    const auto tr = trust_gate_st_lstm_step(x1, hs, ht, cs, ct, p);
    EXPECT_NEAR(tr.tau[0], std::exp(-2.0), 1e-12);
    const double keep = 1.0 - tr.tau[0];
    EXPECT_NEAR(tr.c[0], tr.tau[0] * tr.i[0] * tr.u[0] + keep * (tr.f_spatial[0] * 0.3 + tr.f_temporal[0] * 0.7), 1e-15);
}

TEST(CellInvariants, RandomInputsStayInRange) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = init_st_lstm_params(3, 5, true, 0.5, rng);
        Vector x(3), a(5), b(5), c(5), e(5);
        for (auto* v : {&x, &a, &b, &c, &e})
            for (double& z : *v) z = N(rng);
        const auto tr = trust_gate_st_lstm_step(x, a, b, c, e, p);
        for (std::size_t k = 0; k < 5; ++k) {
            for (double g : {tr.i[k], tr.f_spatial[k], tr.f_temporal[k], tr.o[k]}) {
                ASSERT_GT(g, 0.0);
                ASSERT_LT(g, 1.0);
            }
            ASSERT_GT(tr.tau[k], 0.0);
            ASSERT_LE(tr.tau[k], 1.0);
            ASSERT_LT(std::abs(tr.h[k]), 1.0);
        }
    }
}

TEST(CellInit, ShapesAndBounds) {
    std::mt19937_64 rng(1);
    const auto p = init_st_lstm_params(3, 8, true, 0.5, rng);
    EXPECT_EQ(p.M.rows(), 40u);
    EXPECT_EQ(p.M.cols(), 19u);
    EXPECT_EQ(p.trust->M_x.rows(), 8u);
    EXPECT_EQ(p.trust->M_x.cols(), 3u);
    EXPECT_EQ(p.trust->M_p.cols(), 16u);
    for (double v : p.M.values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(19.0));
    for (double v : p.bias) EXPECT_EQ(v, 0.0);
    const auto l = init_lstm_params(3, 8, rng);
    EXPECT_EQ(l.M.rows(), 32u);
    EXPECT_EQ(l.M.cols(), 11u);
    EXPECT_THROW(init_st_lstm_params(3, 8, true, 0.0, rng), ConfigError);
}

TEST(CellBackward, MatchesFiniteDifferencesOnOneStep) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0.0, 1.0);
    auto p = init_st_lstm_params(3, 4, true, 0.5, rng);
    for (double& v : p.bias) v = 0.3 * N(rng);
    Vector x(3), a(4), b(4), c(4), e(4), gh(4), gc(4);
    for (auto* v : {&x, &a, &b, &c, &e, &gh, &gc})
        for (double& z : *v) z = N(rng);
    // scalar objective: gh . h + gc . c
    auto objective = [&](const StLstmParams& q, const Vector& xx) {
        const auto tr = trust_gate_st_lstm_step(xx, a, b, c, e, q);
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += gh[k] * tr.h[k] + gc[k] * tr.c[k];
        return s;
    };
    const auto tr = trust_gate_st_lstm_step(x, a, b, c, e, p);
    StLstmParams grads = p;
    for (double& v : grads.M.values()) v = 0.0;
    for (double& v : grads.bias) v = 0.0;
    for (auto* m : {&grads.trust->M_x, &grads.trust->M_p})
        for (double& v : m->values()) v = 0.0;
    for (auto* v : {&grads.trust->bias_x, &grads.trust->bias_p}) std::fill(v->begin(), v->end(), 0.0);
    const auto in = st_lstm_backward(x, a, b, c, e, p, tr, gh, gc, grads);

    const double eps = 1e-6;
    for (std::size_t k = 0; k < p.trust->M_x.size(); ++k) {
        auto hi = p, lo = p;
        hi.trust->M_x.values()[k] += eps;
        lo.trust->M_x.values()[k] -= eps;
        EXPECT_NEAR(grads.trust->M_x.values()[k], (objective(hi, x) - objective(lo, x)) / (2 * eps), 1e-7);
    }
    for (std::size_t k = 0; k < 3; ++k) {
        Vector hi = x, lo = x;
        hi[k] += eps;
        lo[k] -= eps;
        EXPECT_NEAR(in.x[k], (objective(p, hi) - objective(p, lo)) / (2 * eps), 1e-7);
    }
}
