#include <cmath>

#include <gtest/gtest.h>

#include "stlstm/math.hpp"

using namespace stlstm;

TEST(Affine, IdentityWithZeroBias) {
    const Vector x{1.5, -2.0, 0.25};
    EXPECT_EQ(affine(Matrix::identity(3), Vector(3, 0.0), x), x);
}

TEST(Affine, KnownProduct) {
    Matrix W(2, 3, {1, 2, 3, 4, 5, 6});
    const Vector y = affine(W, Vector{0.5, -1.0}, Vector{1, 0, -1});
    EXPECT_DOUBLE_EQ(y[0], -1.5);
    EXPECT_DOUBLE_EQ(y[1], -3.0);
}

TEST(Affine, ShapeMismatchThrows) {
    Matrix W(2, 3);
    EXPECT_THROW(affine(W, Vector(2), Vector(2)), DimensionError);
    EXPECT_THROW(affine(W, Vector(3), Vector(3)), DimensionError);
}

TEST(Matrix, WrongValueCountThrows) { EXPECT_THROW(Matrix(2, 2, Vector{1, 2, 3}), DimensionError); }

TEST(Sigmoid, ZeroIsHalf) { EXPECT_EQ(sigmoid(0.0), 0.5); }

TEST(Sigmoid, ValueAtTwo) { EXPECT_NEAR(sigmoid(2.0), 0.88079707797788244406, 1e-15); }

TEST(Sigmoid, SymmetryAndRange) {
    for (double z = -30.0; z <= 30.0; z += 0.37) {
        EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 1e-15);
        EXPECT_GE(sigmoid(z), 0.0);
        EXPECT_LE(sigmoid(z), 1.0);
    }
}

TEST(Tanh, Elementwise) {
    const Vector z{-1.0, 0.0, 0.3};
    const Vector t = tanh(z);
    for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(t[k], std::tanh(z[k]));
}

TEST(Gaussian, ZeroGivesOne) { EXPECT_EQ(gaussian_response(Vector{0.0}, 0.5)[0], 1.0); }

TEST(Gaussian, ValueAtTwo) { EXPECT_NEAR(gaussian_response(Vector{2.0}, 0.5)[0], 0.13533528323661269189, 1e-16); }

TEST(Gaussian, EvenAndBounded) {
    for (double z = -5.0; z <= 5.0; z += 0.25) {
        const double a = gaussian_response(Vector{z}, 0.7)[0];
        EXPECT_EQ(a, gaussian_response(Vector{-z}, 0.7)[0]);
        EXPECT_GT(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(Gaussian, NonPositiveLambdaThrows) {
    EXPECT_THROW(gaussian_response(Vector{1.0}, 0.0), ConfigError);
    EXPECT_THROW(gaussian_response(Vector{1.0}, -1.0), ConfigError);
}

TEST(Softmax, KnownPair) {
    const Vector p = softmax(Vector{1.0, 2.0});
    EXPECT_NEAR(p[0], 0.26894142136999512075, 1e-15);
    EXPECT_NEAR(p[1], 0.73105857863000487925, 1e-15);
}

TEST(Softmax, EqualLogitsUniform) {
    const Vector p = softmax(Vector{3.0, 3.0, 3.0, 3.0});
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ShiftInvariantAndStable) {
    const Vector a = softmax(Vector{1.0, -2.0, 0.5});
    const Vector b = softmax(Vector{1001.0, 998.0, 1000.5});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
    EXPECT_TRUE(all_finite(softmax(Vector{1e300, -1e300})));
}

TEST(LogSoftmax, KnownValue) { EXPECT_NEAR(log_softmax(Vector{1.0, 2.0})[0], -1.313261687518222834, 1e-15); }

TEST(TransposedProduct, MatchesExplicitTranspose) {
    Matrix W(2, 3, {1, 2, 3, 4, 5, 6});
    Vector out(3, 0.0);
    add_transposed_product(W, Vector{1.0, -1.0}, out);
    EXPECT_EQ(out, (Vector{-3.0, -3.0, -3.0}));
}

TEST(OuterProduct, Accumulates) {
    Matrix G(2, 2);
    add_outer_product(G, Vector{1.0, 2.0}, Vector{3.0, 4.0});
    add_outer_product(G, Vector{1.0, 0.0}, Vector{1.0, 1.0});
    EXPECT_EQ(G, Matrix(2, 2, {4, 5, 6, 8}));
}

TEST(Concat, JoinsInOrder) {
    const Vector a{1}, b{2, 3};
    EXPECT_EQ(concat({a, b, a}), (Vector{1, 2, 3, 1}));
}
