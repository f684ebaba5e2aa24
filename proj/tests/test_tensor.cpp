// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "sitgru/random.hpp"
#include "sitgru/tensor.hpp"

namespace sitgru {
namespace {

TEST(TensorTest, ShapeAndSize) {
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 12u);
    EXPECT_THROW(Tensor({2, 0}), DimensionError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    EXPECT_THROW(t.reshape({5, 5}), DimensionError);
}

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
    const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(MatmulTest, RowTimesColumn) {
    const Tensor r = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
    EXPECT_EQ(r.shape(), (Shape{1, 1}));
    EXPECT_DOUBLE_EQ(r[0], 11.0);
}

TEST(MatmulTest, ZeroAnnihilates) {
    Rng rng(3);
    const Tensor r = matmul(Tensor({2, 3}), random_uniform({3, 2}, -1, 1, rng));
    EXPECT_EQ(r, Tensor({2, 2}));
}

TEST(MatmulTest, MismatchNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    }
}

TEST(MatmulTest, TransposedVariantsAgreeWithExplicitTranspose) {
    Rng rng(11);
    const Tensor a = random_uniform({4, 3}, -1, 1, rng);
    const Tensor b = random_uniform({5, 3}, -1, 1, rng);
    const Tensor c = random_uniform({4, 5}, -1, 1, rng);
    Tensor bt({3, 5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) bt.at(j, i) = b.at(i, j);
    Tensor at({3, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) at.at(j, i) = a.at(i, j);
    const Tensor nt = matmul_nt(a, b), ref_nt = matmul(a, bt);
    const Tensor tn = matmul_tn(a, c), ref_tn = matmul(at, c);
    for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], ref_nt[i], 1e-14);
    for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref_tn[i], 1e-14);
}

TEST(MatmulTest, AssociativeOnRandomChains) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng() % 6, k = 1 + rng() % 6, l = 1 + rng() % 6, n = 1 + rng() % 6;
        const Tensor a = random_uniform({m, k}, -2, 2, rng);
        const Tensor b = random_uniform({k, l}, -2, 2, rng);
        const Tensor c = random_uniform({l, n}, -2, 2, rng);
        const Tensor left = matmul(matmul(a, b), c);
        const Tensor right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double scale = std::max({1.0, std::abs(left[i]), std::abs(right[i])});
            EXPECT_LE(std::abs(left[i] - right[i]) / scale, 1e-9);
        }
    }
}

TEST(MatmulTest, RepeatedRunsAreBitIdentical) {
    Rng rng(5);
    const Tensor a = random_uniform({7, 9}, -1, 1, rng);
    const Tensor b = random_uniform({9, 4}, -1, 1, rng);
    EXPECT_EQ(matmul(a, b), matmul(a, b));
}

TEST(HadamardTest, Examples) {
    EXPECT_EQ(hadamard(Tensor::vector({1, 2, 3}), Tensor::vector({1, 1, 1})), Tensor::vector({1, 2, 3}));
    EXPECT_EQ(hadamard(Tensor::vector({2, 3}), Tensor::vector({4, 5})), Tensor::vector({8, 15}));
    EXPECT_EQ(hadamard(Tensor::vector({-7.25}), Tensor::vector({0})), Tensor::vector({0}));
    EXPECT_THROW(hadamard(Tensor::vector({1, 2}), Tensor::vector({1})), DimensionError);
}

TEST(HadamardTest, CommutativeAndRespectsZeros) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_uniform({3, 4}, -5, 5, rng);
        const Tensor b = random_uniform({3, 4}, -5, 5, rng);
        a[static_cast<std::size_t>(rng() % a.size())] = 0.0;
        EXPECT_EQ(hadamard(a, b), hadamard(b, a));
        const Tensor p = hadamard(a, b);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] == 0.0) {
                EXPECT_EQ(p[i], 0.0);
            }
    }
}

TEST(ActivationTest, KnownValues) {
    EXPECT_DOUBLE_EQ(apply_activation(Tensor::vector({0}), ActivationKind::Sigmoid)[0], 0.5);
    EXPECT_DOUBLE_EQ(apply_activation(Tensor::vector({0}), ActivationKind::Tanh)[0], 0.0);
    EXPECT_NEAR(apply_activation(Tensor::vector({2.5}), ActivationKind::Sigmoid)[0], 0.92414, 1e-5);
    EXPECT_EQ(apply_activation(Tensor::vector({-2, 3}), ActivationKind::Relu), Tensor::vector({0, 3}));
}

TEST(ActivationTest, Gradients) {
    EXPECT_DOUBLE_EQ(activation_grad(Tensor::vector({0.5}), ActivationKind::Sigmoid)[0], 0.25);
    EXPECT_DOUBLE_EQ(activation_grad(Tensor::vector({0.0}), ActivationKind::Tanh)[0], 1.0);
    EXPECT_EQ(activation_grad(Tensor::vector({3.0, 0.0}), ActivationKind::Relu), Tensor::vector({1.0, 0.0}));
}

TEST(ActivationTest, SigmoidSymmetryAndTanhIdentity) {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const double x = uniform(rng, -30.0, 30.0);
        const double s = sigmoid(x);
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
        EXPECT_NEAR(sigmoid(-x), 1.0 - s, 1e-12);
        EXPECT_NEAR(std::tanh(x), 2.0 * sigmoid(2.0 * x) - 1.0, 1e-12);
    }
    // Strict bounds hold wherever the double format can still represent them.
    for (double x : {-30.0, -5.0, 5.0, 30.0}) {
        EXPECT_GT(sigmoid(x), 0.0);
        EXPECT_LT(sigmoid(x), 1.0);
    }
    EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(ActivationTest, OutputsStayFinite) {
    Rng rng(4);
    const Tensor t = random_uniform({100}, -1e3, 1e3, rng);
    for (auto k : {ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Relu})
        EXPECT_TRUE(apply_activation(t, k).all_finite());
}

TEST(RandomTest, NamedStreamsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(42, "init"), derive_seed(42, "init"));
    EXPECT_NE(derive_seed(42, "init"), derive_seed(42, "split"));
    EXPECT_NE(derive_seed(42, "init"), derive_seed(43, "init"));
}

}  // namespace
}  // namespace sitgru
