#include <gtest/gtest.h>

#include "oracles.hpp"
#include "u3m/ops.hpp"
#include "u3m/rng.hpp"

using namespace u3m;

namespace {

void expect_tensor_near(const Tensor& got, const Tensor& want, double tol) {
    ASSERT_EQ(got.shape(), want.shape());
    for (size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], tol) << "at linear index " << i;
}

TEST(Tensor, ShapeDataInvariant) {
    Tensor t({2, 3});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_THROW(Tensor({2, 0}), shape_error);
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), shape_error);
}

TEST(Tensor, CopyOnWrite) {
    Tensor a = Tensor::full({3}, 1.0);
    Tensor b = a;
    b.mut()[0] = 7.0;
    EXPECT_DOUBLE_EQ(a.data()[0], 1.0);
    EXPECT_DOUBLE_EQ(b.data()[0], 7.0);
}

TEST(Matmul, IdentityCase) {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {3, 1, 4, 2});
    expect_tensor_near(matmul(eye, m), m, 0.0);
}

TEST(Matmul, HandArithmetic) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {5, 6, 7, 8});
    expect_tensor_near(matmul(a, b), Tensor({2, 2}, {19, 22, 43, 50}), 0.0);
}

TEST(Matmul, ZeroAnnihilation) {
    Rng rng(3);
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::uniform({3, 4}, rng, -1, 1);
    expect_tensor_near(matmul(a, b), Tensor::zeros({2, 4}), 0.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    Tensor a({2, 3});
    Tensor b({4, 2});
    try {
        matmul(a, b);
        FAIL() << "expected shape_error";
    } catch (const shape_error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
    }
}

TEST(Matmul, BatchBroadcastMatchesOracle) {
    Rng rng(11);
    Tensor a = Tensor::uniform({2, 3, 4}, rng, -1, 1);
    Tensor b = Tensor::uniform({4, 5}, rng, -1, 1);
    Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
    for (size_t batch = 0; batch < 2; ++batch) {
        Tensor a2({3, 4});
        std::copy(a.data() + batch * 12, a.data() + (batch + 1) * 12, a2.mut());
        Tensor want = oracle::matmul2d(a2, b);
        for (size_t i = 0; i < 15; ++i) EXPECT_NEAR(c.data()[batch * 15 + i], want.data()[i], 1e-12);
    }
}

TEST(Conv2d, IdentityKernel1x1) {
    Rng rng(5);
    Tensor x = Tensor::uniform({1, 1, 4, 5}, rng, -1, 1);
    Tensor w({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, w, Tensor::zeros({1}), 1, 0);
    expect_tensor_near(y, x, 0.0);
}

TEST(Conv2d, OnesKernelOnConstantInterior) {
    double c = 0.37;
    Tensor x = Tensor::full({1, 1, 5, 5}, c);
    Tensor w = Tensor::ones({1, 1, 3, 3});
    Tensor y = conv2d(x, w, Tensor::zeros({1}), 1, 1);
    EXPECT_NEAR(y.at({0, 0, 2, 2}), 9.0 * c, 1e-12);
    EXPECT_NEAR(y.at({0, 0, 0, 0}), 4.0 * c, 1e-12);  // corner sees 2x2 support
}

TEST(Conv2d, MatchesNestedLoopOracle) {
    Rng rng(7);
    Tensor x = Tensor::uniform({1, 1, 4, 4}, rng, -1, 1);
    Tensor w = Tensor::uniform({1, 1, 3, 3}, rng, -1, 1);
    Tensor b = Tensor::uniform({1}, rng, -1, 1);
    expect_tensor_near(conv2d(x, w, b, 1, 1), oracle::conv2d(x, w, b, 1, 1), 1e-12);
}

TEST(Conv2d, StridedAndGroupedMatchOracle) {
    Rng rng(13);
    Tensor x = Tensor::uniform({2, 4, 7, 7}, rng, -1, 1);
    Tensor w = Tensor::uniform({6, 2, 3, 3}, rng, -1, 1);
    Tensor b = Tensor::uniform({6}, rng, -1, 1);
    expect_tensor_near(conv2d(x, w, b, 2, 1, 2), oracle::conv2d(x, w, b, 2, 1, 2), 1e-12);

    Tensor wd = Tensor::uniform({4, 1, 5, 5}, rng, -1, 1);
    Tensor bd = Tensor::uniform({4}, rng, -1, 1);
    expect_tensor_near(conv2d(x, wd, bd, 1, 2, 4), oracle::conv2d(x, wd, bd, 1, 2, 4), 1e-12);
}

TEST(Conv2d, NonIntegralExtentRejected) {
    Tensor x({1, 1, 6, 6});
    Tensor w({1, 1, 3, 3});
    EXPECT_THROW(conv2d(x, w, Tensor(), 2, 1), shape_error);
    EXPECT_NO_THROW(conv2d(x, w, Tensor(), 2, 1, 1, /*require_exact=*/false));
}

TEST(Conv2d, CenteredDeltaKernelIsIdentity) {
    Rng rng(17);
    Tensor x = Tensor::uniform({2, 3, 6, 6}, rng, -1, 1);
    Tensor w = Tensor::zeros({3, 3, 3, 3});
    for (size_t o = 0; o < 3; ++o) w.set({o, o, 1, 1}, 1.0);
    expect_tensor_near(conv2d(x, w, Tensor::zeros({3}), 1, 1), x, 0.0);
}

TEST(AdaptivePool, ConstantInvariance) {
    Tensor x = Tensor::full({1, 2, 6, 6}, 1.25);
    for (size_t bins : {1, 2, 3, 5}) {
        Tensor y = adaptive_avg_pool2d(x, bins);
        for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], 1.25);
    }
}

TEST(AdaptivePool, SingleBinIsGlobalMean) {
    Rng rng(23);
    Tensor x = Tensor::uniform({2, 3, 5, 7}, rng, -1, 1);
    Tensor y = adaptive_avg_pool2d(x, 1);
    for (size_t b = 0; b < 2; ++b)
        for (size_t c = 0; c < 3; ++c) {
            double mean = 0;
            for (size_t i = 0; i < 5; ++i)
                for (size_t j = 0; j < 7; ++j) mean += x.at({b, c, i, j});
            EXPECT_NEAR(y.at({b, c, 0, 0}), mean / 35.0, 1e-12);
        }
}

TEST(AdaptivePool, RampMatchesWindowOracle) {
    Tensor x({1, 1, 6, 6});
    for (size_t i = 0; i < 6; ++i)
        for (size_t j = 0; j < 6; ++j) x.set({0, 0, i, j}, double(i));
    expect_tensor_near(adaptive_avg_pool2d(x, 2), oracle::adaptive_pool(x, 2), 1e-12);

    Rng rng(29);
    Tensor r = Tensor::uniform({1, 2, 7, 5}, rng, -1, 1);
    expect_tensor_near(adaptive_avg_pool2d(r, 3), oracle::adaptive_pool(r, 3), 1e-12);
}

TEST(AdaptivePool, OversizedBinsRejected) {
    Tensor x({1, 1, 3, 3});
    EXPECT_THROW(adaptive_avg_pool2d(x, 4), shape_error);
    EXPECT_THROW(adaptive_avg_pool2d(x, 0), shape_error);
}

TEST(AdaptivePool, MeanPreservedWhenBinsDivide) {
    Rng rng(31);
    Tensor x = Tensor::uniform({1, 2, 6, 6}, rng, -1, 1);
    Tensor y = adaptive_avg_pool2d(x, 3);
    for (size_t c = 0; c < 2; ++c) {
        double mx = 0, my = 0;
        for (size_t i = 0; i < 36; ++i) mx += x.data()[c * 36 + i];
        for (size_t i = 0; i < 9; ++i) my += y.data()[c * 9 + i];
        EXPECT_NEAR(mx / 36.0, my / 9.0, 1e-12);
    }
}

TEST(Bilinear, IdentityWhenSameSize) {
    Rng rng(37);
    Tensor x = Tensor::uniform({1, 2, 4, 4}, rng, -1, 1);
    Tensor y = bilinear_upsample(x, 4, 4);
    for (size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x.data()[i], y.data()[i]);
}

TEST(Bilinear, ConstantInvariance) {
    Tensor x = Tensor::full({1, 1, 2, 3}, -0.7);
    Tensor y = bilinear_upsample(x, 9, 11);
    for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], -0.7);
}

TEST(Bilinear, TwoByTwoMatchesFormulaOracle) {
    Tensor x({1, 1, 2, 2}, {0, 1, 2, 3});
    expect_tensor_near(bilinear_upsample(x, 4, 4), oracle::bilinear(x, 4, 4), 1e-12);
    // frozen row 1 from direct evaluation
    Tensor y = bilinear_upsample(x, 4, 4);
    EXPECT_NEAR(y.at({0, 0, 1, 0}), 0.5, 1e-15);
    EXPECT_NEAR(y.at({0, 0, 1, 1}), 0.75, 1e-15);
    EXPECT_NEAR(y.at({0, 0, 1, 2}), 1.25, 1e-15);
    EXPECT_NEAR(y.at({0, 0, 1, 3}), 1.5, 1e-15);
}

TEST(Bilinear, DownsampleRejected) {
    Tensor x({1, 1, 4, 4});
    EXPECT_THROW(bilinear_upsample(x, 2, 4), shape_error);
}

TEST(Softmax, SymmetricPair) {
    Tensor x({2}, {0, 0});
    Tensor y = softmax(x, 0);
    EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.data()[1], 0.5);
}

TEST(Softmax, ShiftInvariance) {
    Tensor x({3}, {0.3, -1.2, 2.0});
    Tensor xs({3}, {0.3 + 17.5, -1.2 + 17.5, 2.0 + 17.5});
    Tensor a = softmax(x, 0), b = softmax(xs, 0);
    for (size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-14);
}

TEST(Softmax, FrozenOracleValues) {
    Tensor x({3}, {1, 2, 3});
    Tensor y = softmax(x, 0);
    EXPECT_NEAR(y.data()[0], 0.090030573170380458, 1e-15);
    EXPECT_NEAR(y.data()[1], 0.24472847105479765, 1e-15);
    EXPECT_NEAR(y.data()[2], 0.66524095577482189, 1e-15);
}

TEST(Softmax, RowsSumToOneProperty) {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = Tensor::uniform({3, 7}, rng, -50, 50);
        int axis = trial % 2;
        Tensor y = softmax(x, axis);
        size_t len = y.extent(axis), other = y.numel() / len;
        for (size_t o = 0; o < other; ++o) {
            double s = 0;
            for (size_t l = 0; l < len; ++l)
                s += axis == 0 ? y.at({l, o}) : y.at({o, l});
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(LayerNorm, ConstantRowGoesToBeta) {
    Tensor x = Tensor::full({2, 4}, 3.0);
    Tensor gamma = Tensor::ones({4});
    Tensor beta({4}, {0.1, 0.2, 0.3, 0.4});
    Tensor y = layer_norm(x, gamma, beta);
    for (size_t r = 0; r < 2; ++r)
        for (size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at({r, c}), beta.data()[c], 1e-9);
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
    Rng rng(43);
    Tensor x = Tensor::uniform({3, 5}, rng, -2, 2);
    Tensor beta = Tensor::uniform({5}, rng, -1, 1);
    Tensor y = layer_norm(x, Tensor::zeros({5}), beta);
    for (size_t r = 0; r < 3; ++r)
        for (size_t c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(y.at({r, c}), beta.data()[c]);
}

TEST(LayerNorm, MomentOracle) {
    Rng rng(47);
    Tensor x = Tensor::uniform({4, 16}, rng, -3, 3);
    Tensor y = layer_norm(x, Tensor::ones({16}), Tensor::zeros({16}), 1e-12);
    for (size_t r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (size_t c = 0; c < 16; ++c) mean += y.at({r, c});
        mean /= 16;
        for (size_t c = 0; c < 16; ++c) var += (y.at({r, c}) - mean) * (y.at({r, c}) - mean);
        var /= 16;
        EXPECT_NEAR(mean, 0.0, 1e-10);
        EXPECT_NEAR(var, 1.0, 1e-10);
    }
}

TEST(Elementwise, GeluFixedPoints) {
    Tensor x({3}, {0.0, 1.0, -1.0});
    Tensor y = gelu(x);
    EXPECT_DOUBLE_EQ(y.data()[0], 0.0);
    EXPECT_NEAR(y.data()[1], 0.84119199060827670, 1e-15);
    // reflection identity: gelu(x) - gelu(-x) == x
    EXPECT_NEAR(y.data()[1] - y.data()[2], 1.0, 1e-15);
}

TEST(Elementwise, SigmoidSymmetryAndSaturation) {
    Tensor x({3}, {0.0, 800.0, -800.0});
    Tensor y = sigmoid(x);
    EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.data()[1], 1.0);
    EXPECT_DOUBLE_EQ(y.data()[2], 0.0);
}

TEST(Elementwise, BroadcastAddMul) {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3}, {10, 20, 30});
    expect_tensor_near(add(a, b), Tensor({2, 3}, {11, 22, 33, 14, 25, 36}), 0.0);
    expect_tensor_near(mul(a, b), Tensor({2, 3}, {10, 40, 90, 40, 100, 180}), 0.0);
    EXPECT_THROW(add(a, Tensor({2})), shape_error);
}

TEST(Structural, ConcatTransposeReshape) {
    Tensor a({1, 2, 2}, {1, 2, 3, 4});
    Tensor b({1, 1, 2}, {5, 6});
    Tensor c = concat({a, b}, 1);
    expect_tensor_near(c, Tensor({1, 3, 2}, {1, 2, 3, 4, 5, 6}), 0.0);
    EXPECT_THROW(concat({a, Tensor({1, 1, 3})}, 1), shape_error);

    Tensor t = transpose(a, 1, 2);
    expect_tensor_near(t, Tensor({1, 2, 2}, {1, 3, 2, 4}), 0.0);

    Tensor r = reshape(a, {4});
    expect_tensor_near(r, Tensor({4}, {1, 2, 3, 4}), 0.0);
    EXPECT_THROW(reshape(a, {5}), shape_error);
}

TEST(Ops, NonFiniteIsAnError) {
    Tensor big = Tensor::full({2}, 1e308);
    EXPECT_THROW(mul(big, big), numeric_error);
    EXPECT_THROW(add(big, big), numeric_error);
}

}  // namespace
