#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fusion/attention.hpp"
#include "fusion/ops.hpp"
#include "test_util.hpp"

using namespace fusion;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

void zero_params(ParamList& params) {
    for (auto& p : params)
        std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0);
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("zero-parameter channel attention halves the input") {
    Rng rng(40);
    ChannelAttention att(4, rng);
    ParamList params;
    att.collect("ca", params);
    zero_params(params);
    Tensor f = random_tensor({4, 5, 5}, rng);
    Tensor out = att(f);
    Tensor expect = mul_const(f, 0.5);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-15);

    Tensor zf = Tensor::zeros({4, 3, 3});
    Tensor zout = att(zf);
    for (double v : zout.data()) CHECK(v == 0.0);
}

TEST_CASE("channel attention matches a hand-evaluated scalar oracle") {
    Rng rng(41);
    ChannelAttention att(2, rng);  // r = 2, squeezed width 1
    att.w1 = Tensor::from({1, 2}, {0.3, -0.7});
    att.w2 = Tensor::from({2, 1}, {1.1, -0.4});
    Tensor f = Tensor::from({2, 2, 2}, {0.1, 0.2, 0.3, 0.4,
                                        -0.5, 0.25, 0.75, -0.1});
    double g0 = (0.1 + 0.2 + 0.3 + 0.4) / 4.0;
    double g1 = (-0.5 + 0.25 + 0.75 - 0.1) / 4.0;
    double hidden = std::max(0.0, 0.3 * g0 - 0.7 * g1);
    double w_ch0 = sigmoid_ref(1.1 * hidden);
    double w_ch1 = sigmoid_ref(-0.4 * hidden);
    Tensor out = att(f);
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(std::fabs(out[p] - w_ch0 * f[p]) <= 1e-12);
        CHECK(std::fabs(out[4 + p] - w_ch1 * f[4 + p]) <= 1e-12);
    }
}

TEST_CASE("channel attention rejects channel mismatch") {
    Rng rng(42);
    ChannelAttention att(4, rng);
    CHECK_THROWS_AS(att(Tensor::zeros({3, 4, 4})), ShapeError);
}

TEST_CASE("channel attention is equivariant to spatial permutation") {
    Rng rng(43);
    ChannelAttention att(3, rng);
    Tensor f = random_tensor({3, 4, 4}, rng);
    // reverse every plane: a fixed permutation of pixels
    std::vector<double> perm(f.size());
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t p = 0; p < 16; ++p)
            perm[ch * 16 + p] = f[ch * 16 + (15 - p)];
    Tensor fp = Tensor::from({3, 4, 4}, perm);
    Tensor out = att(f), outp = att(fp);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t p = 0; p < 16; ++p)
            CHECK(out[ch * 16 + p] ==
                  doctest::Approx(outp[ch * 16 + (15 - p)]).epsilon(1e-12));
}

TEST_CASE("zero-parameter spatial attention halves the input") {
    Rng rng(44);
    SpatialAttention att(rng);
    ParamList params;
    att.collect("sa", params);
    zero_params(params);
    Tensor f = random_tensor({3, 6, 6}, rng);
    Tensor out = att(f);
    Tensor expect = mul_const(f, 0.5);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-15);
}

TEST_CASE("spatial attention weight map is constant for constant input") {
    Rng rng(45);
    SpatialAttention att(rng);
    Tensor f = Tensor::full({3, 8, 8}, 0.42);
    Tensor w = att.weights(f);
    CHECK(w.shape() == Shape{1, 8, 8});
    // interior positions see identical pooled neighborhoods
    double center = w[4 * 8 + 4];
    for (std::size_t y = 3; y < 5; ++y)
        for (std::size_t x = 3; x < 5; ++x)
            CHECK(w[y * 8 + x] == doctest::Approx(center).epsilon(1e-12));
}

TEST_CASE("spatial attention equals its composed-op oracle") {
    Rng rng(46);
    SpatialAttention att(rng);
    Tensor f = random_tensor({3, 6, 6}, rng);
    Tensor out = att(f);
    Tensor oracle = scale_pixels(
        f, sigmoid(conv2d(spatial_pool_pair(f), att.conv_weight,
                          att.conv_bias)));
    CHECK(max_abs_diff(out.data(), oracle.data()) == 0.0);
    CHECK(att.weights(f).shape() == Shape{1, 6, 6});
}

TEST_CASE("zero-parameter CBAM scales by exactly 0.25") {
    Rng rng(47);
    Cbam cbam(4, rng);
    ParamList params;
    cbam.collect("cbam", params);
    zero_params(params);
    Tensor f = random_tensor({4, 5, 5}, rng);
    Tensor out = cbam(f);
    Tensor expect = mul_const(f, 0.25);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-16);

    Tensor zout = cbam(Tensor::zeros({4, 5, 5}));
    for (double v : zout.data()) CHECK(v == 0.0);
}

TEST_CASE("CBAM composes channel then spatial attention bitwise") {
    Rng rng(48);
    Cbam cbam(3, rng);
    Tensor f = random_tensor({3, 6, 6}, rng);
    Tensor composed = cbam.spatial(cbam.channel(f));
    Tensor direct = cbam(f);
    CHECK(max_abs_diff(direct.data(), composed.data()) == 0.0);
}

TEST_CASE("zero-parameter frequency attention halves the magnitude") {
    Rng rng(49);
    FrequencyAttention att(4, rng);
    ParamList params;
    att.collect("fa", params);
    zero_params(params);
    Tensor mag = random_tensor({4, 5, 5}, rng, 0.0, 3.0);
    Tensor out = att(mag);
    Tensor expect = mul_const(mag, 0.5);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-15);

    Tensor zout = att(Tensor::zeros({4, 5, 5}));
    for (double v : zout.data()) CHECK(v == 0.0);
}

TEST_CASE("frequency attention C=1 matches scalar oracle") {
    Rng rng(50);
    FrequencyAttention att(1, rng);
    att.w3 = Tensor::from({1, 1}, {0.8});
    att.w4 = Tensor::from({1, 1}, {-0.6});
    Tensor mag = Tensor::from({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    double pooled = 2.5;
    double weight = sigmoid_ref(-0.6 * std::max(0.0, 0.8 * pooled));
    Tensor out = att(mag);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::fabs(out[i] - weight * mag[i]) <= 1e-12);
}

TEST_CASE("zero-parameter calibration halves the image") {
    Rng rng(51);
    ChannelCalibration calib(rng);
    ParamList params;
    calib.collect("cc", params);
    zero_params(params);
    Tensor e = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    Tensor out = calib(e);
    Tensor expect = mul_const(e, 0.5);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-15);

    Tensor zout = calib(Tensor::zeros({3, 4, 4}));
    for (double v : zout.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(calib(Tensor::zeros({4, 4, 4})), ShapeError);
}

TEST_CASE("calibration h=2 matches a hand-set scalar oracle") {
    Rng rng(52);
    ChannelCalibration calib(rng, 2);
    calib.w1 = Tensor::from({2, 3}, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
    calib.w2 = Tensor::from({3, 2}, {1.0, -1.0, 0.5, 0.25, -0.75, 2.0});
    Tensor e = Tensor::from({3, 2, 2}, {0.2, 0.4, 0.6, 0.8,
                                        0.1, 0.3, 0.5, 0.7,
                                        0.9, 0.9, 0.1, 0.1});
    double g0 = 0.5, g1 = 0.4, g2 = 0.5;
    double h0 = std::max(0.0, 0.1 * g0 + 0.2 * g1 + 0.3 * g2);
    double h1 = std::max(0.0, -0.4 * g0 + 0.5 * g1 - 0.6 * g2);
    double w0 = sigmoid_ref(1.0 * h0 - 1.0 * h1);
    double w1 = sigmoid_ref(0.5 * h0 + 0.25 * h1);
    double w2 = sigmoid_ref(-0.75 * h0 + 2.0 * h1);
    Tensor out = calib(e);
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(std::fabs(out[p] - w0 * e[p]) <= 1e-12);
        CHECK(std::fabs(out[4 + p] - w1 * e[4 + p]) <= 1e-12);
        CHECK(std::fabs(out[8 + p] - w2 * e[8 + p]) <= 1e-12);
    }
}

TEST_CASE("attention weights stay strictly inside (0,1) under fuzzing") {
    Rng rng(53);
    ChannelAttention ca(4, rng);
    SpatialAttention sa(rng);
    FrequencyAttention fa(4, rng);
    ChannelCalibration cc(rng);
    for (int trial = 0; trial < 200; ++trial) {
        double scale = std::pow(10.0, rng.uniform(-6.0, 3.0));
        Tensor f4 = random_tensor({4, 5, 5}, rng, -scale, scale);
        Tensor f3 = random_tensor({3, 5, 5}, rng, -scale, scale);
        Tensor mag = random_tensor({4, 5, 5}, rng, 0.0, scale);
        for (const Tensor& w : {ca.weights(f4), sa.weights(f4),
                                fa.weights(mag), cc.weights(f3)})
            for (double v : w.data()) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        // strict attenuation in max norm (moderate scale keeps the gate
        // away from the rounding boundary at 1)
        Tensor fm = random_tensor({4, 5, 5}, rng, -10.0, 10.0);
        Tensor out = ca(fm);
        double in_max = 0.0, out_max = 0.0;
        for (double v : fm.data()) in_max = std::max(in_max, std::fabs(v));
        for (double v : out.data()) out_max = std::max(out_max, std::fabs(v));
        CHECK(out_max < in_max);
    }
}

TEST_CASE("reduction ratio rule") {
    CHECK(reduction_ratio(32) == 16);
    CHECK(reduction_ratio(16) == 16);
    CHECK(reduction_ratio(96) == 16);
    CHECK(reduction_ratio(4) == 4);
    CHECK(reduction_ratio(12) == 12);
    CHECK(reduction_ratio(24) == 24);  // 16 does not divide 24
}
