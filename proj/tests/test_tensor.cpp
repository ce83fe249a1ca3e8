#include <cmath>
#include <vector>

#include "doctest.h"
#include "fusion/ops.hpp"
#include "fusion/param.hpp"
#include "fusion/tensor.hpp"
#include "test_util.hpp"

using namespace fusion;
using testutil::max_abs_diff;
using testutil::max_rel_err;
using testutil::numeric_grad;
using testutil::random_param;
using testutil::random_tensor;

namespace {

// Independent nested-loop convolution oracle (same zero padding,
// cross-correlation, no reuse of the library loops).
std::vector<double> conv_oracle(const Tensor& in, const Tensor& w,
                                const Tensor& b) {
    std::size_t ci = in.shape()[0], h = in.shape()[1], ww = in.shape()[2];
    std::size_t co = w.shape()[0], k = w.shape()[2];
    std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    std::vector<double> out(co * h * ww, 0.0);
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < ww; ++x) {
                double acc = b[oc];
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y + dy) - pad;
                            std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(x + dx) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                                continue;
                            if (ix < 0 ||
                                ix >= static_cast<std::ptrdiff_t>(ww))
                                continue;
                            acc += w[(((oc * ci) + ic) * k + dy) * k + dx] *
                                   in[(ic * h + iy) * ww + ix];
                        }
                out[(oc * h + y) * ww + x] = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d identity kernel passes input through") {
    Rng rng(1);
    Tensor in = random_tensor({1, 3, 3}, rng);
    std::vector<double> kv(9, 0.0);
    kv[4] = 1.0;  // center tap
    Tensor w = Tensor::from({1, 1, 3, 3}, kv);
    Tensor b = Tensor::zeros({1});
    Tensor out = conv2d(in, w, b);
    CHECK(max_abs_diff(out.data(), in.data()) == doctest::Approx(0.0));
}

TEST_CASE("conv2d zero kernel and bias gives zero") {
    Rng rng(2);
    Tensor in = random_tensor({2, 4, 4}, rng);
    Tensor w = Tensor::zeros({3, 2, 3, 3});
    Tensor b = Tensor::zeros({3});
    Tensor out = conv2d(in, w, b);
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches nested-loop oracle") {
    Rng rng(3);
    Tensor in = random_tensor({2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor out = conv2d(in, w, b);
    auto expect = conv_oracle(in, w, b);
    CHECK(max_abs_diff(out.data(), expect) <= 1e-12);
}

TEST_CASE("conv2d rejects bad shapes") {
    Tensor in = Tensor::zeros({2, 4, 4});
    CHECK_THROWS_AS(
        conv2d(in, Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1})),
        ShapeError);  // even kernel
    CHECK_THROWS_AS(
        conv2d(in, Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1})),
        ShapeError);  // channel mismatch
    CHECK_THROWS_AS(
        conv2d(in, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({2})),
        ShapeError);  // bias mismatch
}

TEST_CASE("conv2d linearity with zero bias") {
    Rng rng(4);
    Tensor x = random_tensor({2, 6, 6}, rng);
    Tensor y = random_tensor({2, 6, 6}, rng);
    Tensor w = random_tensor({2, 2, 3, 3}, rng);
    Tensor b = Tensor::zeros({2});
    double alpha = 0.7, beta = -1.3;
    Tensor mix = add(mul_const(x, alpha), mul_const(y, beta));
    Tensor lhs = conv2d(mix, w, b);
    Tensor rhs =
        add(mul_const(conv2d(x, w, b), alpha), mul_const(conv2d(y, w, b), beta));
    CHECK(max_abs_diff(lhs.data(), rhs.data()) <= 1e-10);
}

TEST_CASE("linear trivial and oracle cases") {
    Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5});
    Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor zb = Tensor::zeros({3});
    CHECK(max_abs_diff(linear(x, eye, zb).data(), x.data()) == 0.0);

    Tensor zero_w = Tensor::zeros({2, 3});
    Tensor b = Tensor::from({2}, {0.25, -4.0});
    CHECK(max_abs_diff(linear(x, zero_w, b).data(), b.data()) == 0.0);

    Rng rng(5);
    Tensor w = random_tensor({2, 3}, rng);
    Tensor out = linear(x, w, b);
    for (std::size_t j = 0; j < 2; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < 3; ++i) acc += w[j * 3 + i] * x[i];
        CHECK(std::fabs(out[j] - acc) <= 1e-12);
    }
    CHECK_THROWS_AS(linear(x, Tensor::zeros({2, 4}), b), ShapeError);
}

TEST_CASE("global_avg_pool trivial and oracle") {
    Tensor c = Tensor::full({2, 3, 3}, 2.5);
    Tensor pooled = global_avg_pool(c);
    for (double v : pooled.data()) CHECK(v == doctest::Approx(2.5));

    Tensor q = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    CHECK(global_avg_pool(q)[0] == doctest::Approx(1.5));

    Rng rng(6);
    Tensor x = random_tensor({4, 7, 5}, rng);
    Tensor out = global_avg_pool(x);
    for (std::size_t ch = 0; ch < 4; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < 35; ++p) acc += x[ch * 35 + p];
        CHECK(std::fabs(out[ch] - acc / 35.0) <= 1e-12);
    }
}

TEST_CASE("spatial_pool_pair trivial and oracle") {
    Rng rng(7);
    Tensor single = random_tensor({1, 3, 3}, rng);
    Tensor pooled = spatial_pool_pair(single);
    CHECK(max_abs_diff(pooled.data().subspan(0, 9), single.data()) == 0.0);
    CHECK(max_abs_diff(pooled.data().subspan(9, 9), single.data()) == 0.0);

    Tensor two = Tensor::from({2, 1, 1}, {1.0, 3.0});
    Tensor p2 = spatial_pool_pair(two);
    CHECK(p2[0] == doctest::Approx(2.0));
    CHECK(p2[1] == doctest::Approx(3.0));

    Tensor x = random_tensor({5, 4, 4}, rng);
    Tensor out = spatial_pool_pair(x);
    for (std::size_t p = 0; p < 16; ++p) {
        double acc = 0.0, best = -1e300;
        for (std::size_t ch = 0; ch < 5; ++ch) {
            acc += x[ch * 16 + p];
            best = std::max(best, x[ch * 16 + p]);
        }
        CHECK(std::fabs(out[p] - acc / 5.0) <= 1e-12);
        CHECK(out[16 + p] == best);
    }
}

TEST_CASE("activation values") {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
    Tensor r = relu(x);
    CHECK(r[0] == 0.0);
    CHECK(r[2] == 2.0);
    CHECK(sigmoid(Tensor::scalar(0.0))[0] == doctest::Approx(0.5));
    Tensor slope = Tensor::scalar(0.25);
    CHECK(prelu(Tensor::scalar(-2.0), slope)[0] == doctest::Approx(-0.5));
    CHECK(prelu(Tensor::scalar(3.0), slope)[0] == doctest::Approx(3.0));
}

TEST_CASE("backward on linear combination gives the data as gradient") {
    Rng rng(8);
    Tensor w = random_param({6}, rng);
    Tensor x = random_tensor({6}, rng);
    Tensor loss = sum(mul(w, x));
    loss.backward();
    CHECK(max_abs_diff(w.grad(), x.data()) <= 1e-15);
}

TEST_CASE("backward through sigmoid follows the chain rule") {
    Tensor w = scalar_param(0.3);
    double c = 1.7;
    Tensor loss = mul_const(sigmoid(w), c);
    loss.backward();
    double s = 1.0 / (1.0 + std::exp(-0.3));
    CHECK(w.grad()[0] == doctest::Approx(s * (1.0 - s) * c));
}

TEST_CASE("backward rejects non-scalars and accumulates across calls") {
    Rng rng(9);
    Tensor w = random_param({4}, rng);
    Tensor x = Tensor::full({4}, 2.0);
    CHECK_THROWS_AS(mul(w, x).backward(), ShapeError);
    Tensor l1 = sum(mul(w, x));
    l1.backward();
    Tensor l2 = sum(mul(w, x));
    l2.backward();
    for (double g : w.grad()) CHECK(g == doctest::Approx(4.0));
    w.zero_grad();
    sum(mul(w, x)).backward();
    for (double g : w.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("finite differences agree for every differentiable op") {
    Rng rng(10);
    // Each case: analytic grads of a composite loss vs central differences,
    // at random points away from relu/abs kinks.
    Tensor in = random_param({2, 5, 5}, rng, 0.1, 1.0);
    Tensor w = random_param({2, 2, 3, 3}, rng);
    Tensor b = random_param({2}, rng);
    Tensor slope = scalar_param(0.25);
    Tensor lw = random_param({2, 2}, rng);
    Tensor plane = random_param({1, 5, 5}, rng, 0.1, 1.0);
    Tensor cw = random_param({2}, rng, 0.5, 1.5);

    auto forward = [&]() {
        Tensor f = conv2d(in, w, b);
        f = prelu(f, slope);
        f = scale_channels(f, cw);
        f = add_plane(f, plane);
        f = scale_pixels(f, sigmoid(mul_const(plane, 0.5)));
        Tensor pooled = global_avg_pool(f);
        Tensor att = sigmoid(linear(pooled, lw));
        f = scale_channels(f, att);
        Tensor pair = spatial_pool_pair(f);
        Tensor parts = concat_channels({f, pair});
        return mean(mul(parts, parts));
    };

    Tensor loss = forward();
    loss.backward();

    std::vector<Tensor*> params{&in, &w, &b, &slope, &lw, &plane, &cw};
    for (Tensor* p : params) {
        auto numeric = numeric_grad(*p, [&]() { return forward().item(); });
        CHECK(max_rel_err(p->grad(), numeric) <= 1e-6);
    }
}

TEST_CASE("ops stay finite over a wide magnitude range") {
    Rng rng(11);
    for (double scale : {1e-6, 1e-3, 1.0, 1e3}) {
        Tensor x = random_tensor({3, 6, 6}, rng, -scale, scale);
        Tensor w = random_tensor({2, 3, 3, 3}, rng, -scale, scale);
        Tensor b = random_tensor({2}, rng, -scale, scale);
        Tensor out = sigmoid(conv2d(x, w, b));
        CHECK(all_finite(out));
        CHECK(all_finite(relu(x)));
        CHECK(all_finite(spatial_pool_pair(x)));
        CHECK(all_finite(global_avg_pool(x)));
    }
}

TEST_CASE("pool of all-ones 1x1 conv equals channel-summed pool") {
    Rng rng(12);
    Tensor x = random_tensor({3, 5, 7}, rng);
    Tensor ones = Tensor::full({1, 3, 1, 1}, 1.0);
    Tensor zb = Tensor::zeros({1});
    Tensor lhs = global_avg_pool(conv2d(x, ones, zb));
    Tensor per_channel = global_avg_pool(x);
    double rhs = per_channel[0] + per_channel[1] + per_channel[2];
    CHECK(std::fabs(lhs[0] - rhs) <= 1e-12);
}

TEST_CASE("no-grad guard prevents graph recording") {
    Rng rng(13);
    Tensor w = random_param({4}, rng);
    Tensor x = random_tensor({4}, rng);
    NoGradGuard guard;
    Tensor out = sum(mul(w, x));
    CHECK_FALSE(out.requires_grad());
}
