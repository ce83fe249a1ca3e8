#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "fusion/ops.hpp"
#include "fusion/param.hpp"
#include "fusion/spectral.hpp"
#include "test_util.hpp"

using namespace fusion;
using testutil::max_abs_diff;
using testutil::max_rel_err;
using testutil::numeric_grad;
using testutil::random_param;
using testutil::random_tensor;

namespace {

// Direct O(N^4) DFT oracle, written independently of the library path.
std::vector<std::complex<double>> naive_dft2(std::span<const double> plane,
                                             std::size_t h, std::size_t w) {
    std::vector<std::complex<double>> out(h * w);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t x = 0; x < h; ++x)
                for (std::size_t y = 0; y < w; ++y) {
                    double angle = -two_pi * (double(u * x) / double(h) +
                                              double(v * y) / double(w));
                    acc += plane[x * w + y] *
                           std::complex<double>(std::cos(angle),
                                                std::sin(angle));
                }
            out[u * w + v] = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("fft2 of a constant plane is DC only") {
    double c = 0.37;
    Tensor x = Tensor::full({1, 6, 6}, c);
    SpectrumPair s = fft2(x);
    CHECK(s.magnitude[0] == doctest::Approx(c * 36.0));
    for (std::size_t i = 1; i < 36; ++i)
        CHECK(std::fabs(s.magnitude[i]) <= 1e-9);
}

TEST_CASE("fft2 of a unit impulse is flat with zero phase") {
    Tensor x = Tensor::zeros({1, 5, 7});
    x.data()[0] = 1.0;
    SpectrumPair s = fft2(x);
    for (std::size_t i = 0; i < 35; ++i) {
        CHECK(s.magnitude[i] == doctest::Approx(1.0));
        CHECK(std::fabs(s.phase[i]) <= 1e-12);
    }
}

TEST_CASE("fft2 matches the naive DFT oracle") {
    Rng rng(20);
    Tensor x = random_tensor({1, 8, 8}, rng);
    SpectrumPair s = fft2(x);
    auto oracle = naive_dft2(x.data(), 8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(std::fabs(s.magnitude[i] - std::abs(oracle[i])) <= 1e-9);
        double expect_phase = std::atan2(oracle[i].imag(), oracle[i].real());
        // phases compare modulo 2*pi and only where magnitude is resolvable
        if (std::abs(oracle[i]) > 1e-9) {
            double diff = std::remainder(s.phase[i] - expect_phase,
                                         2.0 * std::numbers::pi);
            CHECK(std::fabs(diff) <= 1e-9);
        }
    }
}

TEST_CASE("fft2 handles non-power-of-two extents") {
    Rng rng(21);
    Tensor x = random_tensor({1, 5, 9}, rng);
    SpectrumPair s = fft2(x);
    auto oracle = naive_dft2(x.data(), 5, 9);
    for (std::size_t i = 0; i < 45; ++i)
        CHECK(std::fabs(s.magnitude[i] - std::abs(oracle[i])) <= 1e-9);
}

TEST_CASE("ifft2(fft2(x)) round-trips") {
    Rng rng(22);
    Tensor x = random_tensor({3, 16, 16}, rng);
    Tensor back = ifft2(fft2(x));
    CHECK(max_abs_diff(back.data(), x.data()) <= 1e-9);

    Tensor odd = random_tensor({2, 11, 13}, rng);
    CHECK(max_abs_diff(ifft2(fft2(odd)).data(), odd.data()) <= 1e-9);
}

TEST_CASE("ifft2 of all-zero magnitude is zero") {
    SpectrumPair s{Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 4})};
    Tensor out = ifft2(s);
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("uniform magnitude scaling scales the reconstruction") {
    Rng rng(23);
    Tensor x = random_tensor({1, 12, 10}, rng);
    SpectrumPair s = fft2(x);
    Tensor scaled = mul_const(s.magnitude, 2.0);
    Tensor out = ifft2(recombine(scaled, s.phase));
    Tensor expect = mul_const(x, 2.0);
    CHECK(max_abs_diff(out.data(), expect.data()) <= 1e-9);
}

TEST_CASE("per-channel scalar magnitude weights scale each channel") {
    Rng rng(24);
    Tensor x = random_tensor({3, 8, 8}, rng);
    SpectrumPair s = fft2(x);
    Tensor wc = Tensor::from({3}, {0.5, 1.25, 2.0});
    Tensor out = ifft2(recombine(scale_channels(s.magnitude, wc), s.phase));
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t p = 0; p < 64; ++p)
            CHECK(std::fabs(out[ch * 64 + p] - wc[ch] * x[ch * 64 + p]) <=
                  1e-9);
}

TEST_CASE("recombine preserves phase bit-identically") {
    Rng rng(25);
    Tensor x = random_tensor({2, 6, 6}, rng);
    SpectrumPair s = fft2(x);
    SpectrumPair r = recombine(s.magnitude, s.phase);
    CHECK(max_abs_diff(r.magnitude.data(), s.magnitude.data()) == 0.0);
    CHECK(r.phase.same_node(s.phase));
    // magnitude-3-4-5 sanity: polar(5, atan2(4,3)) reconstructs (3,4)
    double theta = std::atan2(4.0, 3.0);
    auto z = std::polar(5.0, theta);
    CHECK(z.real() == doctest::Approx(3.0));
    CHECK(z.imag() == doctest::Approx(4.0));
}

TEST_CASE("Parseval identity holds") {
    Rng rng(26);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8},
                        {11, 7},
                        {16, 24}}) {
        Tensor x = random_tensor({2, h, w}, rng);
        SpectrumPair s = fft2(x);
        double spatial = 0.0, spectral = 0.0;
        for (double v : x.data()) spatial += v * v;
        for (double m : s.magnitude.data()) spectral += m * m;
        spectral /= static_cast<double>(h * w);
        CHECK(std::fabs(spatial - spectral) <= 1e-8 * std::fabs(spatial));
    }
}

TEST_CASE("pointwise cross-channel magnitude maps keep the inverse real") {
    Rng rng(27);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor({3, 9, 9}, rng, 0.0, 1.0);
        SpectrumPair s = fft2(x);
        // random 1x1 cross-channel map applied identically at every bin
        Tensor map = random_tensor({3, 3, 1, 1}, rng);
        Tensor zb = Tensor::zeros({3});
        Tensor mixed = conv2d(s.magnitude, map, zb);
        Tensor out = ifft2(recombine(mixed, s.phase));  // must not throw
        CHECK(all_finite(out));
    }
}

TEST_CASE("asymmetric magnitude edits trip the imaginary residue check") {
    Rng rng(28);
    Tensor x = random_tensor({1, 8, 8}, rng);
    SpectrumPair s = fft2(x);
    std::vector<double> broken(s.magnitude.data().begin(),
                               s.magnitude.data().end());
    broken[9] += 3.0;  // breaks conjugate symmetry at one off-axis bin
    SpectrumPair bad{Tensor::from({1, 8, 8}, broken), s.phase};
    CHECK_THROWS_AS(ifft2(bad), NumericalError);
}

TEST_CASE("gradients flow through ifft2 and the magnitude path") {
    Rng rng(29);
    Tensor x = random_tensor({1, 6, 6}, rng, 0.1, 1.0);
    SpectrumPair s = fft2(x);
    Tensor gain = random_param({1}, rng, 0.5, 1.5);
    auto forward = [&]() {
        Tensor refined = mul_scalar(s.magnitude, gain);
        Tensor out = ifft2(recombine(refined, s.phase));
        return mean(mul(out, out));
    };
    Tensor loss = forward();
    loss.backward();
    auto numeric = numeric_grad(gain, [&]() { return forward().item(); });
    CHECK(max_rel_err(gain.grad(), numeric) <= 1e-6);
}

TEST_CASE("magnitude gradient w.r.t. the spatial input matches differences") {
    Rng rng(30);
    Tensor x = random_param({1, 4, 4}, rng, 0.2, 1.0);
    auto forward = [&]() {
        SpectrumPair s = fft2(x);
        return mean(s.magnitude);
    };
    Tensor loss = forward();
    loss.backward();
    auto numeric = numeric_grad(x, [&]() { return forward().item(); });
    CHECK(max_rel_err(x.grad(), numeric) <= 1e-6);
}
