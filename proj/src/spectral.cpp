#include "fusion/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "fusion/ops.hpp"

namespace fusion {

namespace detail {

// FFTW's planner is not thread-safe; execution of a ready plan is.
static std::mutex g_planner_mutex;

std::vector<std::complex<double>> dft2_plane(
    const std::vector<std::complex<double>>& in, std::size_t h, std::size_t w,
    int sign) {
    std::vector<std::complex<double>> out(h * w);
    // in-place copies would let FFTW scribble on the caller's buffer
    std::vector<std::complex<double>> scratch(in);
    {
        std::lock_guard<std::mutex> lock(g_planner_mutex);
        fftw_plan plan = fftw_plan_dft_2d(
            static_cast<int>(h), static_cast<int>(w),
            reinterpret_cast<fftw_complex*>(scratch.data()),
            reinterpret_cast<fftw_complex*>(out.data()),
            sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
            FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    return out;
}

}  // namespace detail

namespace {

constexpr double kMagnitudeEps = 1e-12;

void check_chw(const Tensor& x, const char* op) {
    if (x.rank() != 3)
        throw ShapeError(std::string(op) + ": expected [C,H,W], got " +
                         shape_str(x.shape()));
}

}  // namespace

SpectrumPair fft2(const Tensor& input) {
    check_chw(input, "fft2");
    const std::size_t c = input.shape()[0], h = input.shape()[1],
                      w = input.shape()[2];
    const std::size_t plane = h * w;
    auto xv = input.data();
    std::vector<double> mag(c * plane), phase(c * plane);
    // Spectra are retained for the backward pass.
    std::vector<std::vector<std::complex<double>>> spectra(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<std::complex<double>> in(plane);
        for (std::size_t p = 0; p < plane; ++p) in[p] = xv[ch * plane + p];
        spectra[ch] = detail::dft2_plane(in, h, w, -1);
        for (std::size_t p = 0; p < plane; ++p) {
            mag[ch * plane + p] = std::abs(spectra[ch][p]);
            phase[ch * plane + p] =
                std::atan2(spectra[ch][p].imag(), spectra[ch][p].real());
        }
    }
    Tensor px = input;
    Tensor magnitude = OpBuilder::make(
        input.shape(), std::move(mag), {input},
        [px, spectra, c, h, w, plane](const auto& node) mutable {
            auto g = OpBuilder::node_grad(node);
            std::vector<double> d(px.size());
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::vector<std::complex<double>> weighted(plane);
                for (std::size_t p = 0; p < plane; ++p) {
                    double m = std::max(std::abs(spectra[ch][p]),
                                        kMagnitudeEps);
                    weighted[p] = spectra[ch][p] * (g[ch * plane + p] / m);
                }
                auto back = detail::dft2_plane(weighted, h, w, +1);
                for (std::size_t p = 0; p < plane; ++p)
                    d[ch * plane + p] = back[p].real();
            }
            accumulate_grad(px, d);
        });
    return SpectrumPair{magnitude, Tensor::from(input.shape(),
                                                std::move(phase))};
}

Tensor ifft2(const SpectrumPair& spectrum) {
    check_chw(spectrum.magnitude, "ifft2");
    if (spectrum.magnitude.shape() != spectrum.phase.shape())
        throw ShapeError("ifft2: magnitude " +
                         shape_str(spectrum.magnitude.shape()) +
                         " vs phase " + shape_str(spectrum.phase.shape()));
    if (spectrum.phase.requires_grad())
        throw std::logic_error("ifft2: phase gradients are not supported");
    const std::size_t c = spectrum.magnitude.shape()[0],
                      h = spectrum.magnitude.shape()[1],
                      w = spectrum.magnitude.shape()[2];
    const std::size_t plane = h * w;
    const double norm = 1.0 / static_cast<double>(plane);
    auto mv = spectrum.magnitude.data();
    auto pv = spectrum.phase.data();
    std::vector<double> out(c * plane);
    double max_imag = 0.0, max_real = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<std::complex<double>> in(plane);
        for (std::size_t p = 0; p < plane; ++p)
            in[p] = std::polar(mv[ch * plane + p], pv[ch * plane + p]);
        auto rec = detail::dft2_plane(in, h, w, +1);
        for (std::size_t p = 0; p < plane; ++p) {
            double re = rec[p].real() * norm;
            out[ch * plane + p] = re;
            max_real = std::max(max_real, std::fabs(re));
            max_imag = std::max(max_imag, std::fabs(rec[p].imag() * norm));
        }
    }
    if (max_imag > 1e-6 * (1.0 + max_real))
        throw NumericalError(
            "ifft2: imaginary residue " + std::to_string(max_imag) +
            " exceeds tolerance; an upstream transform broke conjugate "
            "symmetry");
    Tensor pm = spectrum.magnitude;
    std::vector<double> phase_copy(pv.begin(), pv.end());
    return OpBuilder::make(
        spectrum.magnitude.shape(), std::move(out), {spectrum.magnitude},
        [pm, phase_copy, c, h, w, plane, norm](const auto& node) mutable {
            auto g = OpBuilder::node_grad(node);
            std::vector<double> d(pm.size());
            for (std::size_t ch = 0; ch < c; ++ch) {
                // d out / d mag is linear; the adjoint is a conjugated DFT
                // of the incoming gradient projected onto e^{j phase}.
                std::vector<std::complex<double>> gin(plane);
                for (std::size_t p = 0; p < plane; ++p)
                    gin[p] = g[ch * plane + p];
                auto spec = detail::dft2_plane(gin, h, w, +1);
                for (std::size_t p = 0; p < plane; ++p) {
                    double theta = phase_copy[ch * plane + p];
                    d[ch * plane + p] =
                        norm * (std::cos(theta) * spec[p].real() -
                                std::sin(theta) * spec[p].imag());
                }
            }
            accumulate_grad(pm, d);
        });
}

SpectrumPair recombine(const Tensor& magnitude_refined, const Tensor& phase) {
    if (magnitude_refined.shape() != phase.shape())
        throw ShapeError("recombine: magnitude " +
                         shape_str(magnitude_refined.shape()) + " vs phase " +
                         shape_str(phase.shape()));
    return SpectrumPair{clamp_nonneg(magnitude_refined), phase};
}

}  // namespace fusion
