#pragma once

#include <complex>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

/// Polar split of a per-channel 2-D spectrum. Magnitude is non-negative;
/// phase is atan2(Im, Re) in (-pi, pi].
struct SpectrumPair {
    Tensor magnitude;  // [C,H,W]
    Tensor phase;      // [C,H,W]
};

/// Unnormalized forward DFT of each channel, returned in polar form.
/// Magnitude is differentiable w.r.t. the input (eps guard 1e-12 at zero
/// magnitude); phase is detached.
SpectrumPair fft2(const Tensor& input);

/// Inverse transform of magnitude . e^{j phase} with 1/(H*W) normalization,
/// keeping the real part. Raises NumericalError when the imaginary residue
/// exceeds 1e-6 * (1 + max |real|), which means an upstream transform broke
/// conjugate symmetry. Differentiable w.r.t. the magnitude.
Tensor ifft2(const SpectrumPair& spectrum);

/// Re-attaches a refined magnitude to an existing phase. The magnitude is
/// clamped at 0 (values below -1e-6 warn); the phase passes through
/// untouched.
SpectrumPair recombine(const Tensor& magnitude_refined, const Tensor& phase);

namespace detail {
/// Unnormalized complex DFT plane transforms (sign -1 forward, +1 inverse),
/// exposed for op backward passes and tests.
std::vector<std::complex<double>> dft2_plane(
    const std::vector<std::complex<double>>& in, std::size_t h, std::size_t w,
    int sign);
}  // namespace detail

}  // namespace fusion
