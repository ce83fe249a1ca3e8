#pragma once

#include <cstdint>
#include <vector>

#include "fusion/param.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

/// Physical degradation parameters: per-channel attenuation beta over depth
/// d with backscatter B and a transmittance floor. The default preset obeys
/// beta_R >= beta_G >= beta_B (red attenuates fastest underwater).
struct DegradationParams {
    double beta[3] = {0.8, 0.3, 0.1};
    double depth = 2.0;
    double backscatter[3] = {0.05, 0.12, 0.18};
    double floor = 0.02;

    void validate() const;
    static DegradationParams random(Rng& rng);
};

/// out_c = clean_c * t_c + B_c * (1 - t_c) with t_c = max(exp(-beta_c*d),
/// floor), clamped to [0,1]. Constant tensor; gradients never flow through
/// data generation.
Tensor degrade(const Tensor& clean, const DegradationParams& params);

/// Procedurally generated clean image: a mix of smooth gradients, value
/// noise, and geometric shapes. Deterministic in the RNG state.
Tensor synthetic_clean_image(std::size_t height, std::size_t width, Rng& rng);

struct TrainPair {
    Tensor degraded;
    Tensor clean;
};

/// Deterministic dataset of (degraded, clean) pairs at the given size.
std::vector<TrainPair> synthetic_dataset(std::size_t count,
                                         std::size_t height,
                                         std::size_t width,
                                         std::uint64_t seed);

}  // namespace fusion
