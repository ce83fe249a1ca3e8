#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "fusion/attention.hpp"
#include "fusion/param.hpp"
#include "fusion/spectral.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

enum class Channel : std::size_t { R = 0, G = 1, B = 2 };

/// Architecture toggles. One per removable component; the named presets
/// mirror the nine ablation rows.
struct AblationConfig {
    bool freq_attention = true;
    bool freq_branch = true;
    bool freq_fusion = true;
    bool chan_calib = true;
    bool local_attention = true;
    bool global_attention = true;

    /// Throws if attention is requested over a missing frequency branch.
    void validate() const;

    /// full, no_freq_attn, no_freq_branch, no_freq_fusion, no_chan_calib,
    /// no_local_attn, no_global_attn, spatial_only, minimal.
    static AblationConfig preset(const std::string& name);
    static const std::array<std::string, 9>& preset_names();

    std::uint32_t to_bits() const;
    static AblationConfig from_bits(std::uint32_t bits);

    bool operator==(const AblationConfig&) const = default;
};

/// Width preset: base channel count per branch; the fusion head runs at
/// 3x base and the decoder mid stage back at base.
struct ModelConfig {
    std::string name;
    std::size_t base = 4;

    std::size_t head_width() const { return 3 * base; }

    static ModelConfig tiny();   // base 4, for tests and gradient checks
    static ModelConfig paper();  // base 32, lands in the 0.25M..0.35M budget
    static ModelConfig from_name(const std::string& name);
    static ModelConfig from_base(std::size_t base);
};

/// One color channel's spatial path: dedicated-kernel conv + CBAM with a
/// residual connection.
struct SpatialBranch {
    SpatialBranch() = default;
    SpatialBranch(std::size_t kernel, std::size_t width, bool local_attention,
                  Rng& rng);

    Tensor operator()(const Tensor& channel_plane) const;
    void collect(const std::string& prefix, ParamList& out);

    Tensor conv_weight, conv_bias;
    std::optional<Cbam> cbam;
};

/// One color channel's frequency path: FFT magnitude, normalized 1x1 conv
/// stack with PReLU, optional frequency attention, phase-preserving inverse.
struct FrequencyBranch {
    FrequencyBranch(std::size_t width, bool freq_attention, Rng& rng);

    Tensor operator()(const Tensor& channel_plane) const;
    void collect(const std::string& prefix, ParamList& out);

    /// Sets the stack to an exact pass-through (unit taps, slope 1) so that
    /// channel 0 reconstructs the input; used by round-trip tests.
    void set_identity();

    Tensor conv1_weight, conv1_bias;
    Tensor prelu_slope;
    Tensor conv2_weight, conv2_bias;
    std::optional<FrequencyAttention> attention;
};

/// Frequency-guided fusion: channel concat + 1x1 conv + ReLU.
struct FgfBlock {
    FgfBlock(std::size_t width, Rng& rng);

    Tensor operator()(const Tensor& f_spatial, const Tensor& f_freq) const;
    void collect(const std::string& prefix, ParamList& out);

    Tensor conv_weight, conv_bias;
};

/// The assembled dual-domain enhancement network.
class FusionModel {
public:
    FusionModel(ModelConfig config, AblationConfig ablation,
                std::uint64_t seed);

    /// [3,H,W] in [0,1] -> [3,H,W] in [0,1]. H,W >= 8.
    Tensor forward(const Tensor& image) const;

    Tensor spatial_branch(const Tensor& channel_plane, Channel id) const;
    Tensor frequency_branch(const Tensor& channel_plane, Channel id) const;
    Tensor fgf(const Tensor& f_spatial, const Tensor& f_freq,
               Channel id) const;

    ParamList& parameters();
    const ParamList& parameters() const;
    void zero_grads();

    std::size_t count_parameters() const;
    /// Scalar count per top-level module; values sum to count_parameters().
    std::map<std::string, std::size_t> parameter_breakdown() const;

    const ModelConfig& config() const { return config_; }
    const AblationConfig& ablation() const { return ablation_; }
    std::uint64_t seed() const { return seed_; }

    std::array<SpatialBranch, 3>& spatial_branches() { return spatial_; }
    std::array<std::optional<FrequencyBranch>, 3>& frequency_branches() {
        return freq_;
    }

private:
    ModelConfig config_;
    AblationConfig ablation_;
    std::uint64_t seed_;

    std::array<SpatialBranch, 3> spatial_;
    std::array<std::optional<FrequencyBranch>, 3> freq_;
    std::array<std::optional<FgfBlock>, 3> fgf_;

    Tensor td_weight, td_bias;
    Tensor tf_weight, tf_bias;
    Tensor proj_weight, proj_bias;  // global-attention residual projection
    std::optional<Cbam> global_cbam_;
    Tensor te1_weight, te1_bias;
    Tensor te2_weight, te2_bias;
    std::optional<ChannelCalibration> calibration_;

    ParamList params_;

    void register_params();
};

/// Extracts channel `id` of a [3,H,W] image as a constant [1,H,W] tensor.
Tensor slice_channel(const Tensor& image, Channel id);

}  // namespace fusion
