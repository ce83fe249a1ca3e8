#pragma once

#include "fusion/param.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

/// Reduction ratio rule: 16 when it divides the channel count and the count
/// is at least 16, otherwise the channel count itself (full squeeze).
std::size_t reduction_ratio(std::size_t channels);

/// Squeeze-excite channel gate: sigmoid(w2 . relu(w1 . gap(f))), applied as
/// a per-channel scale. Weight matrices carry no biases.
class ChannelAttention {
public:
    ChannelAttention(std::size_t channels, Rng& rng);

    /// Per-channel gate values in (0,1), shape [C].
    Tensor weights(const Tensor& f) const;
    Tensor operator()(const Tensor& f) const;

    std::size_t channels() const { return channels_; }
    void collect(const std::string& prefix, ParamList& out);

    Tensor w1, w2;

private:
    std::size_t channels_;
};

/// Per-pixel gate from pooled channel statistics: sigmoid(conv(mean;max)).
class SpatialAttention {
public:
    explicit SpatialAttention(Rng& rng, std::size_t kernel = 7);

    /// Gate map in (0,1), shape [1,H,W].
    Tensor weights(const Tensor& f) const;
    Tensor operator()(const Tensor& f) const;

    void collect(const std::string& prefix, ParamList& out);

    Tensor conv_weight, conv_bias;
};

/// Channel attention followed by spatial attention.
class Cbam {
public:
    Cbam(std::size_t channels, Rng& rng);

    Tensor operator()(const Tensor& f) const;
    void collect(const std::string& prefix, ParamList& out);

    ChannelAttention channel;
    SpatialAttention spatial;
};

/// Per-channel gate over a magnitude spectrum; same shape as channel
/// attention but applied to pooled magnitudes.
class FrequencyAttention {
public:
    FrequencyAttention(std::size_t channels, Rng& rng);

    Tensor weights(const Tensor& magnitude) const;
    Tensor operator()(const Tensor& magnitude) const;

    void collect(const std::string& prefix, ParamList& out);

    Tensor w3, w4;

private:
    std::size_t channels_;
};

/// RGB gain head: three sigmoid scaling factors from pooled image
/// statistics through a hidden layer of width h.
class ChannelCalibration {
public:
    explicit ChannelCalibration(Rng& rng, std::size_t hidden = 8);

    /// Gains in (0,1)^3. Rejects inputs without exactly 3 channels.
    Tensor weights(const Tensor& image) const;
    Tensor operator()(const Tensor& image) const;

    void collect(const std::string& prefix, ParamList& out);

    Tensor w1, w2;
};

}  // namespace fusion
