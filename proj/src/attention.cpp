#include "fusion/attention.hpp"

#include "fusion/ops.hpp"

namespace fusion {

std::size_t reduction_ratio(std::size_t channels) {
    if (channels >= 16 && channels % 16 == 0) return 16;
    return channels;
}

namespace {

// Sigmoid pinned to the open interval: the gate contract is (0,1), and a
// saturated double would otherwise round to exactly 0 or 1.
Tensor gate_sigmoid(const Tensor& x) {
    Tensor s = sigmoid(x);
    auto v = s.data();
    const double lo = std::nextafter(0.0, 1.0);
    const double hi = std::nextafter(1.0, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] <= 0.0) v[i] = lo;
        if (v[i] >= 1.0) v[i] = hi;
    }
    return s;
}

void check_channels(const Tensor& f, std::size_t expected, const char* who) {
    if (f.rank() != 3 || f.shape()[0] != expected)
        throw ShapeError(std::string(who) + ": expected [" +
                         std::to_string(expected) + ",H,W], got " +
                         shape_str(f.shape()));
}

}  // namespace

ChannelAttention::ChannelAttention(std::size_t channels, Rng& rng)
    : channels_(channels) {
    std::size_t r = reduction_ratio(channels);
    std::size_t squeezed = channels / r;
    w1 = kaiming_uniform({squeezed, channels}, channels, rng);
    w2 = kaiming_uniform({channels, squeezed}, squeezed, rng);
}

Tensor ChannelAttention::weights(const Tensor& f) const {
    check_channels(f, channels_, "channel_attention");
    return gate_sigmoid(linear(relu(linear(global_avg_pool(f), w1)), w2));
}

Tensor ChannelAttention::operator()(const Tensor& f) const {
    return scale_channels(f, weights(f));
}

void ChannelAttention::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".w2", w2});
}

SpatialAttention::SpatialAttention(Rng& rng, std::size_t kernel) {
    conv_weight = kaiming_uniform({1, 2, kernel, kernel}, 2 * kernel * kernel,
                                  rng);
    conv_bias = zeros_param({1});
}

Tensor SpatialAttention::weights(const Tensor& f) const {
    return gate_sigmoid(conv2d(spatial_pool_pair(f), conv_weight, conv_bias));
}

Tensor SpatialAttention::operator()(const Tensor& f) const {
    return scale_pixels(f, weights(f));
}

void SpatialAttention::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".conv.weight", conv_weight});
    out.push_back({prefix + ".conv.bias", conv_bias});
}

Cbam::Cbam(std::size_t channels, Rng& rng)
    : channel(channels, rng), spatial(rng) {}

Tensor Cbam::operator()(const Tensor& f) const { return spatial(channel(f)); }

void Cbam::collect(const std::string& prefix, ParamList& out) {
    channel.collect(prefix + ".channel", out);
    spatial.collect(prefix + ".spatial", out);
}

FrequencyAttention::FrequencyAttention(std::size_t channels, Rng& rng)
    : channels_(channels) {
    std::size_t r = reduction_ratio(channels);
    std::size_t squeezed = channels / r;
    w3 = kaiming_uniform({squeezed, channels}, channels, rng);
    w4 = kaiming_uniform({channels, squeezed}, squeezed, rng);
}

Tensor FrequencyAttention::weights(const Tensor& magnitude) const {
    check_channels(magnitude, channels_, "frequency_attention");
    return gate_sigmoid(linear(relu(linear(global_avg_pool(magnitude), w3)), w4));
}

Tensor FrequencyAttention::operator()(const Tensor& magnitude) const {
    return scale_channels(magnitude, weights(magnitude));
}

void FrequencyAttention::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w3", w3});
    out.push_back({prefix + ".w4", w4});
}

ChannelCalibration::ChannelCalibration(Rng& rng, std::size_t hidden) {
    w1 = kaiming_uniform({hidden, 3}, 3, rng);
    w2 = kaiming_uniform({3, hidden}, hidden, rng);
}

Tensor ChannelCalibration::weights(const Tensor& image) const {
    check_channels(image, 3, "channel_calibration");
    return gate_sigmoid(linear(relu(linear(global_avg_pool(image), w1)), w2));
}

Tensor ChannelCalibration::operator()(const Tensor& image) const {
    return scale_channels(image, weights(image));
}

void ChannelCalibration::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".w2", w2});
}

}  // namespace fusion
