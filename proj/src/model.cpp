#include "fusion/model.hpp"

#include <algorithm>
#include <cmath>

#include "fusion/ops.hpp"

namespace fusion {

void AblationConfig::validate() const {
    if (freq_attention && !freq_branch)
        throw std::invalid_argument(
            "ablation: freq_attention requires freq_branch");
}

const std::array<std::string, 9>& AblationConfig::preset_names() {
    static const std::array<std::string, 9> names{
        "full",          "no_freq_attn",   "no_freq_branch",
        "no_freq_fusion", "no_chan_calib", "no_local_attn",
        "no_global_attn", "spatial_only",  "minimal"};
    return names;
}

AblationConfig AblationConfig::preset(const std::string& name) {
    AblationConfig c;  // full
    if (name == "full") {
    } else if (name == "no_freq_attn") {
        c.freq_attention = false;
    } else if (name == "no_freq_branch") {
        c.freq_branch = false;
        c.freq_attention = false;
    } else if (name == "no_freq_fusion") {
        c.freq_fusion = false;
    } else if (name == "no_chan_calib") {
        c.chan_calib = false;
    } else if (name == "no_local_attn") {
        c.local_attention = false;
    } else if (name == "no_global_attn") {
        c.global_attention = false;
    } else if (name == "spatial_only") {
        c.freq_attention = false;
        c.freq_branch = false;
        c.freq_fusion = false;
    } else if (name == "minimal") {
        c = AblationConfig{false, false, false, false, false, false};
    } else {
        throw std::invalid_argument("unknown ablation preset: " + name);
    }
    c.validate();
    return c;
}

std::uint32_t AblationConfig::to_bits() const {
    std::uint32_t b = 0;
    b |= freq_attention ? 1u << 0 : 0;
    b |= freq_branch ? 1u << 1 : 0;
    b |= freq_fusion ? 1u << 2 : 0;
    b |= chan_calib ? 1u << 3 : 0;
    b |= local_attention ? 1u << 4 : 0;
    b |= global_attention ? 1u << 5 : 0;
    return b;
}

AblationConfig AblationConfig::from_bits(std::uint32_t bits) {
    AblationConfig c;
    c.freq_attention = bits & (1u << 0);
    c.freq_branch = bits & (1u << 1);
    c.freq_fusion = bits & (1u << 2);
    c.chan_calib = bits & (1u << 3);
    c.local_attention = bits & (1u << 4);
    c.global_attention = bits & (1u << 5);
    c.validate();
    return c;
}

ModelConfig ModelConfig::tiny() { return {"tiny", 4}; }
ModelConfig ModelConfig::paper() { return {"paper", 32}; }

ModelConfig ModelConfig::from_name(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "paper") return paper();
    throw std::invalid_argument("unknown width preset: " + name);
}

ModelConfig ModelConfig::from_base(std::size_t base) {
    if (base == 4) return tiny();
    if (base == 32) return paper();
    return {"custom" + std::to_string(base), base};
}

Tensor slice_channel(const Tensor& image, Channel id) {
    if (image.rank() != 3 || image.shape()[0] != 3)
        throw ShapeError("slice_channel: expected [3,H,W], got " +
                         shape_str(image.shape()));
    const std::size_t plane = image.shape()[1] * image.shape()[2];
    auto v = image.data().subspan(static_cast<std::size_t>(id) * plane, plane);
    return Tensor::from({1, image.shape()[1], image.shape()[2]},
                        std::vector<double>(v.begin(), v.end()));
}

namespace {

constexpr std::array<std::size_t, 3> kSpatialKernels{3, 5, 7};
constexpr const char* kChannelNames[3] = {"R", "G", "B"};
constexpr double kNormEps = 1e-5;

void check_stage_finite(const Tensor& t, const char* stage) {
    if (!all_finite(t))
        throw NumericalError(std::string("forward: non-finite values at "
                                         "stage ") +
                             stage);
}

}  // namespace

SpatialBranch::SpatialBranch(std::size_t kernel, std::size_t width,
                             bool local_attention, Rng& rng) {
    conv_weight = kaiming_uniform({width, 1, kernel, kernel}, kernel * kernel,
                                  rng);
    conv_bias = zeros_param({width});
    if (local_attention) cbam.emplace(width, rng);
}

Tensor SpatialBranch::operator()(const Tensor& channel_plane) const {
    if (channel_plane.rank() != 3 || channel_plane.shape()[0] != 1)
        throw ShapeError("spatial_branch: expected [1,H,W], got " +
                         shape_str(channel_plane.shape()));
    Tensor f1 = conv2d(channel_plane, conv_weight, conv_bias);
    Tensor f2 = cbam ? (*cbam)(f1) : f1;
    return add(f2, f1);
}

void SpatialBranch::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".conv.weight", conv_weight});
    out.push_back({prefix + ".conv.bias", conv_bias});
    if (cbam) cbam->collect(prefix + ".cbam", out);
}

FrequencyBranch::FrequencyBranch(std::size_t width, bool freq_attention,
                                 Rng& rng) {
    conv1_weight = kaiming_uniform({width, 1, 1, 1}, 1, rng);
    conv1_bias = zeros_param({width});
    prelu_slope = scalar_param(0.25);
    conv2_weight = kaiming_uniform({width, width, 1, 1}, width, rng);
    conv2_bias = zeros_param({width});
    if (freq_attention) attention.emplace(width, rng);
}

void FrequencyBranch::set_identity() {
    std::fill(conv1_weight.data().begin(), conv1_weight.data().end(), 1.0);
    std::fill(conv1_bias.data().begin(), conv1_bias.data().end(), 0.0);
    prelu_slope.data()[0] = 1.0;
    std::fill(conv2_weight.data().begin(), conv2_weight.data().end(), 0.0);
    const std::size_t width = conv2_weight.shape()[0];
    for (std::size_t c = 0; c < width; ++c)
        conv2_weight.data()[c * width + c] = 1.0;
    std::fill(conv2_bias.data().begin(), conv2_bias.data().end(), 0.0);
}

Tensor FrequencyBranch::operator()(const Tensor& channel_plane) const {
    if (channel_plane.rank() != 3 || channel_plane.shape()[0] != 1)
        throw ShapeError("frequency_branch: expected [1,H,W], got " +
                         shape_str(channel_plane.shape()));
    SpectrumPair spectrum = fft2(channel_plane);

    // Magnitudes span several orders of magnitude (the DC bin dominates);
    // the learned 1x1 stack runs on RMS-normalized values and the scale is
    // restored before phase recombination. Scale-only normalization keeps
    // both the zero map and the identity map exact through the stack.
    Tensor power = global_avg_pool(mul(spectrum.magnitude,
                                       spectrum.magnitude));  // [1]
    Tensor rms = sqrt(add_const(power, kNormEps));            // [1]
    Tensor normed =
        mul_scalar(spectrum.magnitude, div(Tensor::scalar(1.0), rms));

    Tensor h = prelu(conv2d(normed, conv1_weight, conv1_bias), prelu_slope);
    Tensor stack = conv2d(h, conv2_weight, conv2_bias);
    Tensor refined = mul_scalar(stack, rms);

    if (attention) refined = (*attention)(refined);

    // Phase of the single input channel, broadcast to every feature channel.
    const std::size_t width = conv1_weight.shape()[0];
    const std::size_t hgt = channel_plane.shape()[1],
                      wid = channel_plane.shape()[2];
    std::vector<double> phase(width * hgt * wid);
    auto ph = spectrum.phase.data();
    for (std::size_t c = 0; c < width; ++c)
        std::copy(ph.begin(), ph.end(), phase.begin() + c * hgt * wid);
    Tensor phase_b = Tensor::from({width, hgt, wid}, std::move(phase));

    return ifft2(recombine(refined, phase_b));
}

void FrequencyBranch::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".stack.conv1.weight", conv1_weight});
    out.push_back({prefix + ".stack.conv1.bias", conv1_bias});
    out.push_back({prefix + ".stack.prelu.slope", prelu_slope});
    out.push_back({prefix + ".stack.conv2.weight", conv2_weight});
    out.push_back({prefix + ".stack.conv2.bias", conv2_bias});
    if (attention) attention->collect(prefix + ".attn", out);
}

FgfBlock::FgfBlock(std::size_t width, Rng& rng) {
    conv_weight = kaiming_uniform({width, 2 * width, 1, 1}, 2 * width, rng);
    conv_bias = zeros_param({width});
}

Tensor FgfBlock::operator()(const Tensor& f_spatial,
                            const Tensor& f_freq) const {
    if (f_spatial.shape() != f_freq.shape())
        throw ShapeError("fgf: spatial " + shape_str(f_spatial.shape()) +
                         " vs frequency " + shape_str(f_freq.shape()));
    return relu(conv2d(concat_channels({f_spatial, f_freq}), conv_weight,
                       conv_bias));
}

void FgfBlock::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".conv.weight", conv_weight});
    out.push_back({prefix + ".conv.bias", conv_bias});
}

FusionModel::FusionModel(ModelConfig config, AblationConfig ablation,
                         std::uint64_t seed)
    : config_(std::move(config)), ablation_(ablation), seed_(seed) {
    ablation_.validate();
    Rng rng(seed);
    const std::size_t base = config_.base;
    const std::size_t head = config_.head_width();

    for (std::size_t i = 0; i < 3; ++i)
        spatial_[i] = SpatialBranch(kSpatialKernels[i], base,
                                    ablation_.local_attention, rng);
    if (ablation_.freq_branch)
        for (std::size_t i = 0; i < 3; ++i)
            freq_[i].emplace(base, ablation_.freq_attention, rng);
    if (ablation_.freq_branch && ablation_.freq_fusion)
        for (std::size_t i = 0; i < 3; ++i) fgf_[i].emplace(base, rng);

    td_weight = kaiming_uniform({head, 3 * base, 3, 3}, 3 * base * 9, rng);
    td_bias = zeros_param({head});
    const std::size_t tf_in = head + (ablation_.freq_branch ? 3 * base : 0);
    tf_weight = kaiming_uniform({head, tf_in, 3, 3}, tf_in * 9, rng);
    tf_bias = zeros_param({head});
    if (ablation_.global_attention) {
        proj_weight = kaiming_uniform({head, 3 * base, 1, 1}, 3 * base, rng);
        proj_bias = zeros_param({head});
        global_cbam_.emplace(head, rng);
    }
    te1_weight = kaiming_uniform({base, head, 3, 3}, head * 9, rng);
    te1_bias = zeros_param({base});
    te2_weight = kaiming_uniform({3, base, 3, 3}, base * 9, rng);
    te2_bias = zeros_param({3});
    if (ablation_.chan_calib) calibration_.emplace(rng);

    register_params();
}

void FusionModel::register_params() {
    params_.clear();
    for (std::size_t i = 0; i < 3; ++i)
        spatial_[i].collect(std::string("spatial.") + kChannelNames[i],
                            params_);
    for (std::size_t i = 0; i < 3; ++i)
        if (freq_[i])
            freq_[i]->collect(std::string("freq.") + kChannelNames[i],
                              params_);
    for (std::size_t i = 0; i < 3; ++i)
        if (fgf_[i])
            fgf_[i]->collect(std::string("fgf.") + kChannelNames[i], params_);
    params_.push_back({"head.td.weight", td_weight});
    params_.push_back({"head.td.bias", td_bias});
    params_.push_back({"head.tf.weight", tf_weight});
    params_.push_back({"head.tf.bias", tf_bias});
    if (proj_weight.defined()) {
        params_.push_back({"head.proj.weight", proj_weight});
        params_.push_back({"head.proj.bias", proj_bias});
    }
    if (global_cbam_) global_cbam_->collect("head.cbam", params_);
    params_.push_back({"head.te1.weight", te1_weight});
    params_.push_back({"head.te1.bias", te1_bias});
    params_.push_back({"head.te2.weight", te2_weight});
    params_.push_back({"head.te2.bias", te2_bias});
    if (calibration_) calibration_->collect("calib", params_);
}

Tensor FusionModel::spatial_branch(const Tensor& channel_plane,
                                   Channel id) const {
    return spatial_[static_cast<std::size_t>(id)](channel_plane);
}

Tensor FusionModel::frequency_branch(const Tensor& channel_plane,
                                     Channel id) const {
    const auto& branch = freq_[static_cast<std::size_t>(id)];
    if (!branch)
        throw std::logic_error("frequency branch is disabled by ablation");
    return (*branch)(channel_plane);
}

Tensor FusionModel::fgf(const Tensor& f_spatial, const Tensor& f_freq,
                        Channel id) const {
    const auto& block = fgf_[static_cast<std::size_t>(id)];
    if (!block) return f_spatial;
    return (*block)(f_spatial, f_freq);
}

Tensor FusionModel::forward(const Tensor& image) const {
    if (image.rank() != 3 || image.shape()[0] != 3)
        throw ShapeError("forward: expected [3,H,W], got " +
                         shape_str(image.shape()));
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    if (h < 8 || w < 8)
        throw ShapeError("forward: spatial extents must be >= 8, got " +
                         shape_str(image.shape()));
    check_stage_finite(image, "input");

    std::array<Tensor, 3> fused;
    std::array<Tensor, 3> freq_features;
    for (std::size_t i = 0; i < 3; ++i) {
        Channel id = static_cast<Channel>(i);
        Tensor plane = slice_channel(image, id);
        Tensor f_sp = spatial_branch(plane, id);
        check_stage_finite(f_sp, "spatial_branch");
        Tensor f_fused = f_sp;
        if (ablation_.freq_branch) {
            freq_features[i] = frequency_branch(plane, id);
            check_stage_finite(freq_features[i], "frequency_branch");
            f_fused = fgf(f_sp, freq_features[i], id);
            check_stage_finite(f_fused, "fgf");
        }
        fused[i] = add_plane(f_fused, plane);  // Eq.12-style residual
    }

    Tensor f_concat = concat_channels({fused[0], fused[1], fused[2]});
    Tensor f_d = relu(conv2d(f_concat, td_weight, td_bias));
    check_stage_finite(f_d, "td");

    Tensor tf_in = f_d;
    if (ablation_.freq_branch)
        tf_in = concat_channels({f_d, concat_channels({freq_features[0],
                                                       freq_features[1],
                                                       freq_features[2]})});
    Tensor f_fusion = relu(conv2d(tf_in, tf_weight, tf_bias));
    check_stage_finite(f_fusion, "tf");

    Tensor f_attn = f_fusion;
    if (ablation_.global_attention) {
        Tensor context = conv2d(f_concat, proj_weight, proj_bias);
        f_attn = add((*global_cbam_)(f_fusion), context);
        check_stage_finite(f_attn, "global_attention");
    }

    Tensor e_mid = relu(conv2d(f_attn, te1_weight, te1_bias));
    Tensor enhanced = sigmoid(conv2d(e_mid, te2_weight, te2_bias));
    check_stage_finite(enhanced, "decoder");

    Tensor final = calibration_ ? (*calibration_)(enhanced) : enhanced;
    check_stage_finite(final, "calibration");
    return final;
}

ParamList& FusionModel::parameters() { return params_; }
const ParamList& FusionModel::parameters() const { return params_; }

void FusionModel::zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t FusionModel::count_parameters() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.tensor.size();
    return total;
}

std::map<std::string, std::size_t> FusionModel::parameter_breakdown() const {
    std::map<std::string, std::size_t> by_module;
    for (const auto& p : params_) {
        std::string module = p.name.substr(0, p.name.find('.'));
        by_module[module] += p.tensor.size();
    }
    return by_module;
}

}  // namespace fusion
