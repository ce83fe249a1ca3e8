#pragma once

#include <span>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

// Elementwise (matching shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise against a compile-time constant.
Tensor add_const(const Tensor& a, double c);
Tensor mul_const(const Tensor& a, double c);

// Broadcast against a 1-element tensor (differentiable scalar).
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor add_scalar(const Tensor& a, const Tensor& s);

// Activations. relu subgradient at 0 is 0; prelu slope is a learnable
// 1-element tensor; abs subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);

/// Clamps negatives to 0. Values below -warn_tol emit one stderr warning.
Tensor clamp_nonneg(const Tensor& x, double warn_tol = 1e-6);

// Reductions to a scalar tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Same-padded 2-D cross-correlation.
/// input [C_in,H,W], weight [C_out,C_in,k,k] with k odd, bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Depthwise valid correlation of every channel with one constant k x k
/// kernel. Differentiable w.r.t. x only. Output [C,H-k+1,W-k+1].
Tensor filter2_valid(const Tensor& x, std::span<const double> kernel,
                     std::size_t k);

/// out[j] = sum_c weight[j,c] * input[c] + bias[j]. Pass an undefined bias
/// for a pure matrix product.
Tensor linear(const Tensor& input, const Tensor& weight,
              const Tensor& bias = Tensor());

/// [C,H,W] -> [C], mean over each plane.
Tensor global_avg_pool(const Tensor& x);

/// [C,H,W] -> [2,H,W]: plane 0 per-pixel channel mean, plane 1 channel max.
Tensor spatial_pool_pair(const Tensor& x);

/// Concatenate [C_i,H,W] tensors along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);

/// x[C,H,W] scaled per channel by v[C].
Tensor scale_channels(const Tensor& x, const Tensor& v);

/// x[C,H,W] scaled per pixel by m[1,H,W], broadcast over channels.
Tensor scale_pixels(const Tensor& x, const Tensor& m);

/// x[C,H,W] plus p[1,H,W] broadcast over channels.
Tensor add_plane(const Tensor& x, const Tensor& p);

bool all_finite(const Tensor& x);

}  // namespace fusion
