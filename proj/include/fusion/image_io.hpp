#pragma once

#include <stdexcept>
#include <string>

#include "fusion/tensor.hpp"

namespace fusion {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decodes a PNG to a [3,H,W] tensor in [0,1] (value/255). Gray and
/// paletted images are expanded to RGB; alpha and 16-bit depth are reduced.
Tensor read_png(const std::string& path);

/// Encodes a [3,H,W] tensor as an 8-bit RGB PNG via round(clamp(x,0,1)*255).
/// Fixed encoder settings keep identical tensors byte-identical on disk.
void write_png(const Tensor& image, const std::string& path);

/// Bilinear resize of a [3,H,W] tensor to the requested extents.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h,
                       std::size_t out_w);

}  // namespace fusion
