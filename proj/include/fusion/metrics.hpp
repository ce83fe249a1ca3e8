#pragma once

#include <string>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

/// Mean squared error over all pixels and channels.
double mse(const Tensor& a, const Tensor& b);

/// 10*log10(peak^2/mse); identical images yield +infinity explicitly.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
/// dynamic range 1. Computed per channel over valid window positions and
/// averaged. Rejects images smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

/// Normalized 2-D Gaussian window, row-major size x size. Shared with the
/// differentiable SSIM used by the training loss.
std::vector<double> gaussian_window(std::size_t size, double sigma);

struct UiqmComponents {
    double uicm = 0.0;
    double uism = 0.0;
    double uiconm = 0.0;
    double uiqm = 0.0;
};

/// No-reference underwater quality measures on a [3,H,W] image in [0,1].
/// UICM uses asymmetric alpha-trimmed opponent-channel statistics
/// (alpha 0.1), UISM Sobel-edge EME over 8x8 blocks, UIConM logAMEE over
/// 8x8 blocks; UIQM = 0.0282*UICM + 0.2953*UISM + 3.5753*UIConM.
UiqmComponents uiqm(const Tensor& img);

struct MetricRecord {
    std::string path;
    double mse = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double uicm = 0.0;
    double uism = 0.0;
    double uiconm = 0.0;
    double uiqm = 0.0;
};

struct MetricReport {
    std::vector<MetricRecord> records;

    /// Arithmetic means over records (path empty). Empty report rejected.
    MetricRecord aggregate() const;
    /// Header row plus one row per record; infinite PSNR serializes as
    /// "inf".
    std::string to_csv() const;
};

}  // namespace fusion
