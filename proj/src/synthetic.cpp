#include "fusion/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fusion {

void DegradationParams::validate() const {
    for (double b : beta)
        if (b < 0.0) throw std::invalid_argument("degrade: beta must be >= 0");
    if (depth < 0.0) throw std::invalid_argument("degrade: depth must be >= 0");
    for (double b : backscatter)
        if (b < 0.0 || b > 1.0)
            throw std::invalid_argument("degrade: backscatter must be in "
                                        "[0,1]");
    if (floor <= 0.0 || floor > 1.0)
        throw std::invalid_argument("degrade: floor must be in (0,1]");
}

DegradationParams DegradationParams::random(Rng& rng) {
    DegradationParams p;
    // sorted draws keep beta_R >= beta_G >= beta_B
    double draws[3];
    for (auto& d : draws) d = 0.05 + 0.95 * rng.uniform();
    std::sort(draws, draws + 3, std::greater<>());
    for (int c = 0; c < 3; ++c) p.beta[c] = draws[c];
    p.depth = 0.5 + 2.5 * rng.uniform();
    for (auto& b : p.backscatter) b = 0.3 * rng.uniform();
    return p;
}

Tensor degrade(const Tensor& clean, const DegradationParams& params) {
    if (clean.rank() != 3 || clean.shape()[0] != 3)
        throw ShapeError("degrade: expected [3,H,W], got " +
                         shape_str(clean.shape()));
    params.validate();
    auto cv = clean.data();
    const std::size_t plane = clean.shape()[1] * clean.shape()[2];
    std::vector<double> out(cv.size());
    for (std::size_t c = 0; c < 3; ++c) {
        double t = std::max(std::exp(-params.beta[c] * params.depth),
                            params.floor);
        double b = params.backscatter[c] * (1.0 - t);
        for (std::size_t i = 0; i < plane; ++i) {
            double v = cv[c * plane + i] * t + b;
            out[c * plane + i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return Tensor::from(clean.shape(), std::move(out));
}

namespace {

// Bilinearly interpolated lattice noise: a coarse random grid stretched over
// the full image, one octave per call.
void add_value_noise(std::vector<double>& plane, std::size_t h, std::size_t w,
                     std::size_t cells, double amplitude, Rng& rng) {
    std::vector<double> grid((cells + 1) * (cells + 1));
    for (auto& g : grid) g = rng.uniform();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double gy = static_cast<double>(y) / (h - 1) * cells;
            double gx = static_cast<double>(x) / (w - 1) * cells;
            std::size_t y0 = std::min(static_cast<std::size_t>(gy), cells - 1);
            std::size_t x0 = std::min(static_cast<std::size_t>(gx), cells - 1);
            double fy = gy - y0, fx = gx - x0;
            double v00 = grid[y0 * (cells + 1) + x0];
            double v01 = grid[y0 * (cells + 1) + x0 + 1];
            double v10 = grid[(y0 + 1) * (cells + 1) + x0];
            double v11 = grid[(y0 + 1) * (cells + 1) + x0 + 1];
            double top = v00 + (v01 - v00) * fx;
            double bot = v10 + (v11 - v10) * fx;
            plane[y * w + x] += amplitude * (top + (bot - top) * fy);
        }
}

}  // namespace

Tensor synthetic_clean_image(std::size_t height, std::size_t width, Rng& rng) {
    if (height < 8 || width < 8)
        throw std::invalid_argument("synthetic image extents must be >= 8");
    const std::size_t plane = height * width;
    std::vector<double> img(3 * plane);

    // smooth per-channel gradient base
    for (std::size_t c = 0; c < 3; ++c) {
        double base = 0.2 + 0.5 * rng.uniform();
        double dx = (rng.uniform() - 0.5) * 0.6;
        double dy = (rng.uniform() - 0.5) * 0.6;
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                img[c * plane + y * width + x] =
                    base + dx * (static_cast<double>(x) / (width - 1) - 0.5) +
                    dy * (static_cast<double>(y) / (height - 1) - 0.5);
    }

    // two octaves of value noise, shared across channels with per-channel
    // gain so the texture stays correlated like natural images
    std::vector<double> noise(plane, 0.0);
    add_value_noise(noise, height, width, 4, 0.3, rng);
    add_value_noise(noise, height, width, 8, 0.15, rng);
    for (std::size_t c = 0; c < 3; ++c) {
        double gain = 0.6 + 0.4 * rng.uniform();
        for (std::size_t i = 0; i < plane; ++i)
            img[c * plane + i] += gain * (noise[i] - 0.22);
    }

    // a few filled rectangles and circles with hard edges
    const int n_shapes = 2 + static_cast<int>(rng.next_u64() % 3);
    for (int s = 0; s < n_shapes; ++s) {
        double color[3];
        for (auto& cc : color) cc = rng.uniform();
        bool circle = rng.next_u64() & 1;
        double cy = rng.uniform() * height, cx = rng.uniform() * width;
        double ry = (0.08 + 0.17 * rng.uniform()) * height;
        double rx = (0.08 + 0.17 * rng.uniform()) * width;
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                double ny = (y - cy) / ry, nx = (x - cx) / rx;
                bool inside = circle ? (ny * ny + nx * nx <= 1.0)
                                     : (std::fabs(ny) <= 1.0 &&
                                        std::fabs(nx) <= 1.0);
                if (inside)
                    for (std::size_t c = 0; c < 3; ++c)
                        img[c * plane + y * width + x] =
                            0.5 * img[c * plane + y * width + x] +
                            0.5 * color[c];
            }
    }

    for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
    return Tensor::from({3, height, width}, std::move(img));
}

std::vector<TrainPair> synthetic_dataset(std::size_t count,
                                         std::size_t height,
                                         std::size_t width,
                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainPair> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor clean = synthetic_clean_image(height, width, rng);
        DegradationParams p = DegradationParams::random(rng);
        pairs.push_back({degrade(clean, p), clean});
    }
    return pairs;
}

}  // namespace fusion
