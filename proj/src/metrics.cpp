#include "fusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fusion {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::size_t kBlock = 8;
constexpr double kLogEps = 1e-4;

void check_pair(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("metric: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    if (a.rank() != 3 || a.shape()[0] != 3)
        throw ShapeError("metric: expected [3,H,W], got " +
                         shape_str(a.shape()));
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    check_pair(a, b);
    auto av = a.data(), bv = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        acc += d * d;
    }
    return acc / static_cast<double>(av.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    double e = mse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size * size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double dy = y - c, dx = x - c;
            double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w[y * size + x] = v;
            total += v;
        }
    for (auto& v : w) v /= total;
    return w;
}

double ssim(const Tensor& a, const Tensor& b) {
    check_pair(a, b);
    const std::size_t h = a.shape()[1], w = a.shape()[2];
    if (h < kWindow || w < kWindow)
        throw ShapeError("ssim: image smaller than the 11x11 window");

    static const std::vector<double> win = gaussian_window(kWindow, kSigma);
    auto av = a.data(), bv = b.data();
    const std::size_t plane = h * w;
    double total = 0.0;

    for (std::size_t c = 0; c < 3; ++c) {
        double channel = 0.0;
        std::size_t positions = 0;
        for (std::size_t y = 0; y + kWindow <= h; ++y)
            for (std::size_t x = 0; x + kWindow <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t wy = 0; wy < kWindow; ++wy)
                    for (std::size_t wx = 0; wx < kWindow; ++wx) {
                        double g = win[wy * kWindow + wx];
                        double pa =
                            av[c * plane + (y + wy) * w + (x + wx)];
                        double pb =
                            bv[c * plane + (y + wy) * w + (x + wx)];
                        ma += g * pa;
                        mb += g * pb;
                        saa += g * (pa * pa);
                        sbb += g * (pb * pb);
                        sab += g * (pa * pb);  // grouping keeps ssim(a,b)
                                               // bitwise symmetric
                    }
                double va = saa - ma * ma;
                double vb = sbb - mb * mb;
                double cov = sab - ma * mb;
                channel += (2 * (ma * mb) + kC1) * (2 * cov + kC2) /
                           ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                ++positions;
            }
        total += channel / static_cast<double>(positions);
    }
    return total / 3.0;
}

namespace {

struct TrimmedStats {
    double mean = 0.0;
    double var = 0.0;
};

// Asymmetric alpha-trimmed mean (alpha_L = alpha_R = 0.1) with the second
// moment taken about it over all samples.
TrimmedStats trimmed(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const std::size_t trim = static_cast<std::size_t>(0.1 * n);
    TrimmedStats s;
    double acc = 0.0;
    for (std::size_t i = trim; i < n - trim; ++i) acc += values[i];
    s.mean = acc / static_cast<double>(n - 2 * trim);
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.var = var / static_cast<double>(n);
    return s;
}

// EME over full kBlock x kBlock blocks of one plane. A block with zero max
// (no signal) contributes nothing; a zero min (edge maps vanish at image
// borders) is floored so one flat pixel cannot erase the block.
double eme(const std::vector<double>& plane, std::size_t h, std::size_t w) {
    const std::size_t by = h / kBlock, bx = w / kBlock;
    double acc = 0.0;
    for (std::size_t i = 0; i < by; ++i)
        for (std::size_t j = 0; j < bx; ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t y = i * kBlock; y < (i + 1) * kBlock; ++y)
                for (std::size_t x = j * kBlock; x < (j + 1) * kBlock; ++x) {
                    lo = std::min(lo, plane[y * w + x]);
                    hi = std::max(hi, plane[y * w + x]);
                }
            if (hi > 0.0) acc += std::log(hi / std::max(lo, kLogEps));
        }
    return 2.0 / static_cast<double>(by * bx) * acc;
}

}  // namespace

UiqmComponents uiqm(const Tensor& img) {
    if (img.rank() != 3 || img.shape()[0] != 3)
        throw ShapeError("uiqm: expected [3,H,W], got " +
                         shape_str(img.shape()));
    const std::size_t h = img.shape()[1], w = img.shape()[2];
    if (h < kBlock || w < kBlock)
        throw ShapeError("uiqm: image smaller than an 8x8 block");

    const std::size_t plane = h * w;
    auto v = img.data();
    // 8-bit dynamic range, as the component formulas assume
    auto px = [&](std::size_t c, std::size_t i) { return 255.0 * v[c * plane + i]; };

    UiqmComponents out;

    // UICM: opponent channels RG = R-G, YB = (R+G)/2 - B
    std::vector<double> rg(plane), yb(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        rg[i] = px(0, i) - px(1, i);
        yb[i] = 0.5 * (px(0, i) + px(1, i)) - px(2, i);
    }
    TrimmedStats srg = trimmed(std::move(rg));
    TrimmedStats syb = trimmed(std::move(yb));
    out.uicm = -0.0268 * std::sqrt(srg.mean * srg.mean + syb.mean * syb.mean) +
               0.1586 * std::sqrt(srg.var + syb.var);

    // UISM: Sobel edge magnitude per channel, weighted by the channel
    // intensity, then EME; luma-style channel weights
    const double channel_weight[3] = {0.299, 0.587, 0.114};
    out.uism = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> edge(plane, 0.0);
        for (std::size_t y = 1; y + 1 < h; ++y)
            for (std::size_t x = 1; x + 1 < w; ++x) {
                auto at = [&](std::size_t yy, std::size_t xx) {
                    return px(c, yy * w + xx);
                };
                double gx = at(y - 1, x + 1) + 2 * at(y, x + 1) +
                            at(y + 1, x + 1) - at(y - 1, x - 1) -
                            2 * at(y, x - 1) - at(y + 1, x - 1);
                double gy = at(y + 1, x - 1) + 2 * at(y + 1, x) +
                            at(y + 1, x + 1) - at(y - 1, x - 1) -
                            2 * at(y - 1, x) - at(y - 1, x + 1);
                edge[y * w + x] = std::hypot(gx, gy) * px(c, y * w + x);
            }
        out.uism += channel_weight[c] * eme(edge, h, w);
    }

    // UIConM: logAMEE of the mean-intensity plane over 8x8 blocks
    std::vector<double> gray(plane);
    for (std::size_t i = 0; i < plane; ++i)
        gray[i] = (px(0, i) + px(1, i) + px(2, i)) / 3.0;
    const std::size_t by = h / kBlock, bx = w / kBlock;
    double acc = 0.0;
    for (std::size_t i = 0; i < by; ++i)
        for (std::size_t j = 0; j < bx; ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t y = i * kBlock; y < (i + 1) * kBlock; ++y)
                for (std::size_t x = j * kBlock; x < (j + 1) * kBlock; ++x) {
                    lo = std::min(lo, gray[y * w + x]);
                    hi = std::max(hi, gray[y * w + x]);
                }
            double top = hi - lo, bot = hi + lo;
            if (top > 0.0 && bot > 0.0) {
                double m = top / bot;
                acc += m * std::log(m + kLogEps);
            }
        }
    out.uiconm = acc / static_cast<double>(by * bx);

    out.uiqm = 0.0282 * out.uicm + 0.2953 * out.uism + 3.5753 * out.uiconm;
    return out;
}

MetricRecord MetricReport::aggregate() const {
    if (records.empty())
        throw std::invalid_argument("metric report is empty");
    MetricRecord agg;
    for (const auto& r : records) {
        agg.mse += r.mse;
        agg.psnr_db += r.psnr_db;
        agg.ssim += r.ssim;
        agg.uicm += r.uicm;
        agg.uism += r.uism;
        agg.uiconm += r.uiconm;
        agg.uiqm += r.uiqm;
    }
    const double n = static_cast<double>(records.size());
    agg.mse /= n;
    agg.psnr_db /= n;
    agg.ssim /= n;
    agg.uicm /= n;
    agg.uism /= n;
    agg.uiconm /= n;
    agg.uiqm /= n;
    return agg;
}

namespace {

std::string fmt(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(9);
    os << x;
    return os.str();
}

void append_row(std::ostringstream& os, const std::string& path,
                const MetricRecord& r) {
    os << path << ',' << fmt(r.mse) << ',' << fmt(r.psnr_db) << ','
       << fmt(r.ssim) << ',' << fmt(r.uicm) << ',' << fmt(r.uism) << ','
       << fmt(r.uiconm) << ',' << fmt(r.uiqm) << '\n';
}

}  // namespace

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << "path,mse,psnr_db,ssim,uicm,uism,uiconm,uiqm\n";
    for (const auto& r : records) append_row(os, r.path, r);
    return os.str();
}

}  // namespace fusion
