#include "fusion/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fusion {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_chw(const Tensor& x, const char* op) {
    if (x.rank() != 3)
        throw ShapeError(std::string(op) + ": expected [C,H,W], got " +
                         shape_str(x.shape()));
}

using Grad = std::span<const double>;

Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          double (*dfa)(double, double),
                          double (*dfb)(double, double)) {
    check_same_shape(a, b, name);
    auto av = a.data(), bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    Tensor pa = a, pb = b;
    return OpBuilder::make(
        a.shape(), std::move(out), {a, b},
        [pa, pb, dfa, dfb](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto av = pa.data(), bv = pb.data();
            if (pa.requires_grad()) {
                std::vector<double> d(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                    d[i] = g[i] * dfa(av[i], bv[i]);
                accumulate_grad(pa, d);
            }
            if (pb.requires_grad()) {
                std::vector<double> d(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                    d[i] = g[i] * dfb(av[i], bv[i]);
                accumulate_grad(pb, d);
            }
        });
}

Tensor elementwise_unary(const Tensor& x, const char* /*name*/,
                         double (*fwd)(double), double (*df)(double)) {
    auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    Tensor px = x;
    return OpBuilder::make(x.shape(), std::move(out), {x},
                           [px, df](const auto& node) mutable {
                               Grad g = OpBuilder::node_grad(node);
                               auto xv = px.data();
                               std::vector<double> d(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   d[i] = g[i] * df(xv[i]);
                               accumulate_grad(px, d);
                           });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor add_const(const Tensor& a, double c) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    Tensor pa = a;
    return OpBuilder::make(a.shape(), std::move(out), {a},
                           [pa](const auto& node) mutable {
                               accumulate_grad(pa, OpBuilder::node_grad(node));
                           });
}

Tensor mul_const(const Tensor& a, double c) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    Tensor pa = a;
    return OpBuilder::make(a.shape(), std::move(out), {a},
                           [pa, c](const auto& node) mutable {
                               Grad g = OpBuilder::node_grad(node);
                               std::vector<double> d(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   d[i] = g[i] * c;
                               accumulate_grad(pa, d);
                           });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    if (s.size() != 1)
        throw ShapeError("mul_scalar: scalar operand has shape " +
                         shape_str(s.shape()));
    double sv = s[0];
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * sv;
    Tensor pa = a, ps = s;
    return OpBuilder::make(
        a.shape(), std::move(out), {a, s}, [pa, ps](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            if (pa.requires_grad()) {
                double sv = ps[0];
                std::vector<double> d(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * sv;
                accumulate_grad(pa, d);
            }
            if (ps.requires_grad()) {
                double acc = 0.0;
                auto av = pa.data();
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
                double d[1] = {acc};
                accumulate_grad(ps, d);
            }
        });
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
    if (s.size() != 1)
        throw ShapeError("add_scalar: scalar operand has shape " +
                         shape_str(s.shape()));
    double sv = s[0];
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sv;
    Tensor pa = a, ps = s;
    return OpBuilder::make(
        a.shape(), std::move(out), {a, s}, [pa, ps](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            if (pa.requires_grad()) accumulate_grad(pa, g);
            if (ps.requires_grad()) {
                double acc = 0.0;
                for (double v : g) acc += v;
                double d[1] = {acc};
                accumulate_grad(ps, d);
            }
        });
}

Tensor relu(const Tensor& x) {
    return elementwise_unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise_unary(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        });
}

Tensor abs(const Tensor& x) {
    return elementwise_unary(
        x, "abs", [](double v) { return std::fabs(v); },
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
    return elementwise_unary(
        x, "sqrt", [](double v) { return std::sqrt(v); },
        [](double v) { return 0.5 / std::sqrt(std::max(v, 1e-300)); });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
    if (slope.size() != 1)
        throw ShapeError("prelu: slope must be a 1-element tensor, got " +
                         shape_str(slope.shape()));
    double a = slope[0];
    auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = xv[i] >= 0.0 ? xv[i] : a * xv[i];
    Tensor px = x, ps = slope;
    return OpBuilder::make(
        x.shape(), std::move(out), {x, slope},
        [px, ps](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto xv = px.data();
            if (px.requires_grad()) {
                double a = ps[0];
                std::vector<double> d(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                    d[i] = g[i] * (xv[i] >= 0.0 ? 1.0 : a);
                accumulate_grad(px, d);
            }
            if (ps.requires_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (xv[i] < 0.0) acc += g[i] * xv[i];
                double d[1] = {acc};
                accumulate_grad(ps, d);
            }
        });
}

Tensor clamp_nonneg(const Tensor& x, double warn_tol) {
    static std::atomic<int> warnings_left{5};
    auto xv = x.data();
    std::vector<double> out(xv.size());
    double worst = 0.0;
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (xv[i] < -warn_tol) {
            worst = std::min(worst, xv[i]);
            ++clamped;
        }
        out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    }
    if (clamped > 0) {
        int left = warnings_left.fetch_sub(1);
        if (left > 1) {
            std::fprintf(stderr,
                         "[fusion] warning: clamped %zu magnitudes to 0 "
                         "(worst %.3g)\n",
                         clamped, worst);
        } else if (left == 1) {
            std::fprintf(stderr,
                         "[fusion] warning: clamped %zu magnitudes to 0 "
                         "(worst %.3g); further clamp warnings suppressed\n",
                         clamped, worst);
        }
    }
    Tensor px = x;
    return OpBuilder::make(x.shape(), std::move(out), {x},
                           [px](const auto& node) mutable {
                               Grad g = OpBuilder::node_grad(node);
                               auto xv = px.data();
                               std::vector<double> d(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   d[i] = xv[i] > 0.0 ? g[i] : 0.0;
                               accumulate_grad(px, d);
                           });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor px = x;
    return OpBuilder::make(
        {1}, {acc}, {x}, [px](const auto& node) mutable {
            double g = OpBuilder::node_grad(node)[0];
            std::vector<double> d(px.size(), g);
            accumulate_grad(px, d);
        });
}

Tensor mean(const Tensor& x) {
    double inv = 1.0 / static_cast<double>(x.size());
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor px = x;
    return OpBuilder::make(
        {1}, {acc * inv}, {x}, [px, inv](const auto& node) mutable {
            double g = OpBuilder::node_grad(node)[0] * inv;
            std::vector<double> d(px.size(), g);
            accumulate_grad(px, d);
        });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_chw(input, "conv2d");
    if (weight.rank() != 4)
        throw ShapeError("conv2d: weight must be [C_out,C_in,k,k], got " +
                         shape_str(weight.shape()));
    const std::size_t ci = input.shape()[0], h = input.shape()[1],
                      w = input.shape()[2];
    const std::size_t co = weight.shape()[0], k = weight.shape()[2];
    if (weight.shape()[1] != ci)
        throw ShapeError("conv2d: weight expects " +
                         std::to_string(weight.shape()[1]) +
                         " input channels, input has " + std::to_string(ci));
    if (weight.shape()[3] != k || k % 2 == 0)
        throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                         shape_str(weight.shape()));
    if (bias.shape() != Shape{co})
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(co) +
                         " output channels");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k) / 2;
    const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h),
                         ww = static_cast<std::ptrdiff_t>(w);

    auto in = input.data();
    auto wt = weight.data();
    auto bs = bias.data();
    std::vector<double> out(co * h * w);
    for (std::size_t oc = 0; oc < co; ++oc) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double acc = bs[oc];
                for (std::size_t ic = 0; ic < ci; ++ic) {
                    const double* wrow = &wt[((oc * ci) + ic) * k * k];
                    const double* irow = &in[ic * h * w];
                    for (std::size_t dy = 0; dy < k; ++dy) {
                        std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + dy) - pad;
                        if (iy < 0 || iy >= hh) continue;
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(x + dx) - pad;
                            if (ix < 0 || ix >= ww) continue;
                            acc += wrow[dy * k + dx] * irow[iy * ww + ix];
                        }
                    }
                }
                out[(oc * h + y) * w + x] = acc;
            }
        }
    }

    Tensor pin = input, pw = weight, pb = bias;
    return OpBuilder::make(
        {co, h, w}, std::move(out), {input, weight, bias},
        [pin, pw, pb, ci, co, h, w, k, pad](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto in = pin.data();
            auto wt = pw.data();
            const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h),
                                 ww = static_cast<std::ptrdiff_t>(w);
            std::vector<double> din(pin.requires_grad() ? in.size() : 0, 0.0);
            std::vector<double> dwt(pw.requires_grad() ? wt.size() : 0, 0.0);
            std::vector<double> dbs(pb.requires_grad() ? co : 0, 0.0);
            for (std::size_t oc = 0; oc < co; ++oc) {
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        double gv = g[(oc * h + y) * w + x];
                        if (gv == 0.0) continue;
                        if (!dbs.empty()) dbs[oc] += gv;
                        for (std::size_t ic = 0; ic < ci; ++ic) {
                            std::size_t wbase = ((oc * ci) + ic) * k * k;
                            std::size_t ibase = ic * h * w;
                            for (std::size_t dy = 0; dy < k; ++dy) {
                                std::ptrdiff_t iy =
                                    static_cast<std::ptrdiff_t>(y + dy) - pad;
                                if (iy < 0 || iy >= hh) continue;
                                for (std::size_t dx = 0; dx < k; ++dx) {
                                    std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(x + dx) -
                                        pad;
                                    if (ix < 0 || ix >= ww) continue;
                                    std::size_t ii = ibase + iy * ww + ix;
                                    std::size_t wi = wbase + dy * k + dx;
                                    if (!din.empty()) din[ii] += gv * wt[wi];
                                    if (!dwt.empty()) dwt[wi] += gv * in[ii];
                                }
                            }
                        }
                    }
                }
            }
            if (!din.empty()) accumulate_grad(pin, din);
            if (!dwt.empty()) accumulate_grad(pw, dwt);
            if (!dbs.empty()) accumulate_grad(pb, dbs);
        });
}

Tensor filter2_valid(const Tensor& x, std::span<const double> kernel,
                     std::size_t k) {
    check_chw(x, "filter2_valid");
    if (kernel.size() != k * k)
        throw ShapeError("filter2_valid: kernel size mismatch");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (h < k || w < k)
        throw ShapeError("filter2_valid: image " + shape_str(x.shape()) +
                         " smaller than window " + std::to_string(k));
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    auto xv = x.data();
    std::vector<double> out(c * oh * ow, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx)
                        acc += kernel[dy * k + dx] *
                               xv[(ch * h + y + dy) * w + xx + dx];
                out[(ch * oh + y) * ow + xx] = acc;
            }
    Tensor px = x;
    std::vector<double> kern(kernel.begin(), kernel.end());
    return OpBuilder::make(
        {c, oh, ow}, std::move(out), {x},
        [px, kern, c, h, w, k, oh, ow](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            std::vector<double> d(px.size(), 0.0);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        double gv = g[(ch * oh + y) * ow + xx];
                        if (gv == 0.0) continue;
                        for (std::size_t dy = 0; dy < k; ++dy)
                            for (std::size_t dx = 0; dx < k; ++dx)
                                d[(ch * h + y + dy) * w + xx + dx] +=
                                    gv * kern[dy * k + dx];
                    }
            accumulate_grad(px, d);
        });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 1)
        throw ShapeError("linear: input must be a vector, got " +
                         shape_str(input.shape()));
    if (weight.rank() != 2 || weight.shape()[1] != input.shape()[0])
        throw ShapeError("linear: weight " + shape_str(weight.shape()) +
                         " incompatible with input " +
                         shape_str(input.shape()));
    const std::size_t n_out = weight.shape()[0], n_in = weight.shape()[1];
    if (bias.defined() && bias.shape() != Shape{n_out})
        throw ShapeError("linear: bias shape " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(n_out));
    auto xv = input.data();
    auto wv = weight.data();
    std::vector<double> out(n_out, 0.0);
    for (std::size_t j = 0; j < n_out; ++j) {
        double acc = bias.defined() ? bias[j] : 0.0;
        for (std::size_t i = 0; i < n_in; ++i) acc += wv[j * n_in + i] * xv[i];
        out[j] = acc;
    }
    Tensor px = input, pw = weight, pb = bias;
    std::vector<Tensor> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    return OpBuilder::make(
        {n_out}, std::move(out), std::move(parents),
        [px, pw, pb, n_out, n_in](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto xv = px.data();
            auto wv = pw.data();
            if (px.requires_grad()) {
                std::vector<double> d(n_in, 0.0);
                for (std::size_t j = 0; j < n_out; ++j)
                    for (std::size_t i = 0; i < n_in; ++i)
                        d[i] += g[j] * wv[j * n_in + i];
                accumulate_grad(px, d);
            }
            if (pw.requires_grad()) {
                std::vector<double> d(n_out * n_in, 0.0);
                for (std::size_t j = 0; j < n_out; ++j)
                    for (std::size_t i = 0; i < n_in; ++i)
                        d[j * n_in + i] = g[j] * xv[i];
                accumulate_grad(pw, d);
            }
            if (pb.defined() && pb.requires_grad()) accumulate_grad(pb, g);
        });
}

Tensor global_avg_pool(const Tensor& x) {
    check_chw(x, "global_avg_pool");
    const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
    const double inv = 1.0 / static_cast<double>(plane);
    auto xv = x.data();
    std::vector<double> out(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += xv[ch * plane + p];
        out[ch] = acc * inv;
    }
    Tensor px = x;
    return OpBuilder::make({c}, std::move(out), {x},
                           [px, c, plane, inv](const auto& node) mutable {
                               Grad g = OpBuilder::node_grad(node);
                               std::vector<double> d(c * plane);
                               for (std::size_t ch = 0; ch < c; ++ch)
                                   for (std::size_t p = 0; p < plane; ++p)
                                       d[ch * plane + p] = g[ch] * inv;
                               accumulate_grad(px, d);
                           });
}

Tensor spatial_pool_pair(const Tensor& x) {
    check_chw(x, "spatial_pool_pair");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t plane = h * w;
    auto xv = x.data();
    std::vector<double> out(2 * plane);
    std::vector<std::size_t> argmax(plane);
    const double invc = 1.0 / static_cast<double>(c);
    for (std::size_t p = 0; p < plane; ++p) {
        double acc = 0.0;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double v = xv[ch * plane + p];
            acc += v;
            if (v > best) {
                best = v;
                bi = ch;
            }
        }
        out[p] = acc * invc;
        out[plane + p] = best;
        argmax[p] = bi;
    }
    Tensor px = x;
    return OpBuilder::make(
        {2, h, w}, std::move(out), {x},
        [px, c, plane, invc, argmax](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            std::vector<double> d(c * plane, 0.0);
            for (std::size_t p = 0; p < plane; ++p) {
                for (std::size_t ch = 0; ch < c; ++ch)
                    d[ch * plane + p] += g[p] * invc;
                d[argmax[p] * plane + p] += g[plane + p];
            }
            accumulate_grad(px, d);
        });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t h = parts[0].shape()[1], w = parts[0].shape()[2];
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        check_chw(p, "concat_channels");
        if (p.shape()[1] != h || p.shape()[2] != w)
            throw ShapeError("concat_channels: spatial mismatch " +
                             shape_str(p.shape()));
        total += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(total * h * w);
    for (const Tensor& p : parts)
        out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<Tensor> captured = parts;
    return OpBuilder::make(
        {total, h, w}, std::move(out), parts,
        [captured](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            std::size_t off = 0;
            for (Tensor& p : captured) {
                if (p.requires_grad())
                    accumulate_grad(p, g.subspan(off, p.size()));
                off += p.size();
            }
        });
}

Tensor scale_channels(const Tensor& x, const Tensor& v) {
    check_chw(x, "scale_channels");
    const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
    if (v.shape() != Shape{c})
        throw ShapeError("scale_channels: weight " + shape_str(v.shape()) +
                         " does not match " + std::to_string(c) + " channels");
    auto xv = x.data();
    auto vv = v.data();
    std::vector<double> out(xv.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p)
            out[ch * plane + p] = xv[ch * plane + p] * vv[ch];
    Tensor px = x, pv = v;
    return OpBuilder::make(
        x.shape(), std::move(out), {x, v},
        [px, pv, c, plane](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto xv = px.data();
            auto vv = pv.data();
            if (px.requires_grad()) {
                std::vector<double> d(xv.size());
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < plane; ++p)
                        d[ch * plane + p] = g[ch * plane + p] * vv[ch];
                accumulate_grad(px, d);
            }
            if (pv.requires_grad()) {
                std::vector<double> d(c, 0.0);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < plane; ++p)
                        d[ch] += g[ch * plane + p] * xv[ch * plane + p];
                accumulate_grad(pv, d);
            }
        });
}

Tensor scale_pixels(const Tensor& x, const Tensor& m) {
    check_chw(x, "scale_pixels");
    check_chw(m, "scale_pixels");
    const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
    if (m.shape()[0] != 1 || m.shape()[1] != x.shape()[1] ||
        m.shape()[2] != x.shape()[2])
        throw ShapeError("scale_pixels: map " + shape_str(m.shape()) +
                         " does not match " + shape_str(x.shape()));
    auto xv = x.data();
    auto mv = m.data();
    std::vector<double> out(xv.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p)
            out[ch * plane + p] = xv[ch * plane + p] * mv[p];
    Tensor px = x, pm = m;
    return OpBuilder::make(
        x.shape(), std::move(out), {x, m},
        [px, pm, c, plane](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            auto xv = px.data();
            auto mv = pm.data();
            if (px.requires_grad()) {
                std::vector<double> d(xv.size());
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < plane; ++p)
                        d[ch * plane + p] = g[ch * plane + p] * mv[p];
                accumulate_grad(px, d);
            }
            if (pm.requires_grad()) {
                std::vector<double> d(plane, 0.0);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < plane; ++p)
                        d[p] += g[ch * plane + p] * xv[ch * plane + p];
                accumulate_grad(pm, d);
            }
        });
}

Tensor add_plane(const Tensor& x, const Tensor& p) {
    check_chw(x, "add_plane");
    check_chw(p, "add_plane");
    const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
    if (p.shape()[0] != 1 || p.shape()[1] != x.shape()[1] ||
        p.shape()[2] != x.shape()[2])
        throw ShapeError("add_plane: plane " + shape_str(p.shape()) +
                         " does not match " + shape_str(x.shape()));
    auto xv = x.data();
    auto pv = p.data();
    std::vector<double> out(xv.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out[ch * plane + i] = xv[ch * plane + i] + pv[i];
    Tensor px = x, pp = p;
    return OpBuilder::make(
        x.shape(), std::move(out), {x, p},
        [px, pp, c, plane](const auto& node) mutable {
            Grad g = OpBuilder::node_grad(node);
            if (px.requires_grad()) accumulate_grad(px, g);
            if (pp.requires_grad()) {
                std::vector<double> d(plane, 0.0);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < plane; ++i)
                        d[i] += g[ch * plane + i];
                accumulate_grad(pp, d);
            }
        });
}

bool all_finite(const Tensor& x) {
    for (double v : x.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace fusion
