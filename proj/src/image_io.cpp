#include "fusion/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace fusion {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw ImageIoError("cannot open image: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 ||
        png_sig_cmp(header, 0, 8))
        throw ImageIoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    if (!png) throw ImageIoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageIoError("libpng init failed");
    }
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("failed to decode PNG: " + path);
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    pixels.resize(static_cast<std::size_t>(h) * w * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> data(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            data[c * plane + i] = pixels[i * 3 + c] / 255.0;
    return Tensor::from({3, h, w}, std::move(data));
}

void write_png(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.shape()[0] != 3)
        throw ShapeError("write_png: expected [3,H,W], got " +
                         shape_str(image.shape()));
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = h * w;
    auto v = image.data();
    std::vector<png_byte> pixels(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            pixels[i * 3 + c] = static_cast<png_byte>(
                std::lround(std::clamp(v[c * plane + i], 0.0, 1.0) * 255.0));

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw ImageIoError("cannot write image: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    if (!png) throw ImageIoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageIoError("libpng init failed");
    }
    std::vector<png_bytep> rows(h);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed to encode PNG: " + path);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w),
                 static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);  // pinned for byte-reproducibility
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y)
        rows[y] = pixels.data() + y * w * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h,
                       std::size_t out_w) {
    if (image.rank() != 3 || image.shape()[0] != 3)
        throw ShapeError("resize: expected [3,H,W], got " +
                         shape_str(image.shape()));
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize: extents must be positive");
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    if (h == out_h && w == out_w) return image.detach();

    auto v = image.data();
    const std::size_t plane = h * w;
    const std::size_t out_plane = out_h * out_w;
    std::vector<double> out(3 * out_plane);
    // pixel-center alignment
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(h - 1));
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
            std::size_t y0 = static_cast<std::size_t>(fy);
            std::size_t x0 = static_cast<std::size_t>(fx);
            std::size_t y1 = std::min(y0 + 1, h - 1);
            std::size_t x1 = std::min(x0 + 1, w - 1);
            double wy = fy - y0, wx = fx - x0;
            for (std::size_t c = 0; c < 3; ++c) {
                double v00 = v[c * plane + y0 * w + x0];
                double v01 = v[c * plane + y0 * w + x1];
                double v10 = v[c * plane + y1 * w + x0];
                double v11 = v[c * plane + y1 * w + x1];
                double top = v00 + (v01 - v00) * wx;
                double bot = v10 + (v11 - v10) * wx;
                out[c * out_plane + y * out_w + x] = top + (bot - top) * wy;
            }
        }
    return Tensor::from({3, out_h, out_w}, std::move(out));
}

}  // namespace fusion
