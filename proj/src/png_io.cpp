#include "protomark/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "protomark/errors.hpp"

namespace protomark {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

} // namespace

GrayImage read_png_gray(const std::string& path, int* bit_depth_out) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open image file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for: " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng info init failed for: " + path);
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);

    // Normalize everything to 8- or 16-bit grayscale without alpha.
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    if (depth != 8 && depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG bit depth in " + path);
    }

    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    GrayImage img(static_cast<int>(h), static_cast<int>(w));
    const double denom = depth == 8 ? 255.0 : 65535.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = pixels.data() + y * stride;
        for (png_uint_32 x = 0; x < w; ++x) {
            double v;
            if (depth == 8) {
                v = row[x];
            } else {
                v = static_cast<double>((static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1]);
            }
            img.at(static_cast<int>(y), static_cast<int>(x)) = v / denom;
        }
    }
    if (bit_depth_out) *bit_depth_out = depth;
    return img;
}

void write_png_gray(const std::string& path, const GrayImage& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ConfigError("PNG bit depth must be 8 or 16, got " + std::to_string(bit_depth));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot create image file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for: " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng info init failed for: " + path);
    }
    std::vector<png_byte> rowbuf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);

    const double scale = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t stride = static_cast<std::size_t>(img.width) * (bit_depth / 8);
    rowbuf.resize(stride);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = img.at(y, x);
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            const unsigned q = static_cast<unsigned>(std::lround(v * scale));
            if (bit_depth == 8) {
                rowbuf[static_cast<std::size_t>(x)] = static_cast<png_byte>(q);
            } else {
                rowbuf[2 * static_cast<std::size_t>(x)] = static_cast<png_byte>(q >> 8);
                rowbuf[2 * static_cast<std::size_t>(x) + 1] = static_cast<png_byte>(q & 0xff);
            }
        }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

} // namespace protomark
