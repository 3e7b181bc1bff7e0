#pragma once

// Minimal grayscale PNG codec on top of libpng: 8- and 16-bit single-channel
// reads/writes plus 8-bit RGB writes for overlays. PNG stores 16-bit samples
// big-endian; byte order is swapped on little-endian hosts.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "arpipe/errors.hpp"

namespace arpipe {

struct GrayImage {
    int width = 0;
    int height = 0;
    int bit_depth = 8;  // 8 or 16
    std::vector<std::uint16_t> pixels;  // row-major, one sample per pixel
};

namespace detail {

struct FileHandle {
    std::FILE* fp = nullptr;
    explicit FileHandle(const std::filesystem::path& path, const char* mode)
        : fp(std::fopen(path.string().c_str(), mode)) {}
    ~FileHandle() {
        if (fp) std::fclose(fp);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace detail

inline GrayImage read_gray_png(const std::filesystem::path& path) {
    detail::FileHandle file(path, "rb");
    if (!file.fp) throw IoError("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: failed to create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: failed to create info struct");
    }
    std::vector<png_bytep> row_ptrs;
    GrayImage img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path.string());
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);

    int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY || (bit_depth != 8 && bit_depth != 16)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError(path.string() + " is not an 8- or 16-bit grayscale PNG");
    }
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = bit_depth;
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);

    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    std::vector<std::uint8_t> raw8;
    row_ptrs.resize(img.height);
    if (bit_depth == 16) {
        for (int y = 0; y < img.height; ++y)
            row_ptrs[y] = reinterpret_cast<png_bytep>(img.pixels.data() +
                                                      static_cast<std::size_t>(y) * img.width);
    } else {
        raw8.resize(img.pixels.size());
        for (int y = 0; y < img.height; ++y)
            row_ptrs[y] = raw8.data() + static_cast<std::size_t>(y) * img.width;
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    if (bit_depth == 8)
        for (std::size_t i = 0; i < raw8.size(); ++i) img.pixels[i] = raw8[i];
    return img;
}

namespace detail {

inline void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
                      int color_type, const std::vector<png_bytep>& rows) {
    FileHandle file(path, "wb");
    if (!file.fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: failed to create write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng: failed to create info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode " + path.string());
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_gray_png8(const std::filesystem::path& path, int width, int height,
                            const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ValidationError("write_gray_png8: buffer size mismatch");
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width);
    detail::write_png(path, width, height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

inline void write_gray_png16(const std::filesystem::path& path, int width, int height,
                             const std::vector<std::uint16_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ValidationError("write_gray_png16: buffer size mismatch");
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = reinterpret_cast<png_bytep>(
            const_cast<std::uint16_t*>(pixels.data() + static_cast<std::size_t>(y) * width));
    detail::write_png(path, width, height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

inline void write_rgb_png8(const std::filesystem::path& path, int width, int height,
                           const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw ValidationError("write_rgb_png8: buffer size mismatch");
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3);
    detail::write_png(path, width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace arpipe
