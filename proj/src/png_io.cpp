#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

#include "xsrn/image.hpp"

namespace xsrn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
    (void)png;
    throw std::runtime_error(std::string("png: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

ImageBuffer load_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw std::runtime_error("load_png: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw std::runtime_error("load_png: " + path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_handler, png_warning_handler);
    if (!png) throw std::runtime_error("load_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("load_png: out of memory");
    }

    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        const int bit_depth = png_get_bit_depth(png, info);
        const int color_type = png_get_color_type(png, info);
        if (bit_depth == 16)
            throw std::runtime_error("load_png: " + path + ": unsupported bit depth 16 (8-bit only)");

        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);

        const int width = static_cast<int>(png_get_image_width(png, info));
        const int height = static_cast<int>(png_get_image_height(png, info));
        const int channels = png_get_channels(png, info);
        if (channels != 1 && channels != 3)
            throw std::runtime_error("load_png: " + path + ": unsupported channel count " +
                                     std::to_string(channels));

        ImageBuffer img = make_image(width, height, channels);
        std::vector<png_bytep> rows(height);
        for (int y = 0; y < height; ++y)
            rows[y] = img.data.data() + static_cast<std::size_t>(y) * width * channels;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);
        return img;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void save_png(const ImageBuffer& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_png: image must have 1 or 3 channels");
    if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
        throw std::invalid_argument("save_png: data length does not match dimensions");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw std::runtime_error("save_png: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_handler, png_warning_handler);
    if (!png) throw std::runtime_error("save_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("save_png: out of memory");
    }

    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, img.width, img.height, 8,
                     img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < img.height; ++y)
            png_write_row(png, const_cast<png_bytep>(
                                   img.data.data() + static_cast<std::size_t>(y) * img.width * img.channels));
        png_write_end(png, info);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

}  // namespace xsrn
