#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xsrn/tensor.hpp"

namespace xsrn {

// 8-bit raster, row-major, interleaved samples. channels is 1 or 3.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Same layout with float samples, nominally in [0,255]. Intermediate operator
// outputs (gradient maps) may leave that range.
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

ImageBuffer make_image(int width, int height, int channels, std::uint8_t fill = 0);
FloatImage make_float_image(int width, int height, int channels, float fill = 0.f);

// PNG I/O. 8-bit RGB or grayscale only; palette images are expanded to RGB,
// alpha is stripped, 16-bit depth is rejected.
ImageBuffer load_png(const std::string& path);
void save_png(const ImageBuffer& img, const std::string& path);

FloatImage to_float(const ImageBuffer& img);
ImageBuffer to_u8(const FloatImage& img);  // clips to [0,255], rounds to nearest

// Cubic-convolution resampling with the Matlab imresize conventions: kernel
// parameter a = -0.5, output size ceil(in * scale), and, when downscaling with
// antialias, kernel support widened by 1/scale. Borders clamp to edge.
FloatImage bicubic_resize(const FloatImage& img, double scale, bool antialias);

// Separable 7x7 Gaussian, kernel normalized to sum 1, clamp-to-edge borders.
FloatImage gaussian_blur_7x7(const FloatImage& img, double sigma);

// Raw 3x3 Sobel responses (single channel input), clamp-to-edge borders.
std::pair<FloatImage, FloatImage> sobel_gradients(const FloatImage& gray);

// min(sqrt(gx^2+gy^2), 255).
FloatImage sobel_magnitude(const FloatImage& gray);

// ITU-R BT.601 studio-swing luma: Y = 16 + (65.481 R + 128.553 G + 24.966 B)/255.
FloatImage rgb_to_y(const FloatImage& rgb);

ImageBuffer center_crop_to_multiple(const ImageBuffer& img, int multiple);
ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h);
ImageBuffer hflip(const ImageBuffer& img);
ImageBuffer rotate90(const ImageBuffer& img);  // counter-clockwise

// Bridges to the network's value range: tensors are [1,C,H,W] in [0,1].
Tensor<float> image_to_tensor(const FloatImage& img);
FloatImage tensor_to_image(const Tensor<float>& t);

}  // namespace xsrn
