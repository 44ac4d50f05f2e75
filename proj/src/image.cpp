#include "xsrn/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xsrn {

ImageBuffer make_image(int width, int height, int channels, std::uint8_t fill) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
        throw std::invalid_argument("make_image: bad dimensions");
    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
    return img;
}

FloatImage make_float_image(int width, int height, int channels, float fill) {
    if (width <= 0 || height <= 0 || channels <= 0)
        throw std::invalid_argument("make_float_image: bad dimensions");
    FloatImage img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
    return img;
}

FloatImage to_float(const ImageBuffer& img) {
    FloatImage out = make_float_image(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i]);
    return out;
}

ImageBuffer to_u8(const FloatImage& img) {
    ImageBuffer out = make_image(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const float v = std::min(255.f, std::max(0.f, img.data[i]));
        out.data[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

namespace {

// Matlab's cubic convolution kernel, a = -0.5.
double cubic(double x) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return 1.5 * ax * ax * ax - 2.5 * ax * ax + 1.0;
    if (ax < 2.0) return -0.5 * ax * ax * ax + 2.5 * ax * ax - 4.0 * ax + 2.0;
    return 0.0;
}

struct Contribution {
    int first = 0;                 // first source index (clamped later)
    std::vector<double> weights;   // normalized to sum 1
};

// imresize-style per-output-pixel source weights along one dimension.
// Coordinates are 0-based; u is the continuous source position of output i.
std::vector<Contribution> make_contributions(int out_len, double scale, bool antialias) {
    const bool widen = antialias && scale < 1.0;
    const double kernel_scale = widen ? scale : 1.0;
    const double kernel_width = 4.0 / kernel_scale;
    std::vector<Contribution> out(out_len);
    for (int i = 0; i < out_len; ++i) {
        const double u = (i + 0.5) / scale - 0.5;
        const int taps = static_cast<int>(std::ceil(kernel_width)) + 2;
        Contribution c;
        c.first = static_cast<int>(std::floor(u - kernel_width / 2.0));
        c.weights.resize(taps);
        double sum = 0.0;
        for (int k = 0; k < taps; ++k) {
            const double w = kernel_scale * cubic(kernel_scale * (u - (c.first + k)));
            c.weights[k] = w;
            sum += w;
        }
        for (double& w : c.weights) w /= sum;
        out[i] = std::move(c);
    }
    return out;
}

FloatImage resize_vertical(const FloatImage& img, const std::vector<Contribution>& rows) {
    FloatImage out = make_float_image(img.width, static_cast<int>(rows.size()), img.channels);
    for (int y = 0; y < out.height; ++y) {
        const Contribution& c = rows[y];
        for (int x = 0; x < out.width; ++x)
            for (int ch = 0; ch < out.channels; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < c.weights.size(); ++k) {
                    const int sy = std::clamp(c.first + static_cast<int>(k), 0, img.height - 1);
                    acc += c.weights[k] * img.at(sy, x, ch);
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
    }
    return out;
}

FloatImage resize_horizontal(const FloatImage& img, const std::vector<Contribution>& cols) {
    FloatImage out = make_float_image(static_cast<int>(cols.size()), img.height, img.channels);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const Contribution& c = cols[x];
            for (int ch = 0; ch < out.channels; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < c.weights.size(); ++k) {
                    const int sx = std::clamp(c.first + static_cast<int>(k), 0, img.width - 1);
                    acc += c.weights[k] * img.at(y, sx, ch);
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

}  // namespace

FloatImage bicubic_resize(const FloatImage& img, double scale, bool antialias) {
    if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
    const int out_h = static_cast<int>(std::ceil(img.height * scale));
    const int out_w = static_cast<int>(std::ceil(img.width * scale));
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("bicubic_resize: degenerate output size");
    FloatImage tmp = resize_vertical(img, make_contributions(out_h, scale, antialias));
    return resize_horizontal(tmp, make_contributions(out_w, scale, antialias));
}

FloatImage gaussian_blur_7x7(const FloatImage& img, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur_7x7: sigma must be positive");
    double k[7];
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double d = i - 3;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;

    FloatImage tmp = make_float_image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 7; ++i)
                    acc += k[i] * img.at(y, std::clamp(x + i - 3, 0, img.width - 1), c);
                tmp.at(y, x, c) = static_cast<float>(acc);
            }
    FloatImage out = make_float_image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 7; ++i)
                    acc += k[i] * tmp.at(std::clamp(y + i - 3, 0, img.height - 1), x, c);
                out.at(y, x, c) = static_cast<float>(acc);
            }
    return out;
}

std::pair<FloatImage, FloatImage> sobel_gradients(const FloatImage& gray) {
    if (gray.channels != 1)
        throw std::invalid_argument("sobel: input must be single-channel, got " +
                                    std::to_string(gray.channels));
    static const int gx_k[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int gy_k[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    FloatImage gx = make_float_image(gray.width, gray.height, 1);
    FloatImage gy = make_float_image(gray.width, gray.height, 1);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) {
            double ax = 0.0, ay = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const float v = gray.at(std::clamp(y + dy, 0, gray.height - 1),
                                            std::clamp(x + dx, 0, gray.width - 1), 0);
                    ax += gx_k[dy + 1][dx + 1] * v;
                    ay += gy_k[dy + 1][dx + 1] * v;
                }
            gx.at(y, x, 0) = static_cast<float>(ax);
            gy.at(y, x, 0) = static_cast<float>(ay);
        }
    return {std::move(gx), std::move(gy)};
}

FloatImage sobel_magnitude(const FloatImage& gray) {
    auto [gx, gy] = sobel_gradients(gray);
    FloatImage out = make_float_image(gray.width, gray.height, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::min(255.f, std::hypot(gx.data[i], gy.data[i]));
    return out;
}

FloatImage rgb_to_y(const FloatImage& rgb) {
    if (rgb.channels != 3)
        throw std::invalid_argument("rgb_to_y: input must have 3 channels, got " +
                                    std::to_string(rgb.channels));
    FloatImage out = make_float_image(rgb.width, rgb.height, 1);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x)
            out.at(y, x, 0) = static_cast<float>(
                16.0 + (65.481 * rgb.at(y, x, 0) + 128.553 * rgb.at(y, x, 1) + 24.966 * rgb.at(y, x, 2)) / 255.0);
    return out;
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > img.width || y0 + h > img.height)
        throw std::invalid_argument("crop: region outside image bounds");
    ImageBuffer out = make_image(w, h, img.channels);
    for (int y = 0; y < h; ++y)
        std::copy(img.data.begin() + (static_cast<std::size_t>(y0 + y) * img.width + x0) * img.channels,
                  img.data.begin() + (static_cast<std::size_t>(y0 + y) * img.width + x0 + w) * img.channels,
                  out.data.begin() + static_cast<std::size_t>(y) * w * img.channels);
    return out;
}

ImageBuffer center_crop_to_multiple(const ImageBuffer& img, int multiple) {
    if (multiple <= 0) throw std::invalid_argument("center_crop_to_multiple: bad multiple");
    const int w = (img.width / multiple) * multiple;
    const int h = (img.height / multiple) * multiple;
    if (w <= 0 || h <= 0)
        throw std::invalid_argument("center_crop_to_multiple: image smaller than the multiple");
    if (w == img.width && h == img.height) return img;
    return crop(img, (img.width - w) / 2, (img.height - h) / 2, w, h);
}

ImageBuffer hflip(const ImageBuffer& img) {
    ImageBuffer out = make_image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

ImageBuffer rotate90(const ImageBuffer& img) {
    ImageBuffer out = make_image(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(y, x, c);
    return out;
}

Tensor<float> image_to_tensor(const FloatImage& img) {
    Tensor<float> t(Shape4{1, img.channels, img.height, img.width});
    auto& v = t.mutable_values();
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                v[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
                    img.at(y, x, c) / 255.f;
    return t;
}

FloatImage tensor_to_image(const Tensor<float>& t) {
    const Shape4 s = t.shape();
    if (s.n != 1) throw std::invalid_argument("tensor_to_image: batch dimension must be 1");
    FloatImage img = make_float_image(s.w, s.h, s.c);
    const auto& v = t.values();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x)
                img.at(y, x, c) = v[(static_cast<std::size_t>(c) * s.h + y) * s.w + x] * 255.f;
    return img;
}

}  // namespace xsrn
