#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xsrn::oracle {

template <typename T>
Tensor<T> conv2d_loops(const Tensor<T>& input, const Tensor<T>& weight, const std::vector<T>& bias,
                       int pad_h, int pad_w) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    Tensor<T> out(Shape4{is.n, ws.n, is.h, is.w});
    for (int n = 0; n < is.n; ++n)
        for (int o = 0; o < ws.n; ++o)
            for (int y = 0; y < is.h; ++y)
                for (int x = 0; x < is.w; ++x) {
                    T acc = bias.empty() ? T(0) : bias[o];
                    for (int i = 0; i < ws.c; ++i)
                        for (int dy = 0; dy < ws.h; ++dy)
                            for (int dx = 0; dx < ws.w; ++dx) {
                                const int sy = y + dy - pad_h;
                                const int sx = x + dx - pad_w;
                                if (sy < 0 || sy >= is.h || sx < 0 || sx >= is.w) continue;
                                acc += weight.at(o, i, dy, dx) * input.at(n, i, sy, sx);
                            }
                    out.at(n, o, y, x) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> depthwise_loops(const Tensor<T>& input, const Tensor<T>& weight, const std::vector<T>& bias,
                          int pad_h, int pad_w) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    Tensor<T> out(is);
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int y = 0; y < is.h; ++y)
                for (int x = 0; x < is.w; ++x) {
                    T acc = bias.empty() ? T(0) : bias[c];
                    for (int dy = 0; dy < ws.h; ++dy)
                        for (int dx = 0; dx < ws.w; ++dx) {
                            const int sy = y + dy - pad_h;
                            const int sx = x + dx - pad_w;
                            if (sy < 0 || sy >= is.h || sx < 0 || sx >= is.w) continue;
                            acc += weight.at(c, 0, dy, dx) * input.at(n, c, sy, sx);
                        }
                    out.at(n, c, y, x) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int r) {
    const Shape4 is = input.shape();
    if (is.h % r != 0 || is.w % r != 0)
        throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by r");
    Tensor<T> out(Shape4{is.n, is.c * r * r, is.h / r, is.w / r});
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int y = 0; y < is.h; ++y)
                for (int x = 0; x < is.w; ++x)
                    out.at(n, c * r * r + (y % r) * r + (x % r), y / r, x / r) = input.at(n, c, y, x);
    return out;
}

double psnr_direct(const FloatImage& a, const FloatImage& b) {
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_direct(const FloatImage& a, const FloatImage& b) {
    const int win = 11;
    const double sigma = 1.5;
    const double c1 = std::pow(0.01 * 255.0, 2.0);
    const double c2 = std::pow(0.03 * 255.0, 2.0);
    std::vector<double> w(static_cast<std::size_t>(win) * win);
    double wsum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - (win - 1) / 2.0;
            const double dx = j - (win - 1) / 2.0;
            w[static_cast<std::size_t>(i) * win + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            wsum += w[static_cast<std::size_t>(i) * win + j];
        }
    for (double& v : w) v /= wsum;

    double total = 0.0;
    int count = 0;
    for (int oy = 0; oy + win <= a.height; ++oy)
        for (int ox = 0; ox + win <= a.width; ++ox) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wi = w[static_cast<std::size_t>(i) * win + j];
                    mx += wi * a.at(oy + i, ox + j, 0);
                    my += wi * b.at(oy + i, ox + j, 0);
                }
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wi = w[static_cast<std::size_t>(i) * win + j];
                    sxx += wi * std::pow(a.at(oy + i, ox + j, 0) - mx, 2.0);
                    syy += wi * std::pow(b.at(oy + i, ox + j, 0) - my, 2.0);
                    sxy += wi * (a.at(oy + i, ox + j, 0) - mx) * (b.at(oy + i, ox + j, 0) - my);
                }
            total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                     ((mx * mx + my * my + c1) * (sxx + syy + c2));
            ++count;
        }
    return total / count;
}

FloatImage gaussian_blur_full(const FloatImage& img, int ksize, double sigma) {
    const int half = ksize / 2;
    std::vector<double> k(static_cast<std::size_t>(ksize) * ksize);
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i)
        for (int j = 0; j < ksize; ++j) {
            const double dy = i - half, dx = j - half;
            k[static_cast<std::size_t>(i) * ksize + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += k[static_cast<std::size_t>(i) * ksize + j];
        }
    for (double& v : k) v /= sum;

    FloatImage out = make_float_image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = 0; i < ksize; ++i)
                    for (int j = 0; j < ksize; ++j) {
                        const int sy = std::clamp(y + i - half, 0, img.height - 1);
                        const int sx = std::clamp(x + j - half, 0, img.width - 1);
                        acc += k[static_cast<std::size_t>(i) * ksize + j] * img.at(sy, sx, c);
                    }
                out.at(y, x, c) = static_cast<float>(acc);
            }
    return out;
}

FloatImage sobel_magnitude_loops(const FloatImage& gray) {
    static const double gx_k[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const double gy_k[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    FloatImage out = make_float_image(gray.width, gray.height, 1);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) {
            double gx = 0, gy = 0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const int sy = std::clamp(y + i - 1, 0, gray.height - 1);
                    const int sx = std::clamp(x + j - 1, 0, gray.width - 1);
                    gx += gx_k[i][j] * gray.at(sy, sx, 0);
                    gy += gy_k[i][j] * gray.at(sy, sx, 0);
                }
            out.at(y, x, 0) = static_cast<float>(std::min(255.0, std::sqrt(gx * gx + gy * gy)));
        }
    return out;
}

std::vector<double> cubic_weights_at(double u, int in_len, double scale, bool antialias,
                                     std::vector<int>* indices) {
    auto kernel = [](double x) {
        const double ax = std::abs(x);
        if (ax <= 1.0) return 1.5 * ax * ax * ax - 2.5 * ax * ax + 1.0;
        if (ax < 2.0) return -0.5 * ax * ax * ax + 2.5 * ax * ax - 4.0 * ax + 2.0;
        return 0.0;
    };
    const double ks = (antialias && scale < 1.0) ? scale : 1.0;
    const double width = 4.0 / ks;
    const int first = static_cast<int>(std::floor(u - width / 2.0));
    const int taps = static_cast<int>(std::ceil(width)) + 2;
    std::vector<double> w(taps);
    double sum = 0.0;
    for (int k = 0; k < taps; ++k) {
        w[k] = ks * kernel(ks * (u - (first + k)));
        sum += w[k];
    }
    for (double& v : w) v /= sum;
    if (indices) {
        indices->resize(taps);
        for (int k = 0; k < taps; ++k) (*indices)[k] = std::clamp(first + k, 0, in_len - 1);
    }
    return w;
}

template Tensor<float> conv2d_loops<float>(const Tensor<float>&, const Tensor<float>&,
                                           const std::vector<float>&, int, int);
template Tensor<double> conv2d_loops<double>(const Tensor<double>&, const Tensor<double>&,
                                             const std::vector<double>&, int, int);
template Tensor<float> depthwise_loops<float>(const Tensor<float>&, const Tensor<float>&,
                                              const std::vector<float>&, int, int);
template Tensor<double> depthwise_loops<double>(const Tensor<double>&, const Tensor<double>&,
                                                const std::vector<double>&, int, int);
template Tensor<float> pixel_unshuffle<float>(const Tensor<float>&, int);
template Tensor<double> pixel_unshuffle<double>(const Tensor<double>&, int);

}  // namespace xsrn::oracle
