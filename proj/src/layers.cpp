#include "xsrn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace xsrn {

const char* conv_variant_name(ConvVariant v) {
    switch (v) {
        case ConvVariant::kCross: return "cross";
        case ConvVariant::kSeq: return "seq";
        case ConvVariant::kVanilla: return "vanilla";
    }
    return "?";
}

ConvVariant conv_variant_from_name(const std::string& name) {
    if (name == "cross") return ConvVariant::kCross;
    if (name == "seq") return ConvVariant::kSeq;
    if (name == "vanilla") return ConvVariant::kVanilla;
    throw std::invalid_argument("unknown conv variant '" + name + "' (expected cross|seq|vanilla)");
}

namespace {

// Fan-in scaled uniform fill: bound = gain * sqrt(6 / fan_in).
template <typename T>
void fill_uniform(Tensor<T>& t, int fan_in, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(6.0 / fan_in);
    for (T& v : t.mutable_values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

template <typename T>
void Conv2dLayer<T>::init_uniform(Rng& rng, double gain) {
    const Shape4 s = weight.shape();
    fill_uniform(weight, s.c * s.h * s.w, rng, gain);
}

template <typename T>
SpatialConv<T>::SpatialConv(ConvVariant variant, int cin, int cout, int m)
    : variant(variant), m(m), bias(Shape4{1, cout, 1, 1}) {
    if (m % 2 == 0) throw std::invalid_argument("SpatialConv: kernel extent must be odd");
    if (variant == ConvVariant::kVanilla) {
        w_full = Tensor<T>(Shape4{cout, cin, m, m});
    } else {
        w_row = Tensor<T>(Shape4{cout, cin, 1, m});
        w_col = Tensor<T>(Shape4{cout, cin, m, 1});
    }
}

template <typename T>
Tensor<T> SpatialConv<T>::forward(const Tensor<T>& x) const {
    const int half = (m - 1) / 2;
    switch (variant) {
        case ConvVariant::kCross:
            // Two perpendicular banks applied in parallel, summed, one bias.
            return add(conv2d(x, w_row, bias, 0, half), conv2d(x, w_col, Tensor<T>(), half, 0));
        case ConvVariant::kSeq:
            return conv2d(conv2d(x, w_row, Tensor<T>(), 0, half), w_col, bias, half, 0);
        case ConvVariant::kVanilla:
            return conv2d(x, w_full, bias, half, half);
    }
    throw std::logic_error("SpatialConv: bad variant");
}

template <typename T>
void SpatialConv<T>::visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
    if (variant == ConvVariant::kVanilla) {
        fn(prefix + ".w", w_full);
    } else {
        fn(prefix + ".w_row", w_row);
        fn(prefix + ".w_col", w_col);
    }
    fn(prefix + ".b", bias);
}

template <typename T>
void SpatialConv<T>::init_uniform(Rng& rng, double gain) {
    if (variant == ConvVariant::kVanilla) {
        fill_uniform(w_full, w_full.shape().c * m * m, rng, gain);
    } else {
        fill_uniform(w_row, w_row.shape().c * m, rng, gain);
        fill_uniform(w_col, w_col.shape().c * m, rng, gain);
    }
}

template <typename T>
Tensor<T> SpatialConv<T>::materialized_cross_kernel() const {
    if (variant != ConvVariant::kCross)
        throw std::logic_error("materialized_cross_kernel: layer is not a cross convolution");
    const int cout = w_row.shape().n, cin = w_row.shape().c, half = (m - 1) / 2;
    Tensor<T> k(Shape4{cout, cin, m, m});
    for (int o = 0; o < cout; ++o)
        for (int i = 0; i < cin; ++i) {
            for (int x = 0; x < m; ++x) k.at(o, i, half, x) += w_row.at(o, i, 0, x);
            for (int y = 0; y < m; ++y) k.at(o, i, y, half) += w_col.at(o, i, y, 0);
        }
    return k;
}

template <typename T>
ChannelAttention<T>::ChannelAttention(int channels, int reduction_ratio)
    : channels(channels),
      reduced(std::max(1, channels / reduction_ratio)),
      fc1_w(Shape4{std::max(1, channels / reduction_ratio), channels, 1, 1}),
      fc1_b(Shape4{1, std::max(1, channels / reduction_ratio), 1, 1}),
      fc2_w(Shape4{channels, std::max(1, channels / reduction_ratio), 1, 1}),
      fc2_b(Shape4{1, channels, 1, 1}) {}

template <typename T>
void ChannelAttention<T>::init_uniform(Rng& rng, double gain) {
    fill_uniform(fc1_w, channels, rng, gain);
    fill_uniform(fc2_w, reduced, rng, gain);
}

template <typename T>
void FeatureNorm<T>::init_uniform(Rng& rng, double gain) {
    const Shape4 s = weight.shape();
    fill_uniform(weight, s.h * s.w, rng, gain);
}

std::vector<double> singular_values(std::vector<double> a, int rows, int cols) {
    if (rows <= 0 || cols <= 0 || a.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("singular_values: bad matrix dimensions");
    // One-sided Jacobi on columns of A: rotate column pairs until all are
    // mutually orthogonal; singular values are the final column norms.
    auto col_dot = [&](int p, int q) {
        double s = 0;
        for (int r = 0; r < rows; ++r) s += a[static_cast<std::size_t>(r) * cols + p] * a[static_cast<std::size_t>(r) * cols + q];
        return s;
    };
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0;
        for (int p = 0; p < cols - 1; ++p) {
            for (int q = p + 1; q < cols; ++q) {
                const double apq = col_dot(p, q);
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                off = std::max(off, std::abs(apq));
                if (std::abs(apq) < 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < rows; ++r) {
                    double& arp = a[static_cast<std::size_t>(r) * cols + p];
                    double& arq = a[static_cast<std::size_t>(r) * cols + q];
                    const double vp = arp, vq = arq;
                    arp = c * vp - s * vq;
                    arq = s * vp + c * vq;
                }
            }
        }
        if (off < 1e-14) break;
    }
    std::vector<double> sv(cols);
    for (int p = 0; p < cols; ++p) sv[p] = std::sqrt(std::max(0.0, col_dot(p, p)));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

#define XSRN_INSTANTIATE_LAYERS(T)         \
    template struct Conv2dLayer<T>;        \
    template struct SpatialConv<T>;        \
    template struct ChannelAttention<T>;   \
    template struct FeatureNorm<T>;

XSRN_INSTANTIATE_LAYERS(float)
XSRN_INSTANTIATE_LAYERS(double)

#undef XSRN_INSTANTIATE_LAYERS

}  // namespace xsrn
