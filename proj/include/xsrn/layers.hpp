#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xsrn/ops.hpp"
#include "xsrn/rng.hpp"
#include "xsrn/tensor.hpp"

namespace xsrn {

template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&)>;

enum class ConvVariant { kCross, kSeq, kVanilla };

const char* conv_variant_name(ConvVariant v);
ConvVariant conv_variant_from_name(const std::string& name);

// Plain stride-1 zero-padded convolution layer (head, fuse, padding block,
// restoration head all use this).
template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;  // [Cout,Cin,kh,kw]
    Tensor<T> bias;    // [1,Cout,1,1]

    Conv2dLayer(int cin, int cout, int kh, int kw)
        : weight(Shape4{cout, cin, kh, kw}), bias(Shape4{1, cout, 1, 1}) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, weight, bias, (weight.shape().h - 1) / 2, (weight.shape().w - 1) / 2);
    }

    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".w", weight);
        fn(prefix + ".b", bias);
    }
    void init_uniform(Rng& rng, double gain);
};

// One convolution of a cross convolution block, in one of three designs:
//   kCross:   k_{1xm} (X) x + k_{mx1} (X) x + b   (parallel, one shared bias)
//   kSeq:     k_{mx1} (X) (k_{1xm} (X) x) + b     (separable composition)
//   kVanilla: k_{mxm} (X) x + b
// Cross and Seq hold identical parameter budgets: 2*m*Cin*Cout + Cout.
template <typename T>
struct SpatialConv {
    ConvVariant variant;
    int m;
    Tensor<T> w_row;   // [Cout,Cin,1,m] (cross/seq)
    Tensor<T> w_col;   // [Cout,Cin,m,1] (cross/seq)
    Tensor<T> w_full;  // [Cout,Cin,m,m] (vanilla)
    Tensor<T> bias;    // [1,Cout,1,1]

    SpatialConv(ConvVariant variant, int cin, int cout, int m);

    Tensor<T> forward(const Tensor<T>& x) const;

    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn);
    void init_uniform(Rng& rng, double gain);

    // Dense m x m bank equivalent to the cross design: row filter lands on the
    // centre row, column filter on the centre column, centre cell takes both.
    Tensor<T> materialized_cross_kernel() const;
};

// Squeeze-and-excite channel gate: GAP -> FC -> ReLU -> FC -> sigmoid,
// broadcast-multiplied back over the input.
template <typename T>
struct ChannelAttention {
    int channels;
    int reduced;
    Tensor<T> fc1_w, fc1_b;  // [Cr,C,1,1], [1,Cr,1,1]
    Tensor<T> fc2_w, fc2_b;  // [C,Cr,1,1], [1,C,1,1]

    ChannelAttention(int channels, int reduction_ratio);

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> g = global_avg_pool(x);
        g = fully_connected(g, fc1_w, fc1_b);
        g = relu(g);
        g = fully_connected(g, fc2_w, fc2_b);
        g = sigmoid(g);
        return mul_channelwise(x, g);
    }

    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".fc1.w", fc1_w);
        fn(prefix + ".fc1.b", fc1_b);
        fn(prefix + ".fc2.w", fc2_w);
        fn(prefix + ".fc2.b", fc2_b);
    }
    void init_uniform(Rng& rng, double gain);
};

// Per-channel spatial recalibration: depthwise conv + bias, added back onto
// the input. Channels never mix.
template <typename T>
struct FeatureNorm {
    Tensor<T> weight;  // [C,1,kf,kf]
    Tensor<T> bias;    // [1,C,1,1]

    FeatureNorm(int channels, int kf)
        : weight(Shape4{channels, 1, kf, kf}), bias(Shape4{1, channels, 1, 1}) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        const int kf = weight.shape().h;
        return add(depthwise_conv2d(x, weight, bias, (kf - 1) / 2, (kf - 1) / 2), x);
    }

    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".w", weight);
        fn(prefix + ".b", bias);
    }
    void init_uniform(Rng& rng, double gain);
};

// Singular values of a dense rows x cols matrix (row-major), descending.
// One-sided Jacobi; intended for the small m x m kernel rank checks.
std::vector<double> singular_values(std::vector<double> a, int rows, int cols);

}  // namespace xsrn
