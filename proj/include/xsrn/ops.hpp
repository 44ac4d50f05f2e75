#pragma once

#include <vector>

#include "xsrn/tensor.hpp"

namespace xsrn {

// Differentiable tensor operations. Shapes are NCHW throughout; convolutions
// are stride-1, zero-padded, same-size (the network never strides). Every op
// records its backward rule when a Tape<T> is active and an argument is
// tracked. Reduction orders are fixed so repeated runs are bit-identical.

// weight [Cout,Cin,kh,kw], bias [1,Cout,1,1] or undefined for no bias,
// pad must be ((kh-1)/2, (kw-1)/2); kh, kw odd.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int pad_h, int pad_w);

// Per-channel convolution: weight [C,1,kh,kw], bias [1,C,1,1] or undefined.
// Channel i of the output depends only on channel i of the input.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int pad_h, int pad_w);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope);  // slope in (0,1)

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);  // [N,C,H,W] -> [N,C,1,1]

// input [N,Cin,1,1], weight [Cout,Cin,1,1], bias [1,Cout,1,1] or undefined.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// [N,C*r^2,H,W] -> [N,C,rH,rW]; out[n,c,r*y+dy,r*x+dx] = in[n,c*r^2+dy*r+dx,y,x].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int r);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x [N,C,H,W] * gate [N,C,1,1], broadcast over spatial positions.
template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& gate);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& input, const std::vector<int>& sizes);

// Scalar-producing reductions.
template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);  // sum(a*b), same shapes

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);  // mean |pred-target|

template <typename T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target);  // mean (pred-target)^2

template <typename T>
bool all_finite(const Tensor<T>& t);

}  // namespace xsrn
