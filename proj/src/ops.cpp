#include "xsrn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace xsrn {

namespace {

template <typename T>
bool tracked(Tape<T>* tape, const Tensor<T>& t) {
    return t.defined() && tape->tracks(t);
}

template <typename T>
void ensure_grad(const std::shared_ptr<TensorNode<T>>& node) {
    if (node->grad.size() != node->values.size())
        node->grad.assign(node->values.size(), T(0));
}

template <typename T>
void check_conv_args(const Shape4& in, const Shape4& w, const Tensor<T>& bias,
                     int pad_h, int pad_w, const char* op) {
    if (w.h % 2 == 0 || w.w % 2 == 0)
        throw std::invalid_argument(std::string(op) + ": even kernel dimension " +
                                    std::to_string(w.h) + "x" + std::to_string(w.w));
    if (pad_h != (w.h - 1) / 2 || pad_w != (w.w - 1) / 2)
        throw std::invalid_argument(std::string(op) + ": padding must be ((kh-1)/2,(kw-1)/2) for same-size output");
    if (bias.defined() && bias.shape() != Shape4{1, w.n, 1, 1})
        throw std::invalid_argument(std::string(op) + ": bias shape " + bias.shape().str() +
                                    " does not match output channels " + std::to_string(w.n));
    (void)in;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int pad_h, int pad_w) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    if (ws.c != is.c)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(is.c) +
                                    " do not match weight's second dim " + std::to_string(ws.c));
    check_conv_args(is, ws, bias, pad_h, pad_w, "conv2d");

    const int N = is.n, Cin = is.c, H = is.h, W = is.w;
    const int Cout = ws.n, kh = ws.h, kw = ws.w;
    Tensor<T> out(Shape4{N, Cout, H, W});

    const T* in = input.values().data();
    const T* wv = weight.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    T* ov = out.mutable_values().data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    // Accumulation order per output element is fixed: Cin, then kh, then kw
    // innermost. Parallelism is over independent (n, co) output planes only,
    // so results are bit-identical for any thread count.
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
            T* op = ov + (static_cast<std::size_t>(n) * Cout + co) * plane;
            std::fill(op, op + plane, bv ? bv[co] : T(0));
            for (int ci = 0; ci < Cin; ++ci) {
                const T* ip = in + (static_cast<std::size_t>(n) * Cin + ci) * plane;
                const T* wp = wv + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                for (int dy = 0; dy < kh; ++dy) {
                    const int y0 = std::max(0, pad_h - dy);
                    const int y1 = std::min(H, H + pad_h - dy);
                    for (int dx = 0; dx < kw; ++dx) {
                        const T wval = wp[dy * kw + dx];
                        const int x0 = std::max(0, pad_w - dx);
                        const int x1 = std::min(W, W + pad_w - dx);
                        for (int y = y0; y < y1; ++y) {
                            const T* __restrict__ irow =
                                ip + static_cast<std::size_t>(y + dy - pad_h) * W + (x0 + dx - pad_w);
                            T* __restrict__ orow = op + static_cast<std::size_t>(y) * W + x0;
                            for (int x = 0; x < x1 - x0; ++x) orow[x] += wval * irow[x];
                        }
                    }
                }
            }
        }
    }

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_in = tracked(tape, input);
        const bool need_w = tracked(tape, weight);
        const bool need_b = tracked(tape, bias);
        if (need_in || need_w || need_b) {
            auto in_node = input.node();
            auto w_node = weight.node();
            auto b_node = bias.defined() ? bias.node() : nullptr;
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                const T* inv = in_node->values.data();
                const T* wvv = w_node->values.data();
                if (need_b) {
                    ensure_grad(b_node);
                    T* gb = b_node->grad.data();
                    for (int co = 0; co < Cout; ++co) {
                        T acc = T(0);
                        for (int n = 0; n < N; ++n) {
                            const T* gp = g + (static_cast<std::size_t>(n) * Cout + co) * plane;
                            for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                        }
                        gb[co] += acc;
                    }
                }
                if (need_w) {
                    ensure_grad(w_node);
                    T* gw = w_node->grad.data();
#pragma omp parallel for schedule(static)
                    for (int co = 0; co < Cout; ++co) {
                        for (int n = 0; n < N; ++n) {
                            const T* gp = g + (static_cast<std::size_t>(n) * Cout + co) * plane;
                            for (int ci = 0; ci < Cin; ++ci) {
                                const T* ip = inv + (static_cast<std::size_t>(n) * Cin + ci) * plane;
                                T* gwp = gw + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                                for (int dy = 0; dy < kh; ++dy) {
                                    const int y0 = std::max(0, pad_h - dy);
                                    const int y1 = std::min(H, H + pad_h - dy);
                                    for (int dx = 0; dx < kw; ++dx) {
                                        const int x0 = std::max(0, pad_w - dx);
                                        const int x1 = std::min(W, W + pad_w - dx);
                                        T acc = T(0);
                                        for (int y = y0; y < y1; ++y) {
                                            const T* __restrict__ irow =
                                                ip + static_cast<std::size_t>(y + dy - pad_h) * W + (x0 + dx - pad_w);
                                            const T* __restrict__ grow = gp + static_cast<std::size_t>(y) * W + x0;
                                            for (int x = 0; x < x1 - x0; ++x) acc += grow[x] * irow[x];
                                        }
                                        gwp[dy * kw + dx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if (need_in) {
                    ensure_grad(in_node);
                    T* gin = in_node->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
                    for (int n = 0; n < N; ++n) {
                        for (int ci = 0; ci < Cin; ++ci) {
                            T* gp = gin + (static_cast<std::size_t>(n) * Cin + ci) * plane;
                            for (int co = 0; co < Cout; ++co) {
                                const T* op = g + (static_cast<std::size_t>(n) * Cout + co) * plane;
                                const T* wp = wvv + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                                for (int dy = 0; dy < kh; ++dy) {
                                    const int y0 = std::max(0, dy - pad_h);
                                    const int y1 = std::min(H, H + dy - pad_h);
                                    for (int dx = 0; dx < kw; ++dx) {
                                        const T wval = wp[dy * kw + dx];
                                        const int x0 = std::max(0, dx - pad_w);
                                        const int x1 = std::min(W, W + dx - pad_w);
                                        for (int y = y0; y < y1; ++y) {
                                            const T* __restrict__ grow =
                                                op + static_cast<std::size_t>(y - dy + pad_h) * W + (x0 - dx + pad_w);
                                            T* __restrict__ grin = gp + static_cast<std::size_t>(y) * W + x0;
                                            for (int x = 0; x < x1 - x0; ++x) grin[x] += wval * grow[x];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    }
    return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int pad_h, int pad_w) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    if (ws.n != is.c || ws.c != 1)
        throw std::invalid_argument("depthwise_conv2d: weight shape " + ws.str() +
                                    " does not provide one filter per channel of " + is.str());
    check_conv_args(is, ws, bias, pad_h, pad_w, "depthwise_conv2d");

    const int N = is.n, C = is.c, H = is.h, W = is.w;
    const int kh = ws.h, kw = ws.w;
    Tensor<T> out(Shape4{N, C, H, W});

    const T* in = input.values().data();
    const T* wv = weight.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    T* ov = out.mutable_values().data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            T* op = ov + (static_cast<std::size_t>(n) * C + c) * plane;
            const T* ip = in + (static_cast<std::size_t>(n) * C + c) * plane;
            const T* wp = wv + static_cast<std::size_t>(c) * kh * kw;
            std::fill(op, op + plane, bv ? bv[c] : T(0));
            for (int dy = 0; dy < kh; ++dy) {
                const int y0 = std::max(0, pad_h - dy);
                const int y1 = std::min(H, H + pad_h - dy);
                for (int dx = 0; dx < kw; ++dx) {
                    const T wval = wp[dy * kw + dx];
                    const int x0 = std::max(0, pad_w - dx);
                    const int x1 = std::min(W, W + pad_w - dx);
                    for (int y = y0; y < y1; ++y) {
                        const T* __restrict__ irow =
                            ip + static_cast<std::size_t>(y + dy - pad_h) * W + (x0 + dx - pad_w);
                        T* __restrict__ orow = op + static_cast<std::size_t>(y) * W + x0;
                        for (int x = 0; x < x1 - x0; ++x) orow[x] += wval * irow[x];
                    }
                }
            }
        }
    }

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_in = tracked(tape, input);
        const bool need_w = tracked(tape, weight);
        const bool need_b = tracked(tape, bias);
        if (need_in || need_w || need_b) {
            auto in_node = input.node();
            auto w_node = weight.node();
            auto b_node = bias.defined() ? bias.node() : nullptr;
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                const T* inv = in_node->values.data();
                const T* wvv = w_node->values.data();
                if (need_b) {
                    ensure_grad(b_node);
                    T* gb = b_node->grad.data();
                    for (int c = 0; c < C; ++c) {
                        T acc = T(0);
                        for (int n = 0; n < N; ++n) {
                            const T* gp = g + (static_cast<std::size_t>(n) * C + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                        }
                        gb[c] += acc;
                    }
                }
                if (need_w) {
                    ensure_grad(w_node);
                    T* gw = w_node->grad.data();
#pragma omp parallel for schedule(static)
                    for (int c = 0; c < C; ++c) {
                        T* gwp = gw + static_cast<std::size_t>(c) * kh * kw;
                        for (int n = 0; n < N; ++n) {
                            const T* gp = g + (static_cast<std::size_t>(n) * C + c) * plane;
                            const T* ip = inv + (static_cast<std::size_t>(n) * C + c) * plane;
                            for (int dy = 0; dy < kh; ++dy) {
                                const int y0 = std::max(0, pad_h - dy);
                                const int y1 = std::min(H, H + pad_h - dy);
                                for (int dx = 0; dx < kw; ++dx) {
                                    const int x0 = std::max(0, pad_w - dx);
                                    const int x1 = std::min(W, W + pad_w - dx);
                                    T acc = T(0);
                                    for (int y = y0; y < y1; ++y) {
                                        const T* __restrict__ irow =
                                            ip + static_cast<std::size_t>(y + dy - pad_h) * W + (x0 + dx - pad_w);
                                        const T* __restrict__ grow = gp + static_cast<std::size_t>(y) * W + x0;
                                        for (int x = 0; x < x1 - x0; ++x) acc += grow[x] * irow[x];
                                    }
                                    gwp[dy * kw + dx] += acc;
                                }
                            }
                        }
                    }
                }
                if (need_in) {
                    ensure_grad(in_node);
                    T* gin = in_node->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
                    for (int n = 0; n < N; ++n) {
                        for (int c = 0; c < C; ++c) {
                            T* gp = gin + (static_cast<std::size_t>(n) * C + c) * plane;
                            const T* op = g + (static_cast<std::size_t>(n) * C + c) * plane;
                            const T* wp = wvv + static_cast<std::size_t>(c) * kh * kw;
                            for (int dy = 0; dy < kh; ++dy) {
                                const int y0 = std::max(0, dy - pad_h);
                                const int y1 = std::min(H, H + dy - pad_h);
                                for (int dx = 0; dx < kw; ++dx) {
                                    const T wval = wp[dy * kw + dx];
                                    const int x0 = std::max(0, dx - pad_w);
                                    const int x1 = std::min(W, W + dx - pad_w);
                                    for (int y = y0; y < y1; ++y) {
                                        const T* __restrict__ grow =
                                            op + static_cast<std::size_t>(y - dy + pad_h) * W + (x0 - dx + pad_w);
                                        T* __restrict__ grin = gp + static_cast<std::size_t>(y) * W + x0;
                                        for (int x = 0; x < x1 - x0; ++x) grin[x] += wval * grow[x];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    }
    return out;
}

namespace {

// Shared elementwise-activation plumbing: forward map + backward local slope.
template <typename T, typename Fwd, typename Bwd>
Tensor<T> pointwise(const Tensor<T>& input, Fwd fwd, Bwd bwd_factory) {
    Tensor<T> out(input.shape());
    const T* in = input.values().data();
    T* ov = out.mutable_values().data();
    const std::size_t n = input.numel();
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(in[i]);

    if (Tape<T>* tape = Tape<T>::active(); tape && tape->tracks(input)) {
        auto in_node = input.node();
        auto out_node = out.node();
        auto bwd = bwd_factory(in_node, out_node);
        tape->record(out_node, [=] {
            ensure_grad(in_node);
            const T* g = out_node->grad.data();
            T* gin = in_node->grad.data();
            const std::size_t m = in_node->values.size();
            for (std::size_t i = 0; i < m; ++i) gin[i] += g[i] * bwd(i);
        });
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
    if (!(slope > T(0) && slope < T(1)))
        throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
    return pointwise(
        input, [slope](T x) { return x >= T(0) ? x : slope * x; },
        [slope](const std::shared_ptr<TensorNode<T>>& in, const std::shared_ptr<TensorNode<T>>&) {
            return [in, slope](std::size_t i) { return in->values[i] >= T(0) ? T(1) : slope; };
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    return pointwise(
        input, [](T x) { return x >= T(0) ? x : T(0); },
        [](const std::shared_ptr<TensorNode<T>>& in, const std::shared_ptr<TensorNode<T>>&) {
            return [in](std::size_t i) { return in->values[i] >= T(0) ? T(1) : T(0); };
        });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    return pointwise(
        input,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](const std::shared_ptr<TensorNode<T>>& in, const std::shared_ptr<TensorNode<T>>& out) {
            (void)in;
            return [out](std::size_t i) {
                const T s = out->values[i];
                return s * (T(1) - s);
            };
        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    const Shape4 is = input.shape();
    Tensor<T> out(Shape4{is.n, is.c, 1, 1});
    const T* in = input.values().data();
    T* ov = out.mutable_values().data();
    const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
    const T inv = T(1) / static_cast<T>(plane);
    for (int n = 0; n < is.n; ++n) {
        for (int c = 0; c < is.c; ++c) {
            const T* ip = in + (static_cast<std::size_t>(n) * is.c + c) * plane;
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i) acc += ip[i];
            ov[static_cast<std::size_t>(n) * is.c + c] = acc * inv;
        }
    }

    if (Tape<T>* tape = Tape<T>::active(); tape && tape->tracks(input)) {
        auto in_node = input.node();
        auto out_node = out.node();
        tape->record(out_node, [=] {
            ensure_grad(in_node);
            const T* g = out_node->grad.data();
            T* gin = in_node->grad.data();
            for (int n = 0; n < is.n; ++n) {
                for (int c = 0; c < is.c; ++c) {
                    const T gv = g[static_cast<std::size_t>(n) * is.c + c] * inv;
                    T* gp = gin + (static_cast<std::size_t>(n) * is.c + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) gp[i] += gv;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    if (is.h != 1 || is.w != 1)
        throw std::invalid_argument("fully_connected: input spatial dims must be 1x1, got " + is.str());
    if (ws.c != is.c || ws.h != 1 || ws.w != 1)
        throw std::invalid_argument("fully_connected: weight shape " + ws.str() +
                                    " incompatible with input " + is.str());
    if (bias.defined() && bias.shape() != Shape4{1, ws.n, 1, 1})
        throw std::invalid_argument("fully_connected: bias shape mismatch");

    const int N = is.n, Cin = is.c, Cout = ws.n;
    Tensor<T> out(Shape4{N, Cout, 1, 1});
    const T* in = input.values().data();
    const T* wv = weight.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    T* ov = out.mutable_values().data();
    for (int n = 0; n < N; ++n) {
        for (int o = 0; o < Cout; ++o) {
            T acc = bv ? bv[o] : T(0);
            const T* wp = wv + static_cast<std::size_t>(o) * Cin;
            const T* ip = in + static_cast<std::size_t>(n) * Cin;
            for (int i = 0; i < Cin; ++i) acc += wp[i] * ip[i];
            ov[static_cast<std::size_t>(n) * Cout + o] = acc;
        }
    }

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_in = tracked(tape, input);
        const bool need_w = tracked(tape, weight);
        const bool need_b = tracked(tape, bias);
        if (need_in || need_w || need_b) {
            auto in_node = input.node();
            auto w_node = weight.node();
            auto b_node = bias.defined() ? bias.node() : nullptr;
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                if (need_b) {
                    ensure_grad(b_node);
                    for (int o = 0; o < Cout; ++o) {
                        T acc = T(0);
                        for (int n = 0; n < N; ++n) acc += g[static_cast<std::size_t>(n) * Cout + o];
                        b_node->grad[o] += acc;
                    }
                }
                if (need_w) {
                    ensure_grad(w_node);
                    for (int o = 0; o < Cout; ++o) {
                        for (int i = 0; i < Cin; ++i) {
                            T acc = T(0);
                            for (int n = 0; n < N; ++n)
                                acc += g[static_cast<std::size_t>(n) * Cout + o] *
                                       in_node->values[static_cast<std::size_t>(n) * Cin + i];
                            w_node->grad[static_cast<std::size_t>(o) * Cin + i] += acc;
                        }
                    }
                }
                if (need_in) {
                    ensure_grad(in_node);
                    for (int n = 0; n < N; ++n) {
                        for (int i = 0; i < Cin; ++i) {
                            T acc = T(0);
                            for (int o = 0; o < Cout; ++o)
                                acc += g[static_cast<std::size_t>(n) * Cout + o] *
                                       w_node->values[static_cast<std::size_t>(o) * Cin + i];
                            in_node->grad[static_cast<std::size_t>(n) * Cin + i] += acc;
                        }
                    }
                }
            });
        }
    }
    return out;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int r) {
    const Shape4 is = input.shape();
    if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
    if (is.c % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channel count " + std::to_string(is.c) +
                                    " not divisible by r^2 = " + std::to_string(r * r));
    const int N = is.n, C = is.c / (r * r), H = is.h, W = is.w;
    Tensor<T> out(Shape4{N, C, H * r, W * r});
    const T* in = input.values().data();
    T* ov = out.mutable_values().data();

    const int cin = is.c;
    auto in_index = [cin, H, W](int n, int c, int y, int x) {
        return ((static_cast<std::size_t>(n) * cin + c) * H + y) * W + x;
    };
    auto out_index = [C, H, W, r](int n, int c, int y, int x) {
        return ((static_cast<std::size_t>(n) * C + c) * (H * r) + y) * (W * r) + x;
    };
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W; ++x)
                            ov[out_index(n, c, r * y + dy, r * x + dx)] =
                                in[in_index(n, c * r * r + dy * r + dx, y, x)];

    if (Tape<T>* tape = Tape<T>::active(); tape && tape->tracks(input)) {
        auto in_node = input.node();
        auto out_node = out.node();
        tape->record(out_node, [=] {
            ensure_grad(in_node);
            const T* g = out_node->grad.data();
            T* gin = in_node->grad.data();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            for (int y = 0; y < H; ++y)
                                for (int x = 0; x < W; ++x)
                                    gin[in_index(n, c * r * r + dy * r + dx, y, x)] +=
                                        g[out_index(n, c, r * y + dy, r * x + dx)];
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> out(a.shape());
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T* ov = out.mutable_values().data();
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_a = tape->tracks(a);
        const bool need_b = tape->tracks(b);
        if (need_a || need_b) {
            auto a_node = a.node();
            auto b_node = b.node();
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                if (need_a) {
                    ensure_grad(a_node);
                    for (std::size_t i = 0; i < n; ++i) a_node->grad[i] += g[i];
                }
                if (need_b) {
                    ensure_grad(b_node);
                    for (std::size_t i = 0; i < n; ++i) b_node->grad[i] += g[i];
                }
            });
        }
    }
    return out;
}

template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& gate) {
    const Shape4 xs = x.shape();
    const Shape4 gs = gate.shape();
    if (gs.n != xs.n || gs.c != xs.c || gs.h != 1 || gs.w != 1)
        throw std::invalid_argument("mul_channelwise: gate shape " + gs.str() +
                                    " cannot broadcast over " + xs.str());
    Tensor<T> out(xs);
    const T* xv = x.values().data();
    const T* gv = gate.values().data();
    T* ov = out.mutable_values().data();
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
            const T s = gv[static_cast<std::size_t>(n) * xs.c + c];
            const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) ov[base + i] = xv[base + i] * s;
        }
    }

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_x = tape->tracks(x);
        const bool need_g = tape->tracks(gate);
        if (need_x || need_g) {
            auto x_node = x.node();
            auto g_node = gate.node();
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                if (need_x) {
                    ensure_grad(x_node);
                    for (int n = 0; n < xs.n; ++n)
                        for (int c = 0; c < xs.c; ++c) {
                            const T s = g_node->values[static_cast<std::size_t>(n) * xs.c + c];
                            const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) x_node->grad[base + i] += g[base + i] * s;
                        }
                }
                if (need_g) {
                    ensure_grad(g_node);
                    for (int n = 0; n < xs.n; ++n)
                        for (int c = 0; c < xs.c; ++c) {
                            const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
                            T acc = T(0);
                            for (std::size_t i = 0; i < plane; ++i) acc += g[base + i] * x_node->values[base + i];
                            g_node->grad[static_cast<std::size_t>(n) * xs.c + c] += acc;
                        }
                }
            });
        }
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Shape4 first = parts.front().shape();
    int ctotal = 0;
    for (const auto& p : parts) {
        const Shape4 s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw std::invalid_argument("concat_channels: incompatible shapes " + first.str() + " vs " + s.str());
        ctotal += s.c;
    }
    Tensor<T> out(Shape4{first.n, ctotal, first.h, first.w});
    T* ov = out.mutable_values().data();
    const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
    int coff = 0;
    for (const auto& p : parts) {
        const int pc = p.shape().c;
        const T* pv = p.values().data();
        for (int n = 0; n < first.n; ++n)
            std::copy(pv + static_cast<std::size_t>(n) * pc * plane,
                      pv + static_cast<std::size_t>(n + 1) * pc * plane,
                      ov + (static_cast<std::size_t>(n) * ctotal + coff) * plane);
        coff += pc;
    }

    if (Tape<T>* tape = Tape<T>::active()) {
        bool any = false;
        for (const auto& p : parts) any = any || tape->tracks(p);
        if (any) {
            std::vector<std::shared_ptr<TensorNode<T>>> nodes;
            std::vector<bool> need;
            std::vector<int> offsets;
            int off = 0;
            for (const auto& p : parts) {
                nodes.push_back(p.node());
                need.push_back(tape->tracks(p));
                offsets.push_back(off);
                off += p.shape().c;
            }
            auto out_node = out.node();
            const int N = first.n;
            tape->record(out_node, [=] {
                const T* g = out_node->grad.data();
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                    if (!need[k]) continue;
                    ensure_grad(nodes[k]);
                    const int pc = nodes[k]->shape.c;
                    for (int n = 0; n < N; ++n) {
                        const T* gp = g + (static_cast<std::size_t>(n) * ctotal + offsets[k]) * plane;
                        T* dst = nodes[k]->grad.data() + static_cast<std::size_t>(n) * pc * plane;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(pc) * plane; ++i) dst[i] += gp[i];
                    }
                }
            });
        }
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& input, const std::vector<int>& sizes) {
    const Shape4 is = input.shape();
    int sum = 0;
    for (int s : sizes) {
        if (s <= 0) throw std::invalid_argument("split_channels: non-positive split size");
        sum += s;
    }
    if (sum != is.c)
        throw std::invalid_argument("split_channels: sizes sum to " + std::to_string(sum) +
                                    " but input has " + std::to_string(is.c) + " channels");

    std::vector<Tensor<T>> parts;
    const T* in = input.values().data();
    const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
    Tape<T>* tape = Tape<T>::active();
    const bool need = tape && tape->tracks(input);
    int coff = 0;
    for (int s : sizes) {
        Tensor<T> part(Shape4{is.n, s, is.h, is.w});
        T* pv = part.mutable_values().data();
        for (int n = 0; n < is.n; ++n)
            std::copy(in + (static_cast<std::size_t>(n) * is.c + coff) * plane,
                      in + (static_cast<std::size_t>(n) * is.c + coff + s) * plane,
                      pv + static_cast<std::size_t>(n) * s * plane);
        if (need) {
            auto in_node = input.node();
            auto part_node = part.node();
            const int offset = coff;
            const int N = is.n, C = is.c;
            tape->record(part_node, [=] {
                ensure_grad(in_node);
                const T* g = part_node->grad.data();
                for (int n = 0; n < N; ++n) {
                    T* dst = in_node->grad.data() + (static_cast<std::size_t>(n) * C + offset) * plane;
                    const T* src = g + static_cast<std::size_t>(n) * s * plane;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(s) * plane; ++i) dst[i] += src[i];
                }
            });
        }
        parts.push_back(std::move(part));
        coff += s;
    }
    return parts;
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> out(Shape4{1, 1, 1, 1});
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T acc = T(0);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) acc += av[i] * bv[i];
    out.mutable_values()[0] = acc;

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_a = tape->tracks(a);
        const bool need_b = tape->tracks(b);
        if (need_a || need_b) {
            auto a_node = a.node();
            auto b_node = b.node();
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T g = out_node->grad[0];
                if (need_a) {
                    ensure_grad(a_node);
                    for (std::size_t i = 0; i < n; ++i) a_node->grad[i] += g * b_node->values[i];
                }
                if (need_b) {
                    ensure_grad(b_node);
                    for (std::size_t i = 0; i < n; ++i) b_node->grad[i] += g * a_node->values[i];
                }
            });
        }
    }
    return out;
}

namespace {

template <typename T, bool Squared>
Tensor<T> mean_loss(const Tensor<T>& pred, const Tensor<T>& target, const char* op) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + pred.shape().str() +
                                    " vs " + target.shape().str());
    Tensor<T> out(Shape4{1, 1, 1, 1});
    const T* pv = pred.values().data();
    const T* tv = target.values().data();
    const std::size_t n = pred.numel();
    const T inv = T(1) / static_cast<T>(n);
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pv[i] - tv[i];
        acc += Squared ? d * d : std::abs(d);
    }
    out.mutable_values()[0] = acc * inv;

    if (Tape<T>* tape = Tape<T>::active()) {
        const bool need_p = tape->tracks(pred);
        const bool need_t = tape->tracks(target);
        if (need_p || need_t) {
            auto p_node = pred.node();
            auto t_node = target.node();
            auto out_node = out.node();
            tape->record(out_node, [=] {
                const T g = out_node->grad[0] * inv;
                for (std::size_t i = 0; i < n; ++i) {
                    const T d = p_node->values[i] - t_node->values[i];
                    T dd;
                    if constexpr (Squared)
                        dd = T(2) * d;
                    else
                        dd = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                    if (need_p) {
                        ensure_grad(p_node);
                        p_node->grad[i] += g * dd;
                    }
                    if (need_t) {
                        ensure_grad(t_node);
                        t_node->grad[i] -= g * dd;
                    }
                }
            });
        }
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    return mean_loss<T, false>(pred, target, "l1_loss");
}

template <typename T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    return mean_loss<T, true>(pred, target, "l2_loss");
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

#define XSRN_INSTANTIATE_OPS(T)                                                                      \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
    template Tensor<T> depthwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                           int, int);                                               \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                          \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                   \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                        \
    template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
    template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                                     \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> mul_channelwise<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                           \
    template std::vector<Tensor<T>> split_channels<T>(const Tensor<T>&, const std::vector<int>&);   \
    template Tensor<T> dot<T>(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> l2_loss<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template bool all_finite<T>(const Tensor<T>&);

XSRN_INSTANTIATE_OPS(float)
XSRN_INSTANTIATE_OPS(double)

#undef XSRN_INSTANTIATE_OPS

}  // namespace xsrn
