#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xsrn/layers.hpp"

namespace xsrn {

// Architecture hyperparameters. Defaults are the full-size network; ablation
// variants are reached through conv_variant and the use_* toggles.
struct ModelConfig {
    int scale = 4;      // r in {2,3,4}
    int channels = 64;  // c
    int groups = 10;    // number of MFFGs (G)
    int kernel = 3;     // m, receptive extent of the CCB convolutions
    ConvVariant conv_variant = ConvVariant::kCross;
    bool use_mff = true;    // 4-way split + hierarchical CCBs; off = full-width CCB stack
    bool use_ccb = true;    // off = MFFGs keep only their fuse block
    bool use_ca = true;     // channel attention everywhere it appears
    bool use_fnorm = true;  // per-channel feature normalization inside CCBs

    static constexpr int kNumSplits = 4;
    static constexpr int kCaReduction = 16;
    static constexpr int kFnormKernel = 3;
    static constexpr double kLeakySlope = 0.05;

    void validate() const;
};

// Residual block of two width-preserving convolutions with LeakyReLU between
// them, then feature normalization and channel attention on the branch.
template <typename T>
struct CCB {
    SpatialConv<T> conv1, conv2;
    std::optional<FeatureNorm<T>> fnorm;
    std::optional<ChannelAttention<T>> ca;
    T slope;

    CCB(int channels, const ModelConfig& cfg);
    Tensor<T> forward(const Tensor<T>& x) const;
    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn);
    void init_params(Rng& rng);
};

// Fusion tail of an MFFG: conv -> LeakyReLU -> conv -> channel attention.
template <typename T>
struct FuseBlock {
    Conv2dLayer<T> conv1, conv2;
    std::optional<ChannelAttention<T>> ca;
    T slope;

    FuseBlock(int channels, const ModelConfig& cfg);
    Tensor<T> forward(const Tensor<T>& x) const;
    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn);
    void init_params(Rng& rng);
};

// Multi-scale feature fusion group. The input splits into four equal channel
// groups; three are refined by progressively narrower CCBs (3c/4, 2c/4, c/4),
// the last passes through untouched, and the fuse block recombines them onto
// a residual connection.
template <typename T>
struct MFFG {
    int channels;
    bool mff;
    std::vector<CCB<T>> ccbs;  // empty when use_ccb is off
    FuseBlock<T> fuse;

    MFFG(const ModelConfig& cfg);
    Tensor<T> forward(const Tensor<T>& x) const;
    void visit_params(const std::string& prefix, const ParamVisitor<T>& fn);
    void init_params(Rng& rng);
};

template <typename T>
class CrossSRN {
public:
    explicit CrossSRN(const ModelConfig& cfg);

    // [N,3,H,W] -> [N,3,rH,rW]; input is expected in [0,1].
    Tensor<T> forward(const Tensor<T>& x) const;

    // Features entering the restoration head (head output + padded trunk).
    Tensor<T> forward_trunk(const Tensor<T>& x) const;

    void visit_params(const ParamVisitor<T>& fn);
    void init_params(Rng& rng);
    void zero_grads();
    void set_params_trainable(bool on);

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Conv2dLayer<T> head_;
    std::vector<MFFG<T>> groups_;
    Conv2dLayer<T> pad1_, pad2_;
    Conv2dLayer<T> restore_;
};

struct AccountingReport {
    std::uint64_t params = 0;  // trainable scalars, weights + biases
    std::uint64_t macs = 0;    // multiply-accumulates to produce one output image
};

// Trainable-scalar count for the configuration.
std::uint64_t count_params(const ModelConfig& cfg);

// MACs to restore one out_width x out_height image: every conv/FC layer
// contributes its parameter count times its number of output positions. All
// spatial layers run at LR resolution; the pixel shuffle is free.
std::uint64_t count_macs(const ModelConfig& cfg, int out_width = 1280, int out_height = 720);

AccountingReport account(const ModelConfig& cfg, int out_width = 1280, int out_height = 720);

}  // namespace xsrn
