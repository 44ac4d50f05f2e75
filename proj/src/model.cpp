#include "xsrn/model.hpp"

#include <stdexcept>

namespace xsrn {

void ModelConfig::validate() const {
    if (scale < 2 || scale > 4) throw std::invalid_argument("ModelConfig: scale must be 2, 3, or 4");
    if (channels <= 0 || channels % kNumSplits != 0)
        throw std::invalid_argument("ModelConfig: channels must be a positive multiple of " +
                                    std::to_string(kNumSplits));
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("ModelConfig: kernel must be odd");
    if (groups < 1) throw std::invalid_argument("ModelConfig: groups must be >= 1");
}

template <typename T>
CCB<T>::CCB(int channels, const ModelConfig& cfg)
    : conv1(cfg.conv_variant, channels, channels, cfg.kernel),
      conv2(cfg.conv_variant, channels, channels, cfg.kernel),
      slope(static_cast<T>(ModelConfig::kLeakySlope)) {
    if (cfg.use_fnorm) fnorm.emplace(channels, ModelConfig::kFnormKernel);
    if (cfg.use_ca) ca.emplace(channels, ModelConfig::kCaReduction);
}

template <typename T>
Tensor<T> CCB<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = conv2.forward(leaky_relu(conv1.forward(x), slope));
    if (fnorm) h = fnorm->forward(h);
    if (ca) h = ca->forward(h);
    return add(x, h);
}

template <typename T>
void CCB<T>::visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
    conv1.visit_params(prefix + ".conv1", fn);
    conv2.visit_params(prefix + ".conv2", fn);
    if (fnorm) fnorm->visit_params(prefix + ".fnorm", fn);
    if (ca) ca->visit_params(prefix + ".ca", fn);
}

template <typename T>
void CCB<T>::init_params(Rng& rng) {
    conv1.init_uniform(rng, 1.0);
    conv2.init_uniform(rng, 0.1);  // final conv of the residual branch
    if (fnorm) fnorm->init_uniform(rng, 0.1);
    if (ca) ca->init_uniform(rng, 1.0);
}

template <typename T>
FuseBlock<T>::FuseBlock(int channels, const ModelConfig& cfg)
    : conv1(channels, channels, 3, 3),
      conv2(channels, channels, 3, 3),
      slope(static_cast<T>(ModelConfig::kLeakySlope)) {
    if (cfg.use_ca) ca.emplace(channels, ModelConfig::kCaReduction);
}

template <typename T>
Tensor<T> FuseBlock<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = conv2.forward(leaky_relu(conv1.forward(x), slope));
    if (ca) h = ca->forward(h);
    return h;
}

template <typename T>
void FuseBlock<T>::visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
    conv1.visit_params(prefix + ".conv1", fn);
    conv2.visit_params(prefix + ".conv2", fn);
    if (ca) ca->visit_params(prefix + ".ca", fn);
}

template <typename T>
void FuseBlock<T>::init_params(Rng& rng) {
    conv1.init_uniform(rng, 1.0);
    conv2.init_uniform(rng, 0.1);
    if (ca) ca->init_uniform(rng, 1.0);
}

template <typename T>
MFFG<T>::MFFG(const ModelConfig& cfg) : channels(cfg.channels), mff(cfg.use_mff), fuse(cfg.channels, cfg) {
    if (cfg.use_ccb) {
        const int q = cfg.channels / ModelConfig::kNumSplits;
        if (mff) {
            ccbs.emplace_back(3 * q, cfg);
            ccbs.emplace_back(2 * q, cfg);
            ccbs.emplace_back(1 * q, cfg);
        } else {
            for (int j = 0; j < 3; ++j) ccbs.emplace_back(cfg.channels, cfg);
        }
    }
}

template <typename T>
Tensor<T> MFFG<T>::forward(const Tensor<T>& x) const {
    if (ccbs.empty()) return add(x, fuse.forward(x));
    if (!mff) return add(x, fuse.forward(ccbs[2].forward(ccbs[1].forward(ccbs[0].forward(x)))));

    const int q = channels / ModelConfig::kNumSplits;
    auto top = split_channels(x, {3 * q, q});             // [g0 g1 g2], g3
    Tensor<T> h = ccbs[0].forward(top[0]);                // -> [h0 h1 h2]
    auto hs = split_channels(h, {2 * q, q});              // [h0 h1], h2
    Tensor<T> p = ccbs[1].forward(hs[0]);                 // -> [p0 p1]
    auto ps = split_channels(p, {q, q});                  // p0, p1
    Tensor<T> q0 = ccbs[2].forward(ps[0]);                // -> q0
    Tensor<T> fused = fuse.forward(concat_channels<T>({q0, ps[1], hs[1], top[1]}));
    return add(x, fused);
}

template <typename T>
void MFFG<T>::visit_params(const std::string& prefix, const ParamVisitor<T>& fn) {
    for (std::size_t j = 0; j < ccbs.size(); ++j)
        ccbs[j].visit_params(prefix + ".ccb" + std::to_string(j + 1), fn);
    fuse.visit_params(prefix + ".fuse", fn);
}

template <typename T>
void MFFG<T>::init_params(Rng& rng) {
    for (auto& b : ccbs) b.init_params(rng);
    fuse.init_params(rng);
}

template <typename T>
CrossSRN<T>::CrossSRN(const ModelConfig& cfg)
    : cfg_(cfg),
      head_(3, cfg.channels, 3, 3),
      pad1_(cfg.channels, cfg.channels, 3, 3),
      pad2_(cfg.channels, cfg.channels, 3, 3),
      restore_(cfg.channels, 3 * cfg.scale * cfg.scale, 3, 3) {
    cfg_.validate();
    groups_.reserve(cfg.groups);
    for (int g = 0; g < cfg.groups; ++g) groups_.emplace_back(cfg_);
}

template <typename T>
Tensor<T> CrossSRN<T>::forward_trunk(const Tensor<T>& x) const {
    if (x.shape().c != 3)
        throw std::invalid_argument("CrossSRN::forward: input must have 3 channels, got shape " +
                                    x.shape().str());
    const Tensor<T> h0 = head_.forward(x);
    Tensor<T> h = h0;
    for (const auto& g : groups_) h = g.forward(h);
    const T slope = static_cast<T>(ModelConfig::kLeakySlope);
    Tensor<T> padded = pad2_.forward(leaky_relu(pad1_.forward(h), slope));
    return add(padded, h0);
}

template <typename T>
Tensor<T> CrossSRN<T>::forward(const Tensor<T>& x) const {
    return pixel_shuffle(restore_.forward(forward_trunk(x)), cfg_.scale);
}

template <typename T>
void CrossSRN<T>::visit_params(const ParamVisitor<T>& fn) {
    head_.visit_params("head", fn);
    for (std::size_t g = 0; g < groups_.size(); ++g)
        groups_[g].visit_params("mffg" + std::to_string(g), fn);
    pad1_.visit_params("pad.conv1", fn);
    pad2_.visit_params("pad.conv2", fn);
    restore_.visit_params("restore", fn);
}

template <typename T>
void CrossSRN<T>::init_params(Rng& rng) {
    head_.init_uniform(rng, 1.0);
    for (auto& g : groups_) g.init_params(rng);
    pad1_.init_uniform(rng, 1.0);
    pad2_.init_uniform(rng, 0.1);  // final conv before the global residual join
    restore_.init_uniform(rng, 1.0);
}

template <typename T>
void CrossSRN<T>::zero_grads() {
    visit_params([](const std::string&, Tensor<T>& p) { p.zero_grad(); });
}

template <typename T>
void CrossSRN<T>::set_params_trainable(bool on) {
    visit_params([on](const std::string&, Tensor<T>& p) { p.set_requires_grad(on); });
}

namespace {

// Accounting walk. Convolution and FC layers contribute params x output
// positions; everything else (activations, pooling, shuffle, adds) is free.
struct Accountant {
    std::uint64_t params = 0;
    std::uint64_t macs = 0;

    void spatial(std::uint64_t layer_params, std::uint64_t positions) {
        params += layer_params;
        macs += layer_params * positions;
    }
    void fc(std::uint64_t layer_params) {
        params += layer_params;
        macs += layer_params;  // output spatial is 1x1
    }
};

std::uint64_t conv_params(ConvVariant v, int cin, int cout, int m) {
    const std::uint64_t weights = (v == ConvVariant::kVanilla)
                                      ? static_cast<std::uint64_t>(m) * m * cin * cout
                                      : 2ull * m * cin * cout;
    return weights + cout;
}

void account_ca(Accountant& acc, int channels) {
    const int reduced = std::max(1, channels / ModelConfig::kCaReduction);
    acc.fc(static_cast<std::uint64_t>(reduced) * channels + reduced);   // fc1
    acc.fc(static_cast<std::uint64_t>(channels) * reduced + channels);  // fc2
}

void account_ccb(Accountant& acc, const ModelConfig& cfg, int channels, std::uint64_t hw) {
    acc.spatial(conv_params(cfg.conv_variant, channels, channels, cfg.kernel), hw);
    acc.spatial(conv_params(cfg.conv_variant, channels, channels, cfg.kernel), hw);
    if (cfg.use_fnorm) {
        const int kf = ModelConfig::kFnormKernel;
        acc.spatial(static_cast<std::uint64_t>(channels) * kf * kf + channels, hw);
    }
    if (cfg.use_ca) account_ca(acc, channels);
}

void account_fuse(Accountant& acc, const ModelConfig& cfg, std::uint64_t hw) {
    const std::uint64_t p = 9ull * cfg.channels * cfg.channels + cfg.channels;
    acc.spatial(p, hw);
    acc.spatial(p, hw);
    if (cfg.use_ca) account_ca(acc, cfg.channels);
}

Accountant run_accounting(const ModelConfig& cfg, std::uint64_t hw) {
    cfg.validate();
    Accountant acc;
    const int c = cfg.channels;
    acc.spatial(9ull * 3 * c + c, hw);  // head
    for (int g = 0; g < cfg.groups; ++g) {
        if (cfg.use_ccb) {
            if (cfg.use_mff) {
                const int q = c / ModelConfig::kNumSplits;
                account_ccb(acc, cfg, 3 * q, hw);
                account_ccb(acc, cfg, 2 * q, hw);
                account_ccb(acc, cfg, 1 * q, hw);
            } else {
                for (int j = 0; j < 3; ++j) account_ccb(acc, cfg, c, hw);
            }
        }
        account_fuse(acc, cfg, hw);
    }
    acc.spatial(9ull * c * c + c, hw);  // padding block
    acc.spatial(9ull * c * c + c, hw);
    const int rc = 3 * cfg.scale * cfg.scale;
    acc.spatial(9ull * c * rc + rc, hw);  // restoration conv, LR resolution
    return acc;
}

}  // namespace

std::uint64_t count_params(const ModelConfig& cfg) { return run_accounting(cfg, 1).params; }

std::uint64_t count_macs(const ModelConfig& cfg, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0 || out_width % cfg.scale != 0 || out_height % cfg.scale != 0)
        throw std::invalid_argument("count_macs: output dimensions must be positive multiples of the scale");
    const std::uint64_t hw =
        static_cast<std::uint64_t>(out_width / cfg.scale) * (out_height / cfg.scale);
    return run_accounting(cfg, hw).macs;
}

AccountingReport account(const ModelConfig& cfg, int out_width, int out_height) {
    return {count_params(cfg), count_macs(cfg, out_width, out_height)};
}

#define XSRN_INSTANTIATE_MODEL(T) \
    template struct CCB<T>;       \
    template struct FuseBlock<T>; \
    template struct MFFG<T>;      \
    template class CrossSRN<T>;

XSRN_INSTANTIATE_MODEL(float)
XSRN_INSTANTIATE_MODEL(double)

#undef XSRN_INSTANTIATE_MODEL

}  // namespace xsrn
