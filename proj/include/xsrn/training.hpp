#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xsrn/image.hpp"
#include "xsrn/model.hpp"
#include "xsrn/rng.hpp"

namespace xsrn {

enum class LossKind { kL1, kL2 };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

struct TrainConfig {
    double lr = 1e-4;
    int lr_halving_period = 200;  // epochs
    int total_epochs = 1000;
    int patch_size = 48;  // LR patch side
    int batch_size = 16;
    int iterations_per_epoch = 1000;
    int checkpoint_period = 1;  // epochs between checkpoints
    LossKind loss = LossKind::kL1;
    std::uint64_t seed = 0;

    void validate() const;
};

// lr = base * 0.5^floor(epoch / period)
double lr_schedule(int epoch, const TrainConfig& cfg);

// Bias-corrected Adam over a fixed parameter list (beta1=0.9, beta2=0.999,
// eps=1e-8). Moment buffers are addressed by parameter index, so the caller
// must keep the parameter order stable across steps and checkpoints.
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit Adam(std::vector<Tensor<float>> params);

    void step(double lr);

    std::int64_t step_count() const { return step_; }
    std::vector<Tensor<float>>& params() { return params_; }
    std::vector<std::vector<float>>& first_moments() { return m_; }
    std::vector<std::vector<float>>& second_moments() { return v_; }
    void set_step_count(std::int64_t s) { step_ = s; }

private:
    std::vector<Tensor<float>> params_;
    std::vector<std::vector<float>> m_, v_;
    std::int64_t step_ = 0;
};

// One training image with its pre-degraded LR counterpart. LR images are
// produced once from the full HR image (degrade-then-crop), so patch pairs
// never see degradation boundary artifacts.
struct TrainImage {
    std::string id;
    ImageBuffer hr;
    ImageBuffer lr;
};

std::vector<TrainImage> build_training_set(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                                           int scale);
std::vector<TrainImage> load_training_dir(const std::string& dir, int scale);

ImageBuffer apply_augmentation(const ImageBuffer& img, bool flip, int quarter_turns);

// Aligned LR/HR patch pair with paired augmentation drawn uniformly from
// {identity, h-flip} x {0, 90, 180, 270} degrees.
std::pair<ImageBuffer, ImageBuffer> sample_patch(const TrainImage& img, int scale, int patch, Rng& rng);

struct TrainLogRecord {
    int epoch = 0;
    int iteration = 0;  // global iteration index
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<std::string> checkpoint_paths;
    std::vector<TrainLogRecord> epoch_log;  // one record per epoch (mean loss)
};

// Loss went non-finite; carries the diagnostic required at abort time.
struct TrainDivergence : std::runtime_error {
    TrainDivergence(int iteration, double lr, double grad_norm);
    int iteration;
    double lr;
    double grad_norm;
};

using TrainHook = std::function<void(const TrainLogRecord&)>;

// Runs (or resumes) the training loop. Checkpoints land in out_dir as
// epoch_NNNN.ckpt together with loss_log.txt. Everything -- batch
// composition, augmentation, updates -- is a pure function of (seed, config,
// corpus), so reruns are bit-identical.
TrainResult train_loop(CrossSRN<float>& model, const std::vector<TrainImage>& data,
                       const TrainConfig& cfg, const std::string& out_dir,
                       const std::string& resume_checkpoint = "",
                       const TrainHook& per_iteration = nullptr);

// ---- Checkpoint container ----------------------------------------------
//
// Binary layout (little-endian): magic "XSRN", u32 version, a length-prefixed
// key=value text block (model config + progress), a length-prefixed RNG state
// string, then u32 tensor count and per tensor: length-prefixed name, u32
// rank, u32 dims, f32 values.
struct WeightStore {
    ModelConfig config;
    int trained_epochs = 0;
    std::int64_t optimizer_step = -1;  // -1 when no optimizer state is stored
    std::string rng_state;             // empty when absent
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    bool has_optimizer() const { return optimizer_step >= 0; }
};

WeightStore snapshot(CrossSRN<float>& model, Adam* optimizer, const Rng* rng, int trained_epochs);

void save_checkpoint(const WeightStore& store, const std::string& path);
WeightStore load_checkpoint(const std::string& path);

// Copies the store's model tensors into `model`, checking shapes tensor by
// tensor. Optimizer moments land in `optimizer` when both sides have them.
void apply_checkpoint(const WeightStore& store, CrossSRN<float>& model, Adam* optimizer = nullptr,
                      Rng* rng = nullptr);

}  // namespace xsrn
