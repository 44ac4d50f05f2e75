#include "xsrn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "xsrn/metrics.hpp"
#include "xsrn/ops.hpp"

namespace xsrn {

const char* loss_kind_name(LossKind k) { return k == LossKind::kL1 ? "l1" : "l2"; }

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "l1") return LossKind::kL1;
    if (name == "l2") return LossKind::kL2;
    throw std::invalid_argument("unknown loss '" + name + "' (expected l1|l2)");
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (lr_halving_period <= 0) throw std::invalid_argument("TrainConfig: lr_halving_period must be positive");
    if (total_epochs <= 0) throw std::invalid_argument("TrainConfig: total_epochs must be positive");
    if (patch_size <= 0) throw std::invalid_argument("TrainConfig: patch_size must be positive");
    if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (iterations_per_epoch <= 0)
        throw std::invalid_argument("TrainConfig: iterations_per_epoch must be positive");
    if (checkpoint_period <= 0) throw std::invalid_argument("TrainConfig: checkpoint_period must be positive");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
    return cfg.lr * std::pow(0.5, epoch / cfg.lr_halving_period);
}

Adam::Adam(std::vector<Tensor<float>> params) : params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.f);
        v_.emplace_back(p.numel(), 0.f);
    }
}

void Adam::step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    const float b1 = static_cast<float>(kBeta1), b2 = static_cast<float>(kBeta2);
    const float inv_bc1 = static_cast<float>(1.0 / bc1), inv_bc2 = static_cast<float>(1.0 / bc2);
    const float lrf = static_cast<float>(lr), eps = static_cast<float>(kEps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& w = params_[i].mutable_values();
        const auto& g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.f - b1) * g[j];
            v[j] = b2 * v[j] + (1.f - b2) * g[j] * g[j];
            const float mhat = m[j] * inv_bc1;
            const float vhat = v[j] * inv_bc2;
            w[j] -= lrf * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::vector<TrainImage> build_training_set(
    const std::vector<std::pair<std::string, ImageBuffer>>& images, int scale) {
    std::vector<TrainImage> out;
    out.reserve(images.size());
    for (const auto& [id, img] : images) {
        TrainImage t;
        t.id = id;
        t.hr = center_crop_to_multiple(img, scale);
        t.lr = scale == 1 ? t.hr : to_u8(bicubic_resize(to_float(t.hr), 1.0 / scale, true));
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<TrainImage> load_training_dir(const std::string& dir, int scale) {
    return build_training_set(load_png_dir(dir), scale);
}

ImageBuffer apply_augmentation(const ImageBuffer& img, bool flip, int quarter_turns) {
    ImageBuffer out = flip ? hflip(img) : img;
    for (int i = 0; i < (quarter_turns & 3); ++i) out = rotate90(out);
    return out;
}

std::pair<ImageBuffer, ImageBuffer> sample_patch(const TrainImage& img, int scale, int patch, Rng& rng) {
    if (img.lr.width < patch || img.lr.height < patch)
        throw std::invalid_argument("sample_patch: image '" + img.id + "' (" +
                                    std::to_string(img.lr.width) + "x" + std::to_string(img.lr.height) +
                                    " LR) is too small for patch size " + std::to_string(patch));
    const int x0 = rng.uniform_int(0, img.lr.width - patch);
    const int y0 = rng.uniform_int(0, img.lr.height - patch);
    const bool flip = rng.uniform_int(0, 1) == 1;
    const int rot = rng.uniform_int(0, 3);
    ImageBuffer lr_patch = crop(img.lr, x0, y0, patch, patch);
    ImageBuffer hr_patch = crop(img.hr, x0 * scale, y0 * scale, patch * scale, patch * scale);
    return {apply_augmentation(lr_patch, flip, rot), apply_augmentation(hr_patch, flip, rot)};
}

TrainDivergence::TrainDivergence(int iteration_, double lr_, double grad_norm_)
    : std::runtime_error("training diverged: non-finite loss at iteration " +
                         std::to_string(iteration_) + " (lr=" + std::to_string(lr_) +
                         ", grad-norm=" + std::to_string(grad_norm_) + ")"),
      iteration(iteration_),
      lr(lr_),
      grad_norm(grad_norm_) {}

namespace {

void fill_batch_tensor(Tensor<float>& t, int slot, const ImageBuffer& img) {
    auto& v = t.mutable_values();
    const Shape4 s = t.shape();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                v[((static_cast<std::size_t>(slot) * s.c + c) * s.h + y) * s.w + x] =
                    img.at(y, x, c) / 255.f;
}

std::string checkpoint_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
    return buf;
}

}  // namespace

TrainResult train_loop(CrossSRN<float>& model, const std::vector<TrainImage>& data,
                       const TrainConfig& cfg, const std::string& out_dir,
                       const std::string& resume_checkpoint, const TrainHook& per_iteration) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_loop: empty dataset");
    for (const auto& img : data)
        if (img.hr.channels != 3)
            throw std::invalid_argument("train_loop: image '" + img.id + "' is not RGB");

    const int scale = model.config().scale;
    const int patch = cfg.patch_size;

    model.set_params_trainable(true);
    std::vector<Tensor<float>> params;
    model.visit_params([&](const std::string&, Tensor<float>& p) { params.push_back(p); });
    Adam adam(std::move(params));
    Rng rng(cfg.seed);

    int start_epoch = 0;
    if (!resume_checkpoint.empty()) {
        WeightStore store = load_checkpoint(resume_checkpoint);
        apply_checkpoint(store, model, &adam, &rng);
        start_epoch = store.trained_epochs;
    }

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "loss_log.txt", start_epoch == 0 ? std::ios::trunc : std::ios::app);

    TrainResult result;
    Tensor<float> lr_batch(Shape4{cfg.batch_size, 3, patch, patch});
    Tensor<float> hr_batch(Shape4{cfg.batch_size, 3, patch * scale, patch * scale});

    for (int epoch = start_epoch; epoch < cfg.total_epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        double epoch_loss = 0.0;
        for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
            const int global_it = epoch * cfg.iterations_per_epoch + it;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
                auto [lr_patch, hr_patch] = sample_patch(data[idx], scale, patch, rng);
                fill_batch_tensor(lr_batch, b, lr_patch);
                fill_batch_tensor(hr_batch, b, hr_patch);
            }

            model.zero_grads();
            double loss_value;
            {
                Tape<float> tape;
                Tensor<float> pred = model.forward(lr_batch);
                Tensor<float> loss = cfg.loss == LossKind::kL1 ? l1_loss(pred, hr_batch)
                                                               : l2_loss(pred, hr_batch);
                tape.backward(loss);
                loss_value = loss.value();
            }
            if (!std::isfinite(loss_value)) {
                double sq = 0.0;
                model.visit_params([&](const std::string&, Tensor<float>& p) {
                    for (float g : p.grad()) sq += static_cast<double>(g) * g;
                });
                throw TrainDivergence(global_it, lr, std::sqrt(sq));
            }
            adam.step(lr);

            epoch_loss += loss_value;
            log << epoch << ' ' << global_it << ' ' << loss_value << ' ' << lr << '\n';
            if (per_iteration) per_iteration({epoch, global_it, loss_value, lr});
        }
        epoch_loss /= cfg.iterations_per_epoch;
        result.epoch_log.push_back({epoch, (epoch + 1) * cfg.iterations_per_epoch - 1, epoch_loss, lr});
        log.flush();

        if ((epoch + 1) % cfg.checkpoint_period == 0 || epoch + 1 == cfg.total_epochs) {
            const std::string path = (fs::path(out_dir) / checkpoint_name(epoch + 1)).string();
            save_checkpoint(snapshot(model, &adam, &rng, epoch + 1), path);
            result.checkpoint_paths.push_back(path);
        }
    }
    return result;
}

// ---- Checkpoint serialization -------------------------------------------

namespace {

constexpr char kMagic[4] = {'X', 'S', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

void write_f32_values(std::ostream& os, const std::vector<float>& values) {
    for (float f : values) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        write_u32(os, u);
    }
}

std::string config_block(const WeightStore& store) {
    std::ostringstream os;
    const ModelConfig& m = store.config;
    os << "scale=" << m.scale << '\n'
       << "channels=" << m.channels << '\n'
       << "groups=" << m.groups << '\n'
       << "kernel=" << m.kernel << '\n'
       << "conv_variant=" << conv_variant_name(m.conv_variant) << '\n'
       << "use_mff=" << (m.use_mff ? 1 : 0) << '\n'
       << "use_ccb=" << (m.use_ccb ? 1 : 0) << '\n'
       << "use_ca=" << (m.use_ca ? 1 : 0) << '\n'
       << "use_fnorm=" << (m.use_fnorm ? 1 : 0) << '\n'
       << "trained_epochs=" << store.trained_epochs << '\n';
    if (store.has_optimizer()) os << "optimizer_step=" << store.optimizer_step << '\n';
    return os.str();
}

void parse_config_block(const std::string& text, WeightStore& store) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "scale") store.config.scale = std::stoi(value);
        else if (key == "channels") store.config.channels = std::stoi(value);
        else if (key == "groups") store.config.groups = std::stoi(value);
        else if (key == "kernel") store.config.kernel = std::stoi(value);
        else if (key == "conv_variant") store.config.conv_variant = conv_variant_from_name(value);
        else if (key == "use_mff") store.config.use_mff = value != "0";
        else if (key == "use_ccb") store.config.use_ccb = value != "0";
        else if (key == "use_ca") store.config.use_ca = value != "0";
        else if (key == "use_fnorm") store.config.use_fnorm = value != "0";
        else if (key == "trained_epochs") store.trained_epochs = std::stoi(value);
        else if (key == "optimizer_step") store.optimizer_step = std::stoll(value);
        else throw std::runtime_error("checkpoint: unknown config key '" + key + "'");
    }
}

}  // namespace

WeightStore snapshot(CrossSRN<float>& model, Adam* optimizer, const Rng* rng, int trained_epochs) {
    WeightStore store;
    store.config = model.config();
    store.trained_epochs = trained_epochs;
    if (rng) store.rng_state = rng->serialize();

    std::vector<std::string> names;
    model.visit_params([&](const std::string& name, Tensor<float>& p) {
        names.push_back(name);
        Tensor<float> copy(p.shape());
        copy.mutable_values() = p.values();
        store.tensors.emplace_back(name, std::move(copy));
    });
    if (optimizer) {
        store.optimizer_step = optimizer->step_count();
        auto& m = optimizer->first_moments();
        auto& v = optimizer->second_moments();
        auto& params = optimizer->params();
        if (m.size() != names.size())
            throw std::logic_error("snapshot: optimizer parameter count does not match the model");
        for (std::size_t i = 0; i < names.size(); ++i) {
            Tensor<float> mt(params[i].shape());
            mt.mutable_values() = m[i];
            store.tensors.emplace_back("adam.m." + names[i], std::move(mt));
            Tensor<float> vt(params[i].shape());
            vt.mutable_values() = v[i];
            store.tensors.emplace_back("adam.v." + names[i], std::move(vt));
        }
    }
    return store;
}

void save_checkpoint(const WeightStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_string(os, config_block(store));
    write_string(os, store.rng_state);
    write_u32(os, static_cast<std::uint32_t>(store.tensors.size()));
    for (const auto& [name, t] : store.tensors) {
        write_string(os, name);
        const Shape4 s = t.shape();
        write_u32(os, 4);
        write_u32(os, static_cast<std::uint32_t>(s.n));
        write_u32(os, static_cast<std::uint32_t>(s.c));
        write_u32(os, static_cast<std::uint32_t>(s.h));
        write_u32(os, static_cast<std::uint32_t>(s.w));
        write_f32_values(os, t.values());
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

WeightStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint (bad magic)");
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));

    WeightStore store;
    parse_config_block(read_string(is), store);
    store.rng_state = read_string(is);
    const std::uint32_t count = read_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(is);
        const std::uint32_t rank = read_u32(is);
        if (rank != 4) throw std::runtime_error("load_checkpoint: tensor '" + name + "' has rank " +
                                                std::to_string(rank) + ", expected 4");
        Shape4 s;
        s.n = static_cast<int>(read_u32(is));
        s.c = static_cast<int>(read_u32(is));
        s.h = static_cast<int>(read_u32(is));
        s.w = static_cast<int>(read_u32(is));
        Tensor<float> t(s);
        auto& v = t.mutable_values();
        for (std::size_t j = 0; j < v.size(); ++j) {
            const std::uint32_t u = read_u32(is);
            std::memcpy(&v[j], &u, 4);
        }
        store.tensors.emplace_back(name, std::move(t));
    }
    return store;
}

void apply_checkpoint(const WeightStore& store, CrossSRN<float>& model, Adam* optimizer, Rng* rng) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : store.tensors) by_name[name] = &t;

    model.visit_params([&](const std::string& name, Tensor<float>& p) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("apply_checkpoint: checkpoint is missing tensor '" + name + "'");
        if (it->second->shape() != p.shape())
            throw std::runtime_error("apply_checkpoint: tensor '" + name + "' has shape " +
                                     it->second->shape().str() + " but the model expects " +
                                     p.shape().str());
        p.mutable_values() = it->second->values();
    });

    if (optimizer && store.has_optimizer()) {
        optimizer->set_step_count(store.optimizer_step);
        std::size_t i = 0;
        model.visit_params([&](const std::string& name, Tensor<float>&) {
            auto mit = by_name.find("adam.m." + name);
            auto vit = by_name.find("adam.v." + name);
            if (mit == by_name.end() || vit == by_name.end())
                throw std::runtime_error("apply_checkpoint: optimizer state missing for '" + name + "'");
            optimizer->first_moments()[i] = mit->second->values();
            optimizer->second_moments()[i] = vit->second->values();
            ++i;
        });
    }
    if (rng && !store.rng_state.empty()) rng->deserialize(store.rng_state);
}

}  // namespace xsrn
