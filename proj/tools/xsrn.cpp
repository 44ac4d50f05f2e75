// Command-line surface: training, single-image SR, evaluation, benchmark
// selection, parameter/MAC accounting, bicubic degradation, and the
// finite-difference verification gate.
#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xsrn/config.hpp"
#include "xsrn/gradcheck.hpp"
#include "xsrn/image.hpp"
#include "xsrn/metrics.hpp"
#include "xsrn/model.hpp"
#include "xsrn/ops.hpp"
#include "xsrn/training.hpp"

namespace {

using namespace xsrn;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;

std::string format_params(std::uint64_t params) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%" PRIu64 " (%.0fK)", params, params / 1000.0);
    return buf;
}

std::string format_macs(std::uint64_t macs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%" PRIu64 " (%.2fG)", macs, macs / 1e9);
    return buf;
}

// Loads a checkpoint into a freshly built model; "bicubic" selects the
// resampling stub (scale must then come from --scale).
SrModelFn make_sr_model(const std::string& model_arg, int scale_flag, int* scale_out) {
    if (model_arg == "bicubic") {
        if (scale_flag <= 0)
            throw std::invalid_argument("--scale is required when --model bicubic is used");
        if (scale_out) *scale_out = scale_flag;
        return bicubic_sr_model(scale_flag);
    }
    WeightStore store = load_checkpoint(model_arg);
    auto model = std::make_shared<CrossSRN<float>>(store.config);
    apply_checkpoint(store, *model);
    if (scale_flag > 0 && scale_flag != store.config.scale)
        throw std::invalid_argument("--scale " + std::to_string(scale_flag) +
                                    " contradicts checkpoint scale " +
                                    std::to_string(store.config.scale));
    if (scale_out) *scale_out = store.config.scale;
    return [model](const FloatImage& lr) {
        return tensor_to_image(model->forward(image_to_tensor(lr)));
    };
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume, std::int64_t seed_flag) {
    RunConfig cfg = load_config_file(config_path);
    if (seed_flag >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
    cfg.model.validate();
    cfg.train.validate();
    if (!std::filesystem::is_directory(data_dir))
        throw std::invalid_argument("training data directory does not exist: " + data_dir);

    auto data = load_training_dir(data_dir, cfg.model.scale);
    if (data.empty()) throw std::invalid_argument("no .png training images in " + data_dir);

    CrossSRN<float> model(cfg.model);
    if (resume.empty()) {
        Rng init_rng(cfg.train.seed);
        model.init_params(init_rng);
    }
    TrainResult result = train_loop(model, data, cfg.train, out_dir, resume,
                                    [&](const TrainLogRecord& r) {
                                        if (r.iteration % 100 == 0)
                                            std::printf("epoch %d iter %d loss %.6f lr %.3g\n", r.epoch,
                                                        r.iteration, r.loss, r.lr);
                                    });
    std::printf("wrote %zu checkpoint(s) to %s\n", result.checkpoint_paths.size(), out_dir.c_str());
    return kExitOk;
}

int cmd_sr(const std::string& model_arg, const std::string& input, const std::string& output,
           int scale_flag) {
    int scale = 0;
    SrModelFn model = make_sr_model(model_arg, scale_flag, &scale);
    const ImageBuffer in = load_png(input);
    if (in.channels != 3) throw std::invalid_argument("sr: input must be an RGB image: " + input);
    FloatImage sr = model(to_float(in));
    save_png(to_u8(sr), output);
    std::printf("%s: %dx%d -> %dx%d (x%d)\n", output.c_str(), in.width, in.height, sr.width,
                sr.height, scale);
    return kExitOk;
}

int cmd_eval(const std::string& model_arg, const std::string& hr_dir, int scale,
             const std::string& protocol_name, int crop_flag, bool tsv) {
    EvalProtocol protocol;
    if (protocol_name == "y") protocol.color = MetricColorSpace::kY;
    else if (protocol_name == "rgb") protocol.color = MetricColorSpace::kRGB;
    else throw std::invalid_argument("--protocol must be y or rgb");

    int model_scale = 0;
    SrModelFn model = make_sr_model(model_arg, scale, &model_scale);
    protocol.border_crop = crop_flag >= 0 ? crop_flag : model_scale;

    MetricReport report = evaluate_model_dir(model, hr_dir, model_scale, protocol);
    for (const auto& row : report.rows) {
        if (tsv) std::printf("%s\t%.6f\t%.6f\n", row.id.c_str(), row.psnr_db, row.ssim_score);
        else std::printf("%-32s %10.4f dB   %8.6f\n", row.id.c_str(), row.psnr_db, row.ssim_score);
    }
    if (tsv) std::printf("mean\t%.6f\t%.6f\n", report.mean_psnr, report.mean_ssim);
    else std::printf("%-32s %10.4f dB   %8.6f   (%zu images)\n", "mean", report.mean_psnr,
                     report.mean_ssim, report.rows.size());
    return kExitOk;
}

void print_histogram(const SelectionReport& report) {
    double max_r = 0;
    for (const auto& e : report.entries) max_r = std::max(max_r, e.response);
    const int bins = 16;
    const double width = max_r > 0 ? max_r / bins : 1.0;
    std::vector<int> hist(bins, 0);
    for (const auto& e : report.entries)
        hist[std::min(bins - 1, static_cast<int>(e.response / width))]++;
    std::printf("response histogram (%zu images, max %.2f):\n", report.entries.size(), max_r);
    for (int i = 0; i < bins; ++i) {
        std::printf("  [%7.2f,%7.2f) %4d ", i * width, (i + 1) * width, hist[i]);
        for (int j = 0; j < hist[i] && j < 60; ++j) std::putchar('#');
        std::putchar('\n');
    }
}

int cmd_select_bench(const std::string& dir, double te, double tr, double sigma,
                     const std::string& out_path, int expect_count, bool histogram) {
    SelectorConfig cfg;
    cfg.edge_threshold = te;
    cfg.response_threshold = tr;
    cfg.blur_sigma = sigma;
    SelectionReport report = select_benchmark(dir, cfg);

    std::ofstream out(out_path);
    if (!out) throw std::invalid_argument("cannot open output file: " + out_path);
    for (const auto& e : report.entries)
        if (e.selected) out << e.id << '\t' << e.response << '\n';
    for (const auto& id : report.skipped)
        std::fprintf(stderr, "warning: skipped unreadable image %s\n", id.c_str());

    const int selected = report.selected_count();
    std::printf("%d of %zu images selected (t_e=%g, t_r=%g, sigma=%g)\n", selected,
                report.entries.size(), te, tr, sigma);
    if (histogram) print_histogram(report);
    if (expect_count >= 0 && selected != expect_count) {
        std::printf("expected %d images but selected %d\n", expect_count, selected);
        if (!histogram) print_histogram(report);
        return kExitVerifyFail;
    }
    return kExitOk;
}

int cmd_count(const std::string& config_path, bool ablations) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    cfg.model.validate();

    auto print_row = [](const std::string& name, const ModelConfig& m) {
        const AccountingReport r = account(m);
        std::printf("%-12s params %-22s macs@720p %s\n", name.c_str(), format_params(r.params).c_str(),
                    format_macs(r.macs).c_str());
    };
    print_row(conv_variant_name(cfg.model.conv_variant), cfg.model);
    if (ablations) {
        ModelConfig m = cfg.model;
        for (ConvVariant v : {ConvVariant::kCross, ConvVariant::kSeq, ConvVariant::kVanilla}) {
            if (v == cfg.model.conv_variant) continue;
            m = cfg.model;
            m.conv_variant = v;
            print_row(conv_variant_name(v), m);
        }
        m = cfg.model;
        m.use_mff = false;
        print_row("w/o MFF", m);
        m = cfg.model;
        m.use_ccb = false;
        print_row("w/o CCB", m);
        for (int kernel : {5, 7}) {
            m = cfg.model;
            m.kernel = kernel;
            print_row("m=" + std::to_string(kernel), m);
        }
    }
    return kExitOk;
}

int cmd_degrade(const std::string& input, int scale, const std::string& output) {
    if (scale < 1) throw std::invalid_argument("--scale must be >= 1");
    ImageBuffer in = load_png(input);
    if (in.width % scale != 0 || in.height % scale != 0) {
        std::printf("note: %dx%d is not a multiple of %d; center-cropping first\n", in.width,
                    in.height, scale);
        in = center_crop_to_multiple(in, scale);
    }
    const ImageBuffer out =
        scale == 1 ? in : to_u8(bicubic_resize(to_float(in), 1.0 / scale, true));
    save_png(out, output);
    std::printf("%s: %dx%d -> %dx%d\n", output.c_str(), in.width, in.height, out.width, out.height);
    return kExitOk;
}

int cmd_gradcheck(const std::string& ops_arg, int trials, std::uint64_t seed) {
    std::vector<GradCheckCase> cases = gradcheck_cases();
    if (ops_arg != "all") {
        std::vector<std::string> wanted;
        std::string tmp;
        for (char ch : ops_arg + ",") {
            if (ch == ',') {
                if (!tmp.empty()) wanted.push_back(tmp);
                tmp.clear();
            } else {
                tmp += ch;
            }
        }
        std::vector<GradCheckCase> filtered;
        for (const auto& name : wanted) {
            const auto it = std::find_if(cases.begin(), cases.end(),
                                         [&](const GradCheckCase& c) { return c.name == name; });
            if (it == cases.end()) throw std::invalid_argument("unknown gradcheck op '" + name + "'");
            filtered.push_back(*it);
        }
        cases = std::move(filtered);
    }

    constexpr double kTol = 1e-3;
    bool all_pass = true;
    for (const auto& c : cases) {
        const GradCheckResult r = c.run(trials, seed);
        const bool pass = r.passed(kTol);
        all_pass = all_pass && pass;
        std::printf("%-18s %-4s max_rel_err %.3e over %zu coordinate checks\n", c.name.c_str(),
                    pass ? "PASS" : "FAIL", r.max_rel_err, r.coords_checked);
    }
    return all_pass ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-SRN structure-preserving super-resolution toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, resume, model_arg, input, output, hr_dir;
    std::string protocol_name = "y";
    std::string ops_arg = "all";
    std::string select_dir, select_out;
    std::int64_t seed_flag = -1;
    std::uint64_t gc_seed = 20240601;
    int scale = 0, crop_flag = -1, trials = 100, expect_count = -1;
    double te = 128.0, tr = 12.0, sigma = 1.4;
    bool tsv = false, ablations = false, histogram = false;

    auto* train = app.add_subcommand("train", "train a model on a directory of HR images");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--data-dir", data_dir, "directory of HR training .png images")->required();
    train->add_option("--out-dir", out_dir, "output directory for checkpoints and logs")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--seed", seed_flag, "override the config seed");

    auto* sr = app.add_subcommand("sr", "upscale one image");
    sr->add_option("--model", model_arg, "checkpoint path, or 'bicubic'")->required();
    sr->add_option("--input", input, "input PNG")->required();
    sr->add_option("--output", output, "output PNG")->required();
    sr->add_option("--scale", scale, "scale for the bicubic stub");

    auto* eval = app.add_subcommand("eval", "evaluate PSNR/SSIM against a directory of HR images");
    eval->add_option("--model", model_arg, "checkpoint path, or 'bicubic'")->required();
    eval->add_option("--hr-dir", hr_dir, "directory of HR ground-truth .png images")->required();
    eval->add_option("--scale", scale, "scale factor (required for 'bicubic')");
    eval->add_option("--protocol", protocol_name, "metric color space: y|rgb");
    eval->add_option("--crop", crop_flag, "border crop in pixels (default: scale)");
    eval->add_flag("--tsv", tsv, "machine-readable output: id\\tpsnr\\tssim");

    auto* select = app.add_subcommand("select-bench", "select edge-rich images");
    select->add_option("--dir", select_dir, "image directory")->required();
    select->add_option("--te", te, "edge threshold");
    select->add_option("--tr", tr, "mean-response threshold");
    select->add_option("--sigma", sigma, "Gaussian blur sigma");
    select->add_option("--out", select_out, "output list file")->required();
    select->add_option("--expect-count", expect_count, "fail (exit 1) unless exactly N selected");
    select->add_flag("--histogram", histogram, "print the response histogram");

    auto* count = app.add_subcommand("count", "parameter and MAC accounting");
    count->add_option("--config", config_path, "run configuration file (default config if omitted)");
    count->add_flag("--ablations", ablations, "also print the variant/ablation grid");

    auto* degrade = app.add_subcommand("degrade", "bicubic-degrade an image by 1/scale");
    degrade->add_option("--input", input, "input PNG")->required();
    degrade->add_option("--scale", scale, "downscaling factor")->required();
    degrade->add_option("--output", output, "output PNG")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--ops", ops_arg, "all, or comma-separated case names");
    gradcheck->add_option("--trials", trials, "randomized trials per case");
    gradcheck->add_option("--seed", gc_seed, "base seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, data_dir, out_dir, resume, seed_flag);
        if (sr->parsed()) return cmd_sr(model_arg, input, output, scale);
        if (eval->parsed()) return cmd_eval(model_arg, hr_dir, scale, protocol_name, crop_flag, tsv);
        if (select->parsed())
            return cmd_select_bench(select_dir, te, tr, sigma, select_out, expect_count, histogram);
        if (count->parsed()) return cmd_count(config_path, ablations);
        if (degrade->parsed()) return cmd_degrade(input, scale, output);
        if (gradcheck->parsed()) return cmd_gradcheck(ops_arg, trials, gc_seed);
    } catch (const TrainDivergence& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitVerifyFail;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
