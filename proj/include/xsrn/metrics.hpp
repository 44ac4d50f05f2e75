#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xsrn/image.hpp"

namespace xsrn {

enum class MetricColorSpace { kY, kRGB };

struct EvalProtocol {
    MetricColorSpace color = MetricColorSpace::kY;
    int border_crop = 0;  // pixels removed from every side before scoring

    void validate(int width, int height) const;
};

// 10*log10(255^2 / MSE) over the protocol channel(s); +inf for equal images.
double psnr(const FloatImage& a, const FloatImage& b, const EvalProtocol& protocol);

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03, L=255,
// valid windows only. Requires cropped dimensions >= 11.
double ssim(const FloatImage& a, const FloatImage& b, const EvalProtocol& protocol);

struct SelectorConfig {
    double edge_threshold = 128.0;      // t_e: responses below this are zeroed
    double response_threshold = 12.0;   // t_r: include image iff mean response exceeds it
    double blur_sigma = 1.4;            // sigma of the 7x7 denoising blur
};

// Mean over all pixels of the thresholded Sobel magnitude of the blurred
// grayscale image.
double edge_response(const ImageBuffer& img, const SelectorConfig& cfg);

struct SelectionEntry {
    std::string id;
    double response = 0.0;
    bool selected = false;
};

struct SelectionReport {
    std::vector<SelectionEntry> entries;  // sorted by id
    std::vector<std::string> skipped;     // unreadable inputs
    int selected_count() const;
};

// Runs the selector over every .png in `dir` (non-recursive).
SelectionReport select_benchmark(const std::string& dir, const SelectorConfig& cfg);
SelectionReport select_benchmark(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                                 const SelectorConfig& cfg);

struct MetricRow {
    std::string id;
    double psnr_db = 0.0;
    double ssim_score = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// SR callback: LR float image in, SR float image out (both nominal [0,255]).
using SrModelFn = std::function<FloatImage(const FloatImage&)>;

// For every HR image: center-crop to a multiple of scale, bicubic-degrade by
// 1/scale (antialiased), run the model, score against the cropped HR. The SR
// output is clipped to [0,255] before scoring.
MetricReport evaluate_model(const SrModelFn& model,
                            const std::vector<std::pair<std::string, ImageBuffer>>& hr_images,
                            int scale, const EvalProtocol& protocol);
MetricReport evaluate_model_dir(const SrModelFn& model, const std::string& hr_dir, int scale,
                                const EvalProtocol& protocol);

// Upscaling stub used as the reference baseline and for checkpoint-free runs.
SrModelFn bicubic_sr_model(int scale);

std::vector<std::pair<std::string, ImageBuffer>> load_png_dir(const std::string& dir);

}  // namespace xsrn
