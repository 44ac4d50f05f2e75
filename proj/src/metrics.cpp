#include "xsrn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

namespace xsrn {

namespace {

void check_same_dims(const FloatImage& a, const FloatImage& b, const char* op) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument(std::string(op) + ": image dimensions differ (" +
                                    std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                                    std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                                    "x" + std::to_string(b.height) + "x" + std::to_string(b.channels) + ")");
}

FloatImage protocol_channel(const FloatImage& img, const EvalProtocol& p) {
    FloatImage base = (p.color == MetricColorSpace::kY && img.channels == 3) ? rgb_to_y(img) : img;
    if (p.border_crop == 0) return base;
    const int c = p.border_crop;
    FloatImage out = make_float_image(base.width - 2 * c, base.height - 2 * c, base.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int ch = 0; ch < out.channels; ++ch) out.at(y, x, ch) = base.at(y + c, x + c, ch);
    return out;
}

}  // namespace

void EvalProtocol::validate(int width, int height) const {
    if (border_crop < 0 || 2 * border_crop >= std::min(width, height))
        throw std::invalid_argument("EvalProtocol: border crop " + std::to_string(border_crop) +
                                    " out of range for " + std::to_string(width) + "x" +
                                    std::to_string(height) + " image");
}

double psnr(const FloatImage& a, const FloatImage& b, const EvalProtocol& protocol) {
    check_same_dims(a, b, "psnr");
    protocol.validate(a.width, a.height);
    const FloatImage ca = protocol_channel(a, protocol);
    const FloatImage cb = protocol_channel(b, protocol);
    double sse = 0.0;
    for (std::size_t i = 0; i < ca.data.size(); ++i) {
        const double d = static_cast<double>(ca.data[i]) - cb.data[i];
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(ca.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const FloatImage& a, const FloatImage& b, const EvalProtocol& protocol) {
    check_same_dims(a, b, "ssim");
    protocol.validate(a.width, a.height);
    const FloatImage x = protocol_channel(a, protocol);
    const FloatImage y = protocol_channel(b, protocol);
    constexpr int kWin = 11;
    if (x.width < kWin || x.height < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window after crop");

    // 11x11 Gaussian window, sigma 1.5, normalized.
    double w[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - 5, dx = j - 5;
            w[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += w[i][j];
        }
    for (auto& row : w)
        for (double& v : row) v /= wsum;

    constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
    constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

    double total = 0.0;
    std::size_t count = 0;
    for (int ch = 0; ch < x.channels; ++ch) {
        for (int oy = 0; oy + kWin <= x.height; ++oy) {
            for (int ox = 0; ox + kWin <= x.width; ++ox) {
                double mx = 0, my = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        mx += w[i][j] * x.at(oy + i, ox + j, ch);
                        my += w[i][j] * y.at(oy + i, ox + j, ch);
                    }
                double vx = 0, vy = 0, cxy = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double dx = x.at(oy + i, ox + j, ch) - mx;
                        const double dy = y.at(oy + i, ox + j, ch) - my;
                        vx += w[i][j] * dx * dx;
                        vy += w[i][j] * dy * dy;
                        cxy += w[i][j] * dx * dy;
                    }
                total += ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
                         ((mx * mx + my * my + kC1) * (vx + vy + kC2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double edge_response(const ImageBuffer& img, const SelectorConfig& cfg) {
    FloatImage gray = img.channels == 3 ? rgb_to_y(to_float(img)) : to_float(img);
    FloatImage edges = sobel_magnitude(gaussian_blur_7x7(gray, cfg.blur_sigma));
    // Weak responses are zeroed but stay in the denominator: the mean runs
    // over all pixels.
    double sum = 0.0;
    for (float v : edges.data) sum += (v < cfg.edge_threshold) ? 0.0 : v;
    return sum / static_cast<double>(edges.data.size());
}

int SelectionReport::selected_count() const {
    int n = 0;
    for (const auto& e : entries) n += e.selected ? 1 : 0;
    return n;
}

SelectionReport select_benchmark(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                                 const SelectorConfig& cfg) {
    SelectionReport report;
    for (const auto& [id, img] : images) {
        SelectionEntry e;
        e.id = id;
        e.response = edge_response(img, cfg);
        e.selected = e.response > cfg.response_threshold;
        report.entries.push_back(std::move(e));
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const SelectionEntry& a, const SelectionEntry& b) { return a.id < b.id; });
    return report;
}

SelectionReport select_benchmark(const std::string& dir, const SelectorConfig& cfg) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("select_benchmark: not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());

    std::vector<std::pair<std::string, ImageBuffer>> images;
    SelectionReport report;
    for (const auto& p : paths) {
        try {
            images.emplace_back(fs::path(p).filename().string(), load_png(p));
        } catch (const std::exception&) {
            report.skipped.push_back(fs::path(p).filename().string());
        }
    }
    SelectionReport inner = select_benchmark(images, cfg);
    inner.skipped = std::move(report.skipped);
    return inner;
}

std::vector<std::pair<std::string, ImageBuffer>> load_png_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("load_png_dir: not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<std::pair<std::string, ImageBuffer>> out;
    for (const auto& p : paths) out.emplace_back(fs::path(p).filename().string(), load_png(p));
    return out;
}

MetricReport evaluate_model(const SrModelFn& model,
                            const std::vector<std::pair<std::string, ImageBuffer>>& hr_images,
                            int scale, const EvalProtocol& protocol) {
    if (hr_images.empty()) throw std::invalid_argument("evaluate_model: no HR images");
    if (scale < 1) throw std::invalid_argument("evaluate_model: bad scale");
    MetricReport report;
    double psum = 0.0, ssum = 0.0;
    for (const auto& [id, hr_raw] : hr_images) {
        const ImageBuffer hr = center_crop_to_multiple(hr_raw, scale);
        const FloatImage hr_f = to_float(hr);
        FloatImage lr = scale == 1 ? hr_f : bicubic_resize(hr_f, 1.0 / scale, true);
        FloatImage sr = model(lr);
        if (sr.width != hr.width || sr.height != hr.height)
            throw std::runtime_error("evaluate_model: model produced " + std::to_string(sr.width) +
                                     "x" + std::to_string(sr.height) + " for " + id + ", expected " +
                                     std::to_string(hr.width) + "x" + std::to_string(hr.height));
        for (float& v : sr.data) v = std::min(255.f, std::max(0.f, v));
        MetricRow row;
        row.id = id;
        row.psnr_db = psnr(sr, hr_f, protocol);
        row.ssim_score = ssim(sr, hr_f, protocol);
        psum += row.psnr_db;
        ssum += row.ssim_score;
        report.rows.push_back(std::move(row));
    }
    report.mean_psnr = psum / static_cast<double>(report.rows.size());
    report.mean_ssim = ssum / static_cast<double>(report.rows.size());
    return report;
}

MetricReport evaluate_model_dir(const SrModelFn& model, const std::string& hr_dir, int scale,
                                const EvalProtocol& protocol) {
    auto images = load_png_dir(hr_dir);
    if (images.empty()) throw std::runtime_error("evaluate_model: no .png images in " + hr_dir);
    return evaluate_model(model, images, scale, protocol);
}

SrModelFn bicubic_sr_model(int scale) {
    return [scale](const FloatImage& lr) { return bicubic_resize(lr, scale, false); };
}

}  // namespace xsrn
