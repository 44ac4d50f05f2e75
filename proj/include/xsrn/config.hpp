#pragma once

#include <optional>
#include <string>

#include "xsrn/metrics.hpp"
#include "xsrn/model.hpp"
#include "xsrn/training.hpp"

namespace xsrn {

// Flat key=value run configuration ('#' comments, unknown keys rejected).
// CLI flags override file values; fields left unset keep their defaults.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    MetricColorSpace metric_color = MetricColorSpace::kY;
    std::optional<int> metric_crop;  // defaults to the scale factor when unset

    EvalProtocol protocol() const {
        return {metric_color, metric_crop.value_or(model.scale)};
    }
};

// Throws std::invalid_argument naming the key for unknown keys or bad values.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

}  // namespace xsrn
