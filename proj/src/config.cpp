#include "xsrn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace xsrn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': expected integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': expected number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw std::invalid_argument("config key '" + key + "': expected boolean, got '" + value + "'");
}

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "scale") cfg.model.scale = parse_int(key, value);
    else if (key == "channels") cfg.model.channels = parse_int(key, value);
    else if (key == "groups") cfg.model.groups = parse_int(key, value);
    else if (key == "kernel") cfg.model.kernel = parse_int(key, value);
    else if (key == "conv_variant") cfg.model.conv_variant = conv_variant_from_name(value);
    else if (key == "use_mff") cfg.model.use_mff = parse_bool(key, value);
    else if (key == "use_ccb") cfg.model.use_ccb = parse_bool(key, value);
    else if (key == "use_ca") cfg.model.use_ca = parse_bool(key, value);
    else if (key == "use_fnorm") cfg.model.use_fnorm = parse_bool(key, value);
    else if (key == "lr") cfg.train.lr = parse_double(key, value);
    else if (key == "lr_halving_period") cfg.train.lr_halving_period = parse_int(key, value);
    else if (key == "total_epochs") cfg.train.total_epochs = parse_int(key, value);
    else if (key == "patch_size") cfg.train.patch_size = parse_int(key, value);
    else if (key == "batch_size") cfg.train.batch_size = parse_int(key, value);
    else if (key == "iterations_per_epoch") cfg.train.iterations_per_epoch = parse_int(key, value);
    else if (key == "checkpoint_period") cfg.train.checkpoint_period = parse_int(key, value);
    else if (key == "loss") cfg.train.loss = loss_kind_from_name(value);
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "protocol") {
        if (value == "y") cfg.metric_color = MetricColorSpace::kY;
        else if (value == "rgb") cfg.metric_color = MetricColorSpace::kRGB;
        else throw std::invalid_argument("config key 'protocol': expected y|rgb, got '" + value + "'");
    } else if (key == "crop") cfg.metric_crop = parse_int(key, value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace xsrn
