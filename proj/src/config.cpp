#include "protomark/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "protomark/errors.hpp"

namespace protomark {

void RunConfig::validate() const {
    if (image_h < 8 || image_w < 8)
        throw ConfigError("image size must be at least 8x8");
    if (image_h % 4 != 0 || image_w % 4 != 0)
        throw ConfigError("image dims must be divisible by 4");
    if (num_landmarks < 2) throw ConfigError("num_landmarks must be >= 2");
    if (sigma_px <= 0.0) throw ConfigError("sigma_px must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (alignment loss needs pairs)");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda weights must be >= 0");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must lie in [0, 1)");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (lr_decay_factor <= 0.0) throw ConfigError("lr_decay_factor must be > 0");
    if (lr_decay_every_epochs < 1) throw ConfigError("lr_decay_every_epochs must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (d1 < 1 || d2 < 1 || d3 < 1) throw ConfigError("channel widths must be >= 1");
    if (msa_heads < 1) throw ConfigError("msa_heads must be >= 1");
    if (feature_dim() % msa_heads != 0)
        throw ConfigError("feature dim D=" + std::to_string(feature_dim()) +
                          " must be divisible by msa_heads=" + std::to_string(msa_heads));
    if (mlp_hidden < 0) throw ConfigError("mlp_hidden must be >= 0");
    if (augment.contrast_lo > augment.contrast_hi ||
        augment.noise_sigma_lo > augment.noise_sigma_hi || augment.brightness_delta < 0.0 ||
        augment.noise_sigma_lo < 0.0)
        throw ConfigError("augmentation ranges invalid");
}

RunConfig paper_preset() {
    RunConfig c;
    c.image_h = 512;
    c.image_w = 512;
    c.sigma_px = 6.0;
    c.epochs = 150;
    c.d1 = 64;
    c.d2 = 32;
    c.d3 = 16;
    return c;
}

RunConfig desk_preset() {
    RunConfig c;
    c.image_h = 128;
    c.image_w = 128;
    c.sigma_px = 1.5;
    c.epochs = 40;
    c.lr = 0.01;
    c.lr_decay_every_epochs = 20;
    c.d1 = 32;
    c.d2 = 16;
    c.d3 = 8;
    c.msa_heads = 4;
    return c;
}

RunConfig micro_preset() {
    RunConfig c;
    c.image_h = 8;
    c.image_w = 8;
    c.num_landmarks = 3;
    c.sigma_px = 1.0;
    c.batch_size = 2;
    c.epochs = 1;
    c.d1 = 4;
    c.d2 = 4;
    c.d3 = 4;
    c.msa_heads = 1;
    c.mlp_hidden = 4;
    return c;
}

RunConfig preset_by_name(const std::string& name) {
    if (name == "paper") return paper_preset();
    if (name == "desk") return desk_preset();
    if (name == "micro") return micro_preset();
    throw ConfigError("unknown preset '" + name + "' (expected paper|desk|micro)");
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value '" + v + "' for key '" + key + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    const double d = parse_double(key, v);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw ConfigError("expected integer value for key '" + key + "', got '" + v + "'");
    return i;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "image_h") cfg.image_h = parse_int(key, value);
    else if (key == "image_w") cfg.image_w = parse_int(key, value);
    else if (key == "image_size") cfg.image_h = cfg.image_w = parse_int(key, value);
    else if (key == "num_landmarks") cfg.num_landmarks = parse_int(key, value);
    else if (key == "sigma_px") cfg.sigma_px = parse_double(key, value);
    else if (key == "alpha") cfg.alpha = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "lambda1") cfg.lambda1 = parse_double(key, value);
    else if (key == "lambda2") cfg.lambda2 = parse_double(key, value);
    else if (key == "mask_ratio") cfg.mask_ratio = parse_double(key, value);
    else if (key == "mine_masked_only") cfg.mine_masked_only = parse_int(key, value) != 0;
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_double(key, value);
    else if (key == "lr_decay_every_epochs") cfg.lr_decay_every_epochs = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "momentum") cfg.momentum = parse_double(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_double(key, value));
    else if (key == "d1") cfg.d1 = parse_int(key, value);
    else if (key == "d2") cfg.d2 = parse_int(key, value);
    else if (key == "d3") cfg.d3 = parse_int(key, value);
    else if (key == "msa_heads") cfg.msa_heads = parse_int(key, value);
    else if (key == "mlp_hidden") cfg.mlp_hidden = parse_int(key, value);
    else if (key == "aug_brightness") cfg.augment.brightness_delta = parse_double(key, value);
    else if (key == "aug_contrast_lo") cfg.augment.contrast_lo = parse_double(key, value);
    else if (key == "aug_contrast_hi") cfg.augment.contrast_hi = parse_double(key, value);
    else if (key == "aug_noise_sigma_lo") cfg.augment.noise_sigma_lo = parse_double(key, value);
    else if (key == "aug_noise_sigma_hi") cfg.augment.noise_sigma_hi = parse_double(key, value);
    else if (key == "threads") cfg.threads = parse_int(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    RunConfig cfg = base;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

namespace {
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace

std::vector<std::string> config_lines(const RunConfig& cfg) {
    std::vector<std::string> out;
    auto kv = [&out](const std::string& k, const std::string& v) { out.push_back(k + "=" + v); };
    kv("image_h", std::to_string(cfg.image_h));
    kv("image_w", std::to_string(cfg.image_w));
    kv("num_landmarks", std::to_string(cfg.num_landmarks));
    kv("sigma_px", fmt_double(cfg.sigma_px));
    kv("alpha", fmt_double(cfg.alpha));
    kv("batch_size", std::to_string(cfg.batch_size));
    kv("lambda1", fmt_double(cfg.lambda1));
    kv("lambda2", fmt_double(cfg.lambda2));
    kv("mask_ratio", fmt_double(cfg.mask_ratio));
    kv("mine_masked_only", cfg.mine_masked_only ? "1" : "0");
    kv("lr", fmt_double(cfg.lr));
    kv("lr_decay_factor", fmt_double(cfg.lr_decay_factor));
    kv("lr_decay_every_epochs", std::to_string(cfg.lr_decay_every_epochs));
    kv("epochs", std::to_string(cfg.epochs));
    kv("momentum", fmt_double(cfg.momentum));
    kv("seed", std::to_string(cfg.seed));
    kv("d1", std::to_string(cfg.d1));
    kv("d2", std::to_string(cfg.d2));
    kv("d3", std::to_string(cfg.d3));
    kv("msa_heads", std::to_string(cfg.msa_heads));
    kv("mlp_hidden", std::to_string(cfg.mlp_hidden));
    kv("aug_brightness", fmt_double(cfg.augment.brightness_delta));
    kv("aug_contrast_lo", fmt_double(cfg.augment.contrast_lo));
    kv("aug_contrast_hi", fmt_double(cfg.augment.contrast_hi));
    kv("aug_noise_sigma_lo", fmt_double(cfg.augment.noise_sigma_lo));
    kv("aug_noise_sigma_hi", fmt_double(cfg.augment.noise_sigma_hi));
    kv("threads", std::to_string(cfg.threads));
    // fixed implementation choices, recorded for reproducibility
    kv("optimizer", "sgd_momentum");
    kv("activation", "gelu");
    kv("upsample", "bilinear");
    kv("normalization", "instance_affine");
    return out;
}

} // namespace protomark
