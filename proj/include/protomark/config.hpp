#ifndef PROTOMARK_CONFIG_HPP
#define PROTOMARK_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace protomark {

// Photometric augmentation ranges. Outputs are clipped to [0,1]; geometry is
// never touched.
struct AugmentSpec {
    double brightness_delta = 0.1; // delta ~ U(-b, +b)
    double contrast_lo = 0.9;      // factor ~ U(lo, hi)
    double contrast_hi = 1.1;
    double noise_sigma_lo = 0.0; // per-image sigma ~ U(lo, hi), then pixel noise ~ N(0, sigma)
    double noise_sigma_hi = 0.02;

    bool is_identity() const {
        return brightness_delta == 0.0 && contrast_lo == 1.0 && contrast_hi == 1.0 &&
               noise_sigma_lo == 0.0 && noise_sigma_hi == 0.0;
    }
};

// Resolved run configuration shared by training, evaluation and the CLI.
struct RunConfig {
    int image_h = 512;
    int image_w = 512;
    int num_landmarks = 10; // K
    double sigma_px = 6.0;  // heatmap width at image_h x image_w

    double alpha = 0.99;  // EMA coefficient
    int batch_size = 8;   // |B|
    double lambda1 = 1.0; // alignment weight
    double lambda2 = 3.0; // relation mining weight
    double mask_ratio = 0.7;
    bool mine_masked_only = false; // experimental switch: supervise masked rows only

    double lr = 0.001;
    double lr_decay_factor = 0.1;
    int lr_decay_every_epochs = 50;
    int epochs = 150;
    double momentum = 0.9;

    std::uint64_t seed = 0;

    int d1 = 64; // quarter-resolution channel width
    int d2 = 32; // half-resolution channel width
    int d3 = 16; // full-resolution channel width
    int msa_heads = 4;
    int mlp_hidden = 0; // 0 -> defaults to feature dim D

    AugmentSpec augment;
    int threads = 0; // 0 -> hardware concurrency; results identical regardless

    int feature_dim() const { return d1 + d2 + d3; }
    int mlp_hidden_resolved() const { return mlp_hidden > 0 ? mlp_hidden : feature_dim(); }

    void validate() const;
};

// Shipped defaults at the published training scale.
RunConfig paper_preset();
// Reduced widths and resolution for CPU-scale experiments.
RunConfig desk_preset();
// Smallest config that exercises every code path; used by numeric tests.
RunConfig micro_preset();

RunConfig preset_by_name(const std::string& name);

// Plain-text key=value config file. '#' starts a comment, unknown keys are
// rejected. Values override fields of `base`.
RunConfig load_config_file(const std::string& path, const RunConfig& base);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

// key=value lines covering every field, suitable for manifests.
std::vector<std::string> config_lines(const RunConfig& cfg);

} // namespace protomark

#endif
