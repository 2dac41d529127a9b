#ifndef PROTOMARK_BACKBONE_HPP
#define PROTOMARK_BACKBONE_HPP

#include <cstdint>

#include "protomark/autodiff.hpp"
#include "protomark/config.hpp"
#include "protomark/image.hpp"
#include "protomark/params.hpp"

namespace protomark {

// Composite full-resolution feature map, channel-major [D, H, W].
struct FeatureMap {
    int d = 0;
    int h = 0;
    int w = 0;
    std::vector<double> values;

    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    const double* channel(int c) const {
        return values.data() + static_cast<std::size_t>(c) * h * w;
    }
};

// Three-level encoder-decoder with skip connections. The decoder emits maps
// at 1/4, 1/2 and full resolution with cfg.d1/d2/d3 channels; the composite
// feature map concatenates them as [up4(F1), up2(F2), F3], D = d1+d2+d3.
// Each conv is 3x3 followed by per-channel instance normalization (affine)
// and GELU. GELU keeps the whole network smooth, which the finite-difference
// gradient gates require.
ParamSet init_backbone(const RunConfig& cfg, std::uint64_t seed);

// Builds the forward graph on the tape. image must be [1, H, W] with H, W
// divisible by 4 (deepest level sits at 1/4 resolution).
ad::Var extract_features(ad::Tape& tape, const ParamVars& params, ad::Var image,
                         const RunConfig& cfg);

// Value-only convenience: runs a throwaway tape.
FeatureMap extract_features(const ParamSet& params, const GrayImage& img, const RunConfig& cfg);

// Fan-in-scaled uniform initialization, deterministic in (shapes, seed).
void init_params_fan_in(ParamSet& params, std::uint64_t seed);

} // namespace protomark

#endif
