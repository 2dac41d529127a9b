#ifndef PROTOMARK_HEATMAP_HPP
#define PROTOMARK_HEATMAP_HPP

#include <vector>

#include "protomark/landmarks.hpp"

namespace protomark {

// K stacked H x W maps, row-major per channel. Shared layout for Gaussian
// targets (values in [0,1]) and raw similarity responses (unbounded).
struct MapStack {
    int k = 0;
    int h = 0;
    int w = 0;
    std::vector<double> maps;

    MapStack() = default;
    MapStack(int k_, int h_, int w_)
        : k(k_), h(h_), w(w_),
          maps(static_cast<std::size_t>(k_) * h_ * w_, 0.0) {}

    double& at(int ch, int y, int x) {
        return maps[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    double at(int ch, int y, int x) const {
        return maps[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    const double* channel(int ch) const { return maps.data() + static_cast<std::size_t>(ch) * h * w; }
    double* channel(int ch) { return maps.data() + static_cast<std::size_t>(ch) * h * w; }
    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
};

using HeatmapStack = MapStack;
using SimilarityStack = MapStack;

// Gaussian targets: channel k holds exp(-((i-y_k)^2 + (j-x_k)^2) / (2 sigma^2))
// at row i, col j; peak amplitude 1 at integral coordinates. Values below
// 1e-6 are clamped to zero to bound the support.
HeatmapStack render_heatmaps(const LandmarkSet& lms, int h, int w, double sigma_px);

inline constexpr double kHeatmapTruncation = 1e-6;

// Per-channel argmax; ties broken by the smallest row-major linear index.
std::vector<Point> decode_landmarks(const SimilarityStack& s);

} // namespace protomark

#endif
