#include "protomark/heatmap.hpp"

#include <cmath>

#include "protomark/errors.hpp"

namespace protomark {

HeatmapStack render_heatmaps(const LandmarkSet& lms, int h, int w, double sigma_px) {
    if (sigma_px <= 0.0) throw PreconditionError("sigma_px must be > 0");
    for (int k = 0; k < lms.k(); ++k) {
        const Point& p = lms.coords[static_cast<std::size_t>(k)];
        if (!(p.x >= 0.0 && p.x <= w - 1.0 && p.y >= 0.0 && p.y <= h - 1.0))
            throw BoundsError("landmark " + std::to_string(k) + " (" + std::to_string(p.x) + "," +
                              std::to_string(p.y) + ") outside " + std::to_string(w) + "x" +
                              std::to_string(h) + " map");
    }
    HeatmapStack stack(lms.k(), h, w);
    const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int k = 0; k < lms.k(); ++k) {
        const Point& p = lms.coords[static_cast<std::size_t>(k)];
        double* m = stack.channel(k);
        for (int y = 0; y < h; ++y) {
            const double dy2 = (y - p.y) * (y - p.y);
            for (int x = 0; x < w; ++x) {
                const double dx = x - p.x;
                const double v = std::exp(-(dy2 + dx * dx) * inv);
                m[static_cast<std::size_t>(y) * w + x] = v < kHeatmapTruncation ? 0.0 : v;
            }
        }
    }
    return stack;
}

std::vector<Point> decode_landmarks(const SimilarityStack& s) {
    std::vector<Point> out(static_cast<std::size_t>(s.k));
    for (int k = 0; k < s.k; ++k) {
        const double* m = s.channel(k);
        std::size_t best = 0;
        double best_v = m[0];
        const std::size_t n = s.plane_size();
        for (std::size_t i = 1; i < n; ++i) {
            if (m[i] > best_v) {
                best_v = m[i];
                best = i;
            }
        }
        out[static_cast<std::size_t>(k)] = {static_cast<double>(best % static_cast<std::size_t>(s.w)),
                                            static_cast<double>(best / static_cast<std::size_t>(s.w))};
    }
    return out;
}

} // namespace protomark
