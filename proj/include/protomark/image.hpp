#ifndef PROTOMARK_IMAGE_HPP
#define PROTOMARK_IMAGE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "protomark/errors.hpp"

namespace protomark {

// Single-channel image, row-major, values in [0, 1].
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    GrayImage() = default;
    GrayImage(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }

    // Full invariant check: dims >= 8, values finite and in [0, 1].
    void validate(const std::string& context) const {
        if (height < 8 || width < 8)
            throw ValidationError(context + ": image dims " + std::to_string(height) + "x" +
                                  std::to_string(width) + " below minimum 8x8");
        if (values.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
            throw ValidationError(context + ": pixel buffer size mismatch");
        for (double v : values) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw ValidationError(context + ": pixel value " + std::to_string(v) +
                                      " outside [0,1]");
        }
    }
};

// Bilinear resize with align-corners coordinate mapping. Align-corners keeps
// landmark coordinates on the [0, W-1] x [0, H-1] grid under the same map.
GrayImage resize_bilinear(const GrayImage& in, int out_h, int out_w);

} // namespace protomark

#endif
