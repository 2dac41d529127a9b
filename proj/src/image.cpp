#include "protomark/image.hpp"

#include <algorithm>

namespace protomark {

GrayImage resize_bilinear(const GrayImage& in, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
    if (in.height == out_h && in.width == out_w) return in;
    GrayImage out(out_h, out_w);
    const double sy = out_h > 1 ? static_cast<double>(in.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), in.height - 1);
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), in.width - 1);
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            const double v = (1.0 - wy) * ((1.0 - wx) * in.at(y0, x0) + wx * in.at(y0, x1)) +
                             wy * ((1.0 - wx) * in.at(y1, x0) + wx * in.at(y1, x1));
            out.at(y, x) = v;
        }
    }
    return out;
}

} // namespace protomark
