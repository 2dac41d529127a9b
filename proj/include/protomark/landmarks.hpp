#ifndef PROTOMARK_LANDMARKS_HPP
#define PROTOMARK_LANDMARKS_HPP

#include <string>
#include <vector>

#include "protomark/errors.hpp"
#include "protomark/image.hpp"

namespace protomark {

struct Point {
    double x = 0.0; // column
    double y = 0.0; // row
};

enum class Group { adult, adolescent };

inline const char* group_name(Group g) { return g == Group::adult ? "adult" : "adolescent"; }

inline Group group_from_name(const std::string& s) {
    if (s == "adult") return Group::adult;
    if (s == "adolescent") return Group::adolescent;
    throw ValidationError("unknown group '" + s + "' (expected adult|adolescent)");
}

// K ordered landmark coordinates in pixels. Origin at pixel (0,0) top-left,
// x = column, y = row, sub-pixel values allowed.
struct LandmarkSet {
    std::vector<Point> coords;
    double spacing_mm_per_px = 1.0; // isotropic
    Group group = Group::adult;

    int k() const { return static_cast<int>(coords.size()); }

    void validate(int image_h, int image_w, const std::string& context) const {
        if (spacing_mm_per_px <= 0.0)
            throw ValidationError(context + ": spacing_mm_per_px must be > 0");
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const Point& p = coords[i];
            if (!(p.x >= 0.0 && p.x <= image_w - 1.0 && p.y >= 0.0 && p.y <= image_h - 1.0))
                throw ValidationError(context + ": landmark " + std::to_string(i) + " (" +
                                      std::to_string(p.x) + "," + std::to_string(p.y) +
                                      ") out of bounds for " + std::to_string(image_w) + "x" +
                                      std::to_string(image_h) + " image");
        }
    }
};

// Records how a sample was rescaled at load time. When scale_x != scale_y the
// adjusted spacing is the mean-factor approximation.
struct ResizeInfo {
    bool resized = false;
    int native_h = 0;
    int native_w = 0;
    double scale_x = 1.0; // working = native * scale
    double scale_y = 1.0;
    double native_spacing_mm_per_px = 0.0;
    bool spacing_approximated = false;
};

struct Sample {
    GrayImage image;
    LandmarkSet landmarks;
    std::string id;
    ResizeInfo resize;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_landmarks = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t count_group(Group g) const {
        std::size_t n = 0;
        for (const auto& s : samples)
            if (s.landmarks.group == g) ++n;
        return n;
    }
};

} // namespace protomark

#endif
