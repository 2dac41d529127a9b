#include "protomark/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "protomark/dataset_io.hpp"
#include "protomark/errors.hpp"

namespace protomark {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Canvas {
    int n;
    std::vector<double> px;
    explicit Canvas(int n_) : n(n_), px(static_cast<std::size_t>(n_) * n_, 0.0) {}
    double& at(int y, int x) { return px[static_cast<std::size_t>(y) * n + x]; }
};

void stamp_max(Canvas& c, double cx, double cy, double sigma, double amp) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(cx) - r), x1 = std::min(c.n - 1, static_cast<int>(cx) + r);
    const int y0 = std::max(0, static_cast<int>(cy) - r), y1 = std::min(c.n - 1, static_cast<int>(cy) + r);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const double v = amp * std::exp(-d2 * inv);
            if (v > c.at(y, x)) c.at(y, x) = v;
        }
}

void stamp_add(Canvas& c, double cx, double cy, double sigma, double amp) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(cx) - r), x1 = std::min(c.n - 1, static_cast<int>(cx) + r);
    const int y0 = std::max(0, static_cast<int>(cy) - r), y1 = std::min(c.n - 1, static_cast<int>(cy) + r);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            c.at(y, x) += amp * std::exp(-d2 * inv);
        }
}

void stroke_segment(Canvas& c, Point a, Point b, double sigma, double amp) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int steps = std::max(1, static_cast<int>(len / 0.35));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        stamp_max(c, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), sigma, amp);
    }
}

// Quadratic Bezier through (p0, ctrl, p1).
Point bezier(const Point& p0, const Point& ctrl, const Point& p1, double t) {
    const double u = 1.0 - t;
    return {u * u * p0.x + 2.0 * u * t * ctrl.x + t * t * p1.x,
            u * u * p0.y + 2.0 * u * t * ctrl.y + t * t * p1.y};
}

void stroke_bezier(Canvas& c, const Point& p0, const Point& ctrl, const Point& p1, double sigma,
                   double amp) {
    const double approx_len = std::hypot(p1.x - p0.x, p1.y - p0.y) * 1.4;
    const int steps = std::max(2, static_cast<int>(approx_len / 0.35));
    for (int i = 0; i <= steps; ++i)
        stamp_max(c, bezier(p0, ctrl, p1, static_cast<double>(i) / steps).x,
                  bezier(p0, ctrl, p1, static_cast<double>(i) / steps).y, sigma, amp);
}

void stroke_ellipse(Canvas& c, Point center, double rx, double ry, double sigma, double amp) {
    const double approx_len = kTwoPi * std::max(rx, ry);
    const int steps = std::max(8, static_cast<int>(approx_len / 0.35));
    for (int i = 0; i < steps; ++i) {
        const double th = kTwoPi * i / steps;
        stamp_max(c, center.x + rx * std::cos(th), center.y + ry * std::sin(th), sigma, amp);
    }
}

// Smooth low-frequency vector field used for the adolescent landmark shift.
struct OffsetField {
    double amp = 0.0;
    double fx1 = 0.0, fy1 = 0.0, ph1 = 0.0;
    double fx2 = 0.0, fy2 = 0.0, ph2 = 0.0;

    Point at(const Point& p, double scale) const {
        const double u = p.x / scale, v = p.y / scale;
        return {amp * std::sin(kTwoPi * (fx1 * u + fy1 * v) + ph1),
                amp * std::sin(kTwoPi * (fx2 * u + fy2 * v) + ph2)};
    }
};

struct Geometry {
    Point cr_center;
    double cr_rx, cr_ry;
    Point gonion, jaw_ctrl, menton;
    Point teeth_a, teeth_b;
    double stroke_sigma;
    double cr_amp, jaw_amp, tooth_amp;
    double bg_base, bg_gx, bg_gy, noise_sigma;
    double tooth_len;
};

Geometry draw_geometry(Rng& rng, double S) {
    Geometry g;
    const double scale = rng.uniform(0.92, 1.08);
    const double tx = rng.uniform(-0.03, 0.03), ty = rng.uniform(-0.03, 0.03);
    auto place = [&](double nx, double ny) -> Point {
        return {(0.5 + (nx - 0.5) * scale + tx) * (S - 1.0),
                (0.5 + (ny - 0.5) * scale + ty) * (S - 1.0)};
    };
    g.cr_center = place(0.50, 0.40);
    g.cr_rx = 0.32 * scale * rng.uniform(0.95, 1.05) * (S - 1.0);
    g.cr_ry = 0.26 * scale * rng.uniform(0.95, 1.05) * (S - 1.0);
    auto jitter = [&](Point p, double j) -> Point {
        return {p.x + rng.uniform(-j, j) * S, p.y + rng.uniform(-j, j) * S};
    };
    g.gonion = jitter(place(0.76, 0.58), 0.015);
    g.jaw_ctrl = jitter(place(0.70, 0.86), 0.02);
    g.menton = jitter(place(0.40, 0.80), 0.015);
    g.teeth_a = jitter(place(0.46, 0.645), 0.012);
    g.teeth_b = jitter(place(0.70, 0.615), 0.012);
    g.stroke_sigma = rng.uniform(1.0, 1.6) * S / 128.0;
    g.cr_amp = rng.uniform(0.55, 0.80);
    g.jaw_amp = rng.uniform(0.50, 0.75);
    g.tooth_amp = rng.uniform(0.62, 0.90);
    g.bg_base = rng.uniform(0.06, 0.12);
    g.bg_gx = rng.uniform(-0.04, 0.04);
    g.bg_gy = rng.uniform(-0.04, 0.04);
    g.noise_sigma = rng.uniform(0.005, 0.015);
    g.tooth_len = rng.uniform(0.035, 0.05) * S;
    return g;
}

// Anchor roles, fixed across domains: 0 cranium top, 1 cranium back,
// 2 forehead, 3 nasal front, 4 gonion, 5 menton, 6.. tooth row.
std::vector<double> structural_angles() { return {-1.5707963, 3.14159265, -0.83, -0.17}; }

Point ellipse_point(const Geometry& g, double th) {
    return {g.cr_center.x + g.cr_rx * std::cos(th), g.cr_center.y + g.cr_ry * std::sin(th)};
}

std::vector<Point> template_anchors(const Geometry& g, int k) {
    std::vector<Point> a;
    for (double th : structural_angles()) {
        if (static_cast<int>(a.size()) == k) return a;
        a.push_back(ellipse_point(g, th));
    }
    if (static_cast<int>(a.size()) < k) a.push_back(g.gonion);
    if (static_cast<int>(a.size()) < k) a.push_back(g.menton);
    const int teeth = k - static_cast<int>(a.size());
    for (int t = 0; t < teeth; ++t) {
        const double s = teeth == 1 ? 0.5 : static_cast<double>(t) / (teeth - 1);
        a.push_back({g.teeth_a.x + s * (g.teeth_b.x - g.teeth_a.x),
                     g.teeth_a.y + s * (g.teeth_b.y - g.teeth_a.y)});
    }
    return a;
}

} // namespace

void SynthConfig::validate() const {
    if (image_size < 16 || image_size % 4 != 0)
        throw ConfigError("synth image_size must be >= 16 and divisible by 4");
    if (k < 2) throw ConfigError("synth k must be >= 2");
    if (count_adult < 1 || count_adolescent < 1) throw ConfigError("synth counts must be >= 1");
    if (shift_px < 0.0) throw ConfigError("synth shift_px must be >= 0");
    if (eruption_density < 0.0 || eruption_density > 1.0)
        throw ConfigError("synth eruption_density must lie in [0, 1]");
    if (spacing_mm_per_px <= 0.0) throw ConfigError("synth spacing must be > 0");
}

Sample generate_sample(const SynthConfig& cfg, Group domain, Rng& rng) {
    return generate_sample(cfg, domain, rng, nullptr);
}

Sample generate_sample(const SynthConfig& cfg, Group domain, Rng& rng,
                       std::vector<Point>* unshifted_anchors) {
    cfg.validate();
    const double S = static_cast<double>(cfg.image_size);
    // Independent sub-streams: geometry draws are identical across domains for
    // the same incoming rng state; shift and distractors never disturb them.
    Rng rng_geom(rng.next_u64());
    Rng rng_domain(rng.next_u64());

    const int n_structural = std::min(6, cfg.k);
    const int n_teeth_anchored = cfg.k - n_structural;
    const int n_teeth = std::max(4, n_teeth_anchored);

    for (int attempt = 0; attempt < 100; ++attempt) {
        const Geometry g = draw_geometry(rng_geom, S);
        std::vector<Point> anchors = template_anchors(g, cfg.k);
        std::vector<Point> shifted = anchors;

        OffsetField field;
        if (domain == Group::adolescent && cfg.shift_px > 0.0) {
            field.amp = cfg.shift_px * rng_domain.uniform(0.7, 1.3);
            field.fx1 = rng_domain.uniform(0.3, 1.0);
            field.fy1 = rng_domain.uniform(0.3, 1.0);
            field.ph1 = rng_domain.uniform(0.0, kTwoPi);
            field.fx2 = rng_domain.uniform(0.3, 1.0);
            field.fy2 = rng_domain.uniform(0.3, 1.0);
            field.ph2 = rng_domain.uniform(0.0, kTwoPi);

            const auto angles = structural_angles();
            for (std::size_t i = 0; i < shifted.size(); ++i) {
                const Point d = field.at(anchors[i], S);
                if (i < angles.size()) {
                    // Cranium anchors slide along the outline: project the
                    // field onto the local tangent and advance the angle.
                    const double th = angles[i];
                    const double txv = -g.cr_rx * std::sin(th);
                    const double tyv = g.cr_ry * std::cos(th);
                    const double tlen = std::hypot(txv, tyv);
                    const double along = (d.x * txv + d.y * tyv) / (tlen * tlen);
                    shifted[i] = ellipse_point(g, th + along);
                } else {
                    shifted[i] = {anchors[i].x + d.x, anchors[i].y + d.y};
                }
            }
        }

        bool in_bounds = true;
        for (const Point& p : shifted)
            if (!(p.x >= 1.0 && p.x <= S - 2.0 && p.y >= 1.0 && p.y <= S - 2.0)) in_bounds = false;
        if (!in_bounds) continue;

        // ---- render ----
        Canvas canvas(cfg.image_size);
        for (int y = 0; y < cfg.image_size; ++y)
            for (int x = 0; x < cfg.image_size; ++x)
                canvas.at(y, x) = g.bg_base + g.bg_gx * (x / S - 0.5) + g.bg_gy * (y / S - 0.5);

        Canvas structure(cfg.image_size);
        stroke_ellipse(structure, g.cr_center, g.cr_rx, g.cr_ry, g.stroke_sigma, g.cr_amp);

        // Jaw arc through the (possibly shifted) gonion/menton anchors.
        Point gonion = g.gonion, menton = g.menton, jaw_ctrl = g.jaw_ctrl;
        if (domain == Group::adolescent && cfg.shift_px > 0.0) {
            if (n_structural > 4) gonion = shifted[4];
            if (n_structural > 5) menton = shifted[5];
            const Point dc = field.at(g.jaw_ctrl, S);
            jaw_ctrl = {g.jaw_ctrl.x + dc.x, g.jaw_ctrl.y + dc.y};
        }
        stroke_bezier(structure, gonion, jaw_ctrl, menton, g.stroke_sigma, g.jaw_amp);

        // Tooth row: ticks perpendicular-ish to the row direction. Anchored
        // teeth sit at the shifted anchor positions; filler teeth follow the
        // template row.
        const double row_dx = g.teeth_b.x - g.teeth_a.x;
        const double row_dy = g.teeth_b.y - g.teeth_a.y;
        const double row_len = std::hypot(row_dx, row_dy);
        const double nx = -row_dy / row_len, ny = row_dx / row_len; // normal, points down-ish
        for (int t = 0; t < n_teeth; ++t) {
            const double s = n_teeth == 1 ? 0.5 : static_cast<double>(t) / (n_teeth - 1);
            Point root{g.teeth_a.x + s * row_dx, g.teeth_a.y + s * row_dy};
            double len = g.tooth_len;
            if (t < n_teeth_anchored) root = shifted[static_cast<std::size_t>(n_structural + t)];
            if (domain == Group::adolescent) len *= rng_domain.uniform(0.45, 0.8); // erupting
            stroke_segment(structure, root, {root.x + nx * len, root.y + ny * len}, g.stroke_sigma,
                           g.tooth_amp);
        }

        // Adolescent-only distractors near the tooth row: buds below the gum
        // line and occasional baby-tooth marks beside the anchors.
        if (domain == Group::adolescent) {
            for (int t = 0; t < n_teeth; ++t) {
                const double s = n_teeth == 1 ? 0.5 : static_cast<double>(t) / (n_teeth - 1);
                Point root{g.teeth_a.x + s * row_dx, g.teeth_a.y + s * row_dy};
                if (t < n_teeth_anchored) root = shifted[static_cast<std::size_t>(n_structural + t)];
                if (rng_domain.uniform() < cfg.eruption_density) {
                    const int blobs = 1 + static_cast<int>(rng_domain.uniform_index(2));
                    for (int bi = 0; bi < blobs; ++bi) {
                        const double ox = rng_domain.normal(0.0, 2.5 * S / 128.0);
                        const double oy = rng_domain.normal(0.0, 2.0 * S / 128.0) + 3.5 * S / 128.0;
                        stamp_max(structure, root.x + ox * 0.7 + nx * oy, root.y + oy * 0.7 + ny * ox * 0.3,
                                  rng_domain.uniform(1.0, 2.2) * S / 128.0,
                                  rng_domain.uniform(0.40, 0.70));
                    }
                }
                if (rng_domain.uniform() < 0.5) {
                    const double side = rng_domain.uniform() < 0.5 ? -1.0 : 1.0;
                    const double off = side * row_len / (2.5 * n_teeth);
                    Point baby{root.x + off * row_dx / row_len, root.y + off * row_dy / row_len};
                    stroke_segment(structure, baby,
                                   {baby.x + nx * g.tooth_len * 0.5, baby.y + ny * g.tooth_len * 0.5},
                                   g.stroke_sigma * 0.8, g.tooth_amp * 0.8);
                }
            }
        }

        Sample out;
        out.image = GrayImage(cfg.image_size, cfg.image_size);
        for (std::size_t i = 0; i < canvas.px.size(); ++i) {
            double v = canvas.px[i] + structure.px[i] + rng_domain.normal(0.0, g.noise_sigma);
            out.image.values[i] = std::clamp(v, 0.0, 1.0);
        }
        out.landmarks.coords = shifted;
        out.landmarks.spacing_mm_per_px = cfg.spacing_mm_per_px;
        out.landmarks.group = domain;
        out.resize.native_h = cfg.image_size;
        out.resize.native_w = cfg.image_size;
        out.resize.native_spacing_mm_per_px = cfg.spacing_mm_per_px;
        if (unshifted_anchors) *unshifted_anchors = anchors;
        return out;
    }
    throw Error("generate_sample: landmark placement failed after 100 attempts");
}

void generate_corpus(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    Dataset ds;
    ds.num_landmarks = cfg.k;
    Rng corpus_rng(cfg.seed);
    char id[64];
    for (int i = 0; i < cfg.count_adult; ++i) {
        Rng sample_rng(corpus_rng.next_u64());
        Sample s = generate_sample(cfg, Group::adult, sample_rng);
        std::snprintf(id, sizeof(id), "adult_%04d", i);
        s.id = id;
        ds.samples.push_back(std::move(s));
    }
    for (int i = 0; i < cfg.count_adolescent; ++i) {
        Rng sample_rng(corpus_rng.next_u64());
        Sample s = generate_sample(cfg, Group::adolescent, sample_rng);
        std::snprintf(id, sizeof(id), "adolescent_%04d", i);
        s.id = id;
        ds.samples.push_back(std::move(s));
    }
    save_corpus(ds, out_dir);
}

} // namespace protomark
