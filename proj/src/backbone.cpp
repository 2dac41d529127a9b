#include "protomark/backbone.hpp"

#include <cmath>

#include "protomark/errors.hpp"
#include "protomark/rng.hpp"

namespace protomark {

namespace {

// conv + instance norm (affine) + GELU parameter block
void add_conv_block(ParamSet& p, const std::string& name, int in_ch, int out_ch) {
    p.add(name + ".w", {out_ch, in_ch, 3, 3});
    p.add(name + ".b", {out_ch});
    p.add(name + ".gamma", {out_ch}, 1.0);
    p.add(name + ".beta", {out_ch});
}

ad::Var conv_block(ad::Tape& t, const ParamVars& p, const std::string& name, ad::Var x,
                   int stride) {
    ad::Var y = t.conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride);
    y = t.instance_norm(y, p.at(name + ".gamma"), p.at(name + ".beta"));
    return t.gelu(y);
}

} // namespace

void init_params_fan_in(ParamSet& params, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < params.count(); ++i) {
        const std::string& name = params.name(i);
        Tensor& t = params.tensor(i);
        const bool is_weight =
            name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
        if (!is_weight) continue; // biases zero, gamma already 1
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < t.shape.size(); ++d)
            fan_in *= static_cast<std::size_t>(t.shape[d]);
        // 2-d tensors are row-major [in, out]: fan-in is the leading dim.
        if (t.shape.size() == 2) fan_in = static_cast<std::size_t>(t.shape[0]);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.uniform(-limit, limit);
    }
}

ParamSet init_backbone(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.d1 < 1 || cfg.d2 < 1 || cfg.d3 < 1)
        throw ConfigError("backbone widths must be >= 1");
    ParamSet p;
    add_conv_block(p, "enc1a", 1, cfg.d3);
    add_conv_block(p, "enc1b", cfg.d3, cfg.d3);
    add_conv_block(p, "down1", cfg.d3, cfg.d2); // stride 2
    add_conv_block(p, "enc2", cfg.d2, cfg.d2);
    add_conv_block(p, "down2", cfg.d2, cfg.d1); // stride 2
    add_conv_block(p, "enc3", cfg.d1, cfg.d1);
    add_conv_block(p, "dec3", cfg.d1, cfg.d1);             // -> F1 at 1/4
    add_conv_block(p, "dec2", cfg.d1 + cfg.d2, cfg.d2);    // -> F2 at 1/2
    add_conv_block(p, "dec1", cfg.d2 + cfg.d3, cfg.d3);    // -> F3 at full
    init_params_fan_in(p, seed);
    return p;
}

ad::Var extract_features(ad::Tape& tape, const ParamVars& params, ad::Var image,
                         const RunConfig& cfg) {
    const auto& d = tape.dims(image);
    if (d.size() != 3 || d[0] != 1) throw ShapeError("extract_features: expected image [1,H,W]");
    const int H = d[1], W = d[2];
    if (H % 4 != 0 || W % 4 != 0)
        throw ShapeError("extract_features: image dims " + std::to_string(H) + "x" +
                         std::to_string(W) + " must be divisible by 4");

    ad::Var e1 = conv_block(tape, params, "enc1a", image, 1);
    e1 = conv_block(tape, params, "enc1b", e1, 1);
    ad::Var e2 = conv_block(tape, params, "down1", e1, 2);
    e2 = conv_block(tape, params, "enc2", e2, 1);
    ad::Var e3 = conv_block(tape, params, "down2", e2, 2);
    e3 = conv_block(tape, params, "enc3", e3, 1);

    ad::Var f1 = conv_block(tape, params, "dec3", e3, 1); // [d1, H/4, W/4]
    ad::Var d2in = tape.concat_ch({tape.upsample_bilinear(f1, H / 2, W / 2), e2});
    ad::Var f2 = conv_block(tape, params, "dec2", d2in, 1); // [d2, H/2, W/2]
    ad::Var d1in = tape.concat_ch({tape.upsample_bilinear(f2, H, W), e1});
    ad::Var f3 = conv_block(tape, params, "dec1", d1in, 1); // [d3, H, W]

    (void)cfg;
    return tape.concat_ch(
        {tape.upsample_bilinear(f1, H, W), tape.upsample_bilinear(f2, H, W), f3});
}

FeatureMap extract_features(const ParamSet& params, const GrayImage& img, const RunConfig& cfg) {
    ad::Tape tape;
    ParamVars vars = push_params(tape, params);
    ad::Var image = tape.constant(img.values, {1, img.height, img.width});
    ad::Var f = extract_features(tape, vars, image, cfg);
    FeatureMap out;
    out.d = tape.dims(f)[0];
    out.h = tape.dims(f)[1];
    out.w = tape.dims(f)[2];
    out.values = tape.val(f);
    return out;
}

} // namespace protomark
