#include "protomark/relation.hpp"

#include <cmath>

#include "protomark/backbone.hpp"
#include "protomark/errors.hpp"

namespace protomark {

MaskSpec draw_mask(int k, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw PreconditionError("mask ratio must lie in [0, 1)");
    MaskSpec spec;
    spec.ratio = ratio;
    if (ratio == 0.0 || k < 2) return spec;
    int count = static_cast<int>(std::lround(ratio * k));
    count = std::max(1, std::min(count, k - 1));
    spec.masked_indices = rng.sample_without_replacement(k, count);
    return spec;
}

std::pair<PrototypeSet, MaskSpec> mask_prototypes(const PrototypeSet& p, double ratio, Rng& rng) {
    MaskSpec spec = draw_mask(p.k, ratio, rng);
    PrototypeSet out = p;
    for (int idx : spec.masked_indices) {
        for (int c = 0; c < p.d; ++c) out.at(idx, c) = 0.0;
    }
    return {std::move(out), std::move(spec)};
}

ad::Var apply_mask(ad::Tape& tape, ad::Var protos, const MaskSpec& spec) {
    const int k = tape.dims(protos)[0];
    if (spec.masked_indices.empty()) return protos;
    return tape.mask_rows(protos, spec.row_mask_keep(k));
}

ParamSet init_pos_embedder(int hidden, int dim, std::uint64_t seed) {
    if (hidden < 1 || dim < 1) throw ConfigError("pos embedder dims must be >= 1");
    ParamSet p;
    p.add("pos.l1.w", {2, hidden});
    p.add("pos.l1.b", {hidden});
    p.add("pos.l2.w", {hidden, dim});
    p.add("pos.l2.b", {dim});
    init_params_fan_in(p, seed);
    return p;
}

std::vector<Point> normalize_coords(const std::vector<Point>& px_coords, int h, int w) {
    std::vector<Point> out(px_coords.size());
    for (std::size_t i = 0; i < px_coords.size(); ++i) {
        out[i].x = px_coords[i].x / (w - 1.0);
        out[i].y = px_coords[i].y / (h - 1.0);
    }
    return out;
}

ad::Var encode_positions(ad::Tape& tape, const ParamVars& params,
                         const std::vector<Point>& normalized_coords) {
    std::vector<double> buf;
    buf.reserve(normalized_coords.size() * 2);
    for (std::size_t i = 0; i < normalized_coords.size(); ++i) {
        const Point& p = normalized_coords[i];
        if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
            throw PreconditionError("encode_positions: coordinate " + std::to_string(i) + " (" +
                                    std::to_string(p.x) + "," + std::to_string(p.y) +
                                    ") not normalized to [0,1]");
        buf.push_back(p.x);
        buf.push_back(p.y);
    }
    ad::Var x = tape.constant(buf, {static_cast<int>(normalized_coords.size()), 2});
    ad::Var h = tape.gelu(tape.linear(x, params.at("pos.l1.w"), params.at("pos.l1.b")));
    return tape.linear(h, params.at("pos.l2.w"), params.at("pos.l2.b"));
}

ParamSet init_relation_head(int dim, int heads, std::uint64_t seed) {
    if (heads < 1) throw ConfigError("relation head count must be >= 1");
    if (dim % heads != 0)
        throw ConfigError("relation head dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
    ParamSet p;
    for (const char* proj : {"q", "k", "v", "o"}) {
        p.add(std::string("msa.") + proj + ".w", {dim, dim});
        p.add(std::string("msa.") + proj + ".b", {dim});
    }
    init_params_fan_in(p, seed);
    return p;
}

ad::Var multihead_self_attention(ad::Tape& tape, const ParamVars& params, ad::Var tokens,
                                 int heads, std::vector<std::vector<double>>* attn_out) {
    const auto& td = tape.dims(tokens);
    if (td.size() != 2) throw ShapeError("multihead_self_attention: expected tokens [K,D]");
    const int dim = td[1];
    if (dim % heads != 0) throw ShapeError("multihead_self_attention: D not divisible by heads");
    const int dh = dim / heads;

    ad::Var q = tape.linear(tokens, params.at("msa.q.w"), params.at("msa.q.b"));
    ad::Var k = tape.linear(tokens, params.at("msa.k.w"), params.at("msa.k.b"));
    ad::Var v = tape.linear(tokens, params.at("msa.v.w"), params.at("msa.v.b"));

    if (attn_out) attn_out->clear();
    std::vector<ad::Var> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        ad::Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        ad::Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        ad::Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        ad::Var attn = tape.softmax_rows(scores);
        if (attn_out) attn_out->push_back(tape.val(attn));
        head_outputs.push_back(tape.matmul(attn, vh));
    }
    ad::Var merged = heads == 1 ? head_outputs[0] : tape.concat_cols(head_outputs);
    return tape.linear(merged, params.at("msa.o.w"), params.at("msa.o.b"));
}

ad::Var reconstruct_prototypes(ad::Tape& tape, const ParamVars& head_params, ad::Var masked,
                               ad::Var e_pos, int heads,
                               std::vector<std::vector<double>>* attn_out) {
    if (tape.dims(masked) != tape.dims(e_pos))
        throw ShapeError("reconstruct_prototypes: prototype/embedding shapes disagree");
    ad::Var tokens = tape.add(masked, e_pos);
    return multihead_self_attention(tape, head_params, tokens, heads, attn_out);
}

} // namespace protomark
