#ifndef PROTOMARK_RELATION_HPP
#define PROTOMARK_RELATION_HPP

#include <cstdint>
#include <vector>

#include "protomark/autodiff.hpp"
#include "protomark/landmarks.hpp"
#include "protomark/params.hpp"
#include "protomark/prototypes.hpp"
#include "protomark/rng.hpp"

namespace protomark {

// Masked row indices for one relation-mining pass. For R > 0 the count is
// round(R*K) clamped to [1, K-1]; R = 0 masks nothing.
struct MaskSpec {
    std::vector<int> masked_indices; // sorted, unique
    double ratio = 0.0;

    std::vector<double> row_mask_keep(int k) const {
        std::vector<double> m(static_cast<std::size_t>(k), 1.0);
        for (int i : masked_indices) m[static_cast<std::size_t>(i)] = 0.0;
        return m;
    }
    std::vector<double> row_mask_dropped(int k) const {
        std::vector<double> m(static_cast<std::size_t>(k), 0.0);
        for (int i : masked_indices) m[static_cast<std::size_t>(i)] = 1.0;
        return m;
    }
};

MaskSpec draw_mask(int k, double ratio, Rng& rng);

// Value-level masking: masked rows become exact zero vectors.
std::pair<PrototypeSet, MaskSpec> mask_prototypes(const PrototypeSet& p, double ratio, Rng& rng);

// Tape-level masking with a pre-drawn spec.
ad::Var apply_mask(ad::Tape& tape, ad::Var protos, const MaskSpec& spec);

// 2-layer MLP embedding of normalized landmark coordinates: [K,2] -> [K,D].
// Parameter names: pos.l1.{w,b}, pos.l2.{w,b}.
ParamSet init_pos_embedder(int hidden, int dim, std::uint64_t seed);

// coords must be pre-normalized to [0,1] per axis; values outside raise a
// PreconditionError.
ad::Var encode_positions(ad::Tape& tape, const ParamVars& params,
                         const std::vector<Point>& normalized_coords);

std::vector<Point> normalize_coords(const std::vector<Point>& px_coords, int h, int w);

// Single multi-head self-attention layer (no feed-forward, residual or
// normalization). Parameter names: msa.{q,k,v,o}.{w,b}; dim % heads == 0.
ParamSet init_relation_head(int dim, int heads, std::uint64_t seed);

// Full attention over the K tokens of (masked prototypes + positional
// embeddings). attn_out, when non-null, receives one [K,K] row-stochastic
// matrix per head.
ad::Var multihead_self_attention(ad::Tape& tape, const ParamVars& params, ad::Var tokens,
                                 int heads, std::vector<std::vector<double>>* attn_out = nullptr);

// reconstruct = MSA(masked + e_pos).
ad::Var reconstruct_prototypes(ad::Tape& tape, const ParamVars& head_params, ad::Var masked,
                               ad::Var e_pos, int heads,
                               std::vector<std::vector<double>>* attn_out = nullptr);

} // namespace protomark

#endif
