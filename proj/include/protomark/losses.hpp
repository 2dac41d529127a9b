#ifndef PROTOMARK_LOSSES_HPP
#define PROTOMARK_LOSSES_HPP

#include <vector>

#include "protomark/autodiff.hpp"
#include "protomark/heatmap.hpp"
#include "protomark/prototypes.hpp"
#include "protomark/relation.hpp"

namespace protomark {

struct LossBreakdown {
    double reg = 0.0;
    double align = 0.0;
    double mine = 0.0;
    double total = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

// total = reg + lambda1 * align + lambda2 * mine.
LossBreakdown loss_total(double reg, double align, double mine, double lambda1, double lambda2);

// (1/K) * sum_k ||S_k - H_k||_2^2, squared norm over all H*W entries.
ad::Var loss_reg(ad::Tape& tape, ad::Var sim, const HeatmapStack& target);

// Mean over all unordered batch pairs (m,n) of (1/K) * sum_k ||p_m,k - p_n,k||_2^2.
// Requires at least two sets.
ad::Var loss_align(ad::Tape& tape, const std::vector<ad::Var>& batch_protos);

// sum_k ||p_hat_k - p_k||_2^2 against a constant target (stop-gradient side).
// When masked_only is non-null, only the masked rows contribute.
ad::Var loss_mine(ad::Tape& tape, ad::Var reconstructed, const PrototypeSet& target,
                  const MaskSpec* masked_only = nullptr);

// Value-level entry points; these run the tape path internally so tests
// exercise the same code training uses.
double loss_reg_value(const SimilarityStack& s, const HeatmapStack& h);
double loss_align_value(const std::vector<PrototypeSet>& batch_protos);
double loss_mine_value(const PrototypeSet& reconstructed, const PrototypeSet& target);

} // namespace protomark

#endif
