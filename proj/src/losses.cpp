#include "protomark/losses.hpp"

#include "protomark/errors.hpp"

namespace protomark {

LossBreakdown loss_total(double reg, double align, double mine, double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw PreconditionError("loss weights must be >= 0");
    LossBreakdown b;
    b.reg = reg;
    b.align = align;
    b.mine = mine;
    b.lambda1 = lambda1;
    b.lambda2 = lambda2;
    b.total = reg + lambda1 * align + lambda2 * mine;
    return b;
}

ad::Var loss_reg(ad::Tape& tape, ad::Var sim, const HeatmapStack& target) {
    const auto& d = tape.dims(sim);
    if (d.size() != 3 || d[0] != target.k || d[1] != target.h || d[2] != target.w)
        throw ShapeError("loss_reg: similarity/heatmap shapes disagree");
    ad::Var h = tape.constant(target.maps, {target.k, target.h, target.w});
    return tape.scale(tape.sum_sq_diff(sim, h), 1.0 / target.k);
}

ad::Var loss_align(ad::Tape& tape, const std::vector<ad::Var>& batch_protos) {
    if (batch_protos.size() < 2)
        throw PreconditionError("loss_align: needs at least two prototype sets");
    const auto& d0 = tape.dims(batch_protos[0]);
    for (ad::Var v : batch_protos)
        if (tape.dims(v) != d0) throw ShapeError("loss_align: prototype set shapes disagree");
    const int k = d0[0];
    std::vector<ad::Var> pair_terms;
    for (std::size_t m = 0; m < batch_protos.size(); ++m)
        for (std::size_t n = m + 1; n < batch_protos.size(); ++n)
            pair_terms.push_back(tape.sum_sq_diff(batch_protos[m], batch_protos[n]));
    const double w = 1.0 / (static_cast<double>(pair_terms.size()) * k);
    return tape.weighted_sum_scalars(pair_terms, std::vector<double>(pair_terms.size(), w));
}

ad::Var loss_mine(ad::Tape& tape, ad::Var reconstructed, const PrototypeSet& target,
                  const MaskSpec* masked_only) {
    const auto& d = tape.dims(reconstructed);
    if (d.size() != 2 || d[0] != target.k || d[1] != target.d)
        throw ShapeError("loss_mine: reconstructed/target shapes disagree");
    ad::Var t = tape.constant(target.vectors, {target.k, target.d});
    if (masked_only && !masked_only->masked_indices.empty()) {
        const auto m = masked_only->row_mask_dropped(target.k);
        return tape.sum_sq_diff(tape.mask_rows(reconstructed, m), tape.mask_rows(t, m));
    }
    return tape.sum_sq_diff(reconstructed, t);
}

double loss_reg_value(const SimilarityStack& s, const HeatmapStack& h) {
    ad::Tape tape;
    ad::Var sv = tape.constant(s.maps, {s.k, s.h, s.w});
    return tape.scalar(loss_reg(tape, sv, h));
}

double loss_align_value(const std::vector<PrototypeSet>& batch_protos) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    vars.reserve(batch_protos.size());
    for (const auto& p : batch_protos)
        vars.push_back(tape.constant(p.vectors, {p.k, p.d}));
    if (vars.size() < 2) throw PreconditionError("loss_align: needs at least two prototype sets");
    return tape.scalar(loss_align(tape, vars));
}

double loss_mine_value(const PrototypeSet& reconstructed, const PrototypeSet& target) {
    ad::Tape tape;
    ad::Var r = tape.constant(reconstructed.vectors, {reconstructed.k, reconstructed.d});
    return tape.scalar(loss_mine(tape, r, target));
}

} // namespace protomark
