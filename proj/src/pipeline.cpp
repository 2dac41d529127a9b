#include "protomark/pipeline.hpp"

#include "protomark/errors.hpp"
#include "protomark/prototypes.hpp"

namespace protomark {

ForwardFeatures forward_features(ad::Tape& tape, const PipelineParams& params,
                                 const std::vector<PipelineSample>& batch, const RunConfig& cfg) {
    if (batch.size() < 2) throw PreconditionError("batch must hold at least 2 samples");
    ForwardFeatures fwd;
    fwd.backbone_vars = push_params(tape, *params.backbone);
    fwd.rel_vars = push_params(tape, *params.rel_head);
    fwd.pos_vars = push_params(tape, *params.pos_embedder);
    for (const PipelineSample& s : batch) {
        ad::Var img = tape.constant(s.image.values, {1, s.image.height, s.image.width});
        ad::Var f = extract_features(tape, fwd.backbone_vars, img, cfg);
        fwd.features.push_back(f);
        fwd.instance_protos.push_back(tape.weighted_pool(f, s.heatmaps));
    }
    return fwd;
}

LossVars assemble_losses(ad::Tape& tape, const ForwardFeatures& fwd,
                         const std::vector<PipelineSample>& batch,
                         const PrototypeSet& bank_protos, const RunConfig& cfg,
                         const std::vector<PrototypeSet>* frozen_mine_targets) {
    const std::size_t B = batch.size();
    if (fwd.features.size() != B) throw ShapeError("assemble_losses: forward/batch size mismatch");
    if (frozen_mine_targets && frozen_mine_targets->size() != B)
        throw ShapeError("assemble_losses: frozen target count mismatch");

    ad::Var bank = tape.constant(bank_protos.vectors, {bank_protos.k, bank_protos.d});

    std::vector<ad::Var> reg_terms;
    std::vector<ad::Var> mine_terms;
    reg_terms.reserve(B);
    mine_terms.reserve(B);
    for (std::size_t i = 0; i < B; ++i) {
        const PipelineSample& s = batch[i];
        ad::Var sim = tape.similarity(bank, fwd.features[i]);
        reg_terms.push_back(loss_reg(tape, sim, s.heatmaps));

        ad::Var masked = apply_mask(tape, fwd.instance_protos[i], s.mask);
        ad::Var e_pos = encode_positions(tape, fwd.pos_vars, s.norm_coords);
        ad::Var rec = reconstruct_prototypes(tape, fwd.rel_vars, masked, e_pos, cfg.msa_heads);
        PrototypeSet target =
            frozen_mine_targets
                ? (*frozen_mine_targets)[i]
                : prototypes_from_tape(tape, fwd.instance_protos[i], PrototypeKind::instance);
        mine_terms.push_back(
            loss_mine(tape, rec, target, cfg.mine_masked_only ? &s.mask : nullptr));
    }

    LossVars out;
    const std::vector<double> mean_w(B, 1.0 / static_cast<double>(B));
    out.reg = tape.weighted_sum_scalars(reg_terms, mean_w);
    out.align = loss_align(tape, fwd.instance_protos);
    out.mine = tape.weighted_sum_scalars(mine_terms, mean_w);
    out.total = tape.weighted_sum_scalars({out.reg, out.align, out.mine},
                                          {1.0, cfg.lambda1, cfg.lambda2});
    return out;
}

} // namespace protomark
