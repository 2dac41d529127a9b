#ifndef PROTOMARK_PIPELINE_HPP
#define PROTOMARK_PIPELINE_HPP

#include <vector>

#include "protomark/autodiff.hpp"
#include "protomark/backbone.hpp"
#include "protomark/config.hpp"
#include "protomark/heatmap.hpp"
#include "protomark/losses.hpp"
#include "protomark/params.hpp"
#include "protomark/relation.hpp"

namespace protomark {

// One batch element after preprocessing: photometrically augmented image,
// heatmaps rendered from the untouched landmarks, normalized coordinates for
// the positional embedder, and a pre-drawn mask.
struct PipelineSample {
    GrayImage image;
    HeatmapStack heatmaps;
    std::vector<Point> norm_coords;
    MaskSpec mask;
};

struct PipelineParams {
    const ParamSet* backbone = nullptr;
    const ParamSet* rel_head = nullptr;
    const ParamSet* pos_embedder = nullptr;
};

// Per-sample feature maps and instance prototypes living on the tape.
struct ForwardFeatures {
    ParamVars backbone_vars;
    ParamVars rel_vars;
    ParamVars pos_vars;
    std::vector<ad::Var> features;
    std::vector<ad::Var> instance_protos;
};

struct LossVars {
    ad::Var reg;
    ad::Var align;
    ad::Var mine;
    ad::Var total;
};

ForwardFeatures forward_features(ad::Tape& tape, const PipelineParams& params,
                                 const std::vector<PipelineSample>& batch, const RunConfig& cfg);

// Assembles all loss terms. bank_protos enters as a constant (the EMA bank is
// detached); mine targets likewise. When frozen_mine_targets is null the
// current instance prototype values are detached in place, which is the
// training-step behaviour; the finite-difference harness passes targets
// captured at the base point instead so the differentiated function matches
// the gradients backprop reports.
LossVars assemble_losses(ad::Tape& tape, const ForwardFeatures& fwd,
                         const std::vector<PipelineSample>& batch,
                         const PrototypeSet& bank_protos, const RunConfig& cfg,
                         const std::vector<PrototypeSet>* frozen_mine_targets = nullptr);

} // namespace protomark

#endif
