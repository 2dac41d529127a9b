#ifndef PROTOMARK_PROTOTYPES_HPP
#define PROTOMARK_PROTOTYPES_HPP

#include <vector>

#include "protomark/autodiff.hpp"
#include "protomark/backbone.hpp"
#include "protomark/heatmap.hpp"

namespace protomark {

enum class PrototypeKind { instance, holistic, reconstructed };

// K landmark prototype vectors of dimension D, row-major [K, D].
struct PrototypeSet {
    int k = 0;
    int d = 0;
    std::vector<double> vectors;
    PrototypeKind kind = PrototypeKind::instance;

    PrototypeSet() = default;
    PrototypeSet(int k_, int d_, PrototypeKind kind_ = PrototypeKind::instance)
        : k(k_), d(d_), vectors(static_cast<std::size_t>(k_) * d_, 0.0), kind(kind_) {}
    double& at(int row, int col) { return vectors[static_cast<std::size_t>(row) * d + col]; }
    double at(int row, int col) const { return vectors[static_cast<std::size_t>(row) * d + col]; }
};

// Running holistic prototypes. A non-learnable buffer: the EMA update is the
// only writer and no gradient ever reaches it.
struct PrototypeBank {
    PrototypeSet holistic;
    double alpha = 0.99;
    long step = 0;
    bool initialized = false;

    PrototypeBank() = default;
    PrototypeBank(int k, int d, double alpha_)
        : holistic(k, d, PrototypeKind::holistic), alpha(alpha_) {}
};

// p_k = sum_ij H_k(i,j) F(:,i,j) / sum_ij H_k(i,j)  -> [K, D] on the tape.
// Throws DegenerateHeatmapError when a channel has zero mass.
ad::Var instance_prototypes(ad::Tape& tape, ad::Var features, const HeatmapStack& heatmaps);

// Value-only variant.
PrototypeSet instance_prototypes(const FeatureMap& f, const HeatmapStack& heatmaps);

// Reads a [K, D] tape node into a PrototypeSet.
PrototypeSet prototypes_from_tape(const ad::Tape& tape, ad::Var v, PrototypeKind kind);

// EMA accumulation: holistic <- alpha * holistic + (1-alpha) * batch_mean.
// The first call seeds the bank with the batch mean. Inputs are detached by
// construction (plain values).
void ema_update(PrototypeBank& bank, const std::vector<PrototypeSet>& batch_protos);

// Mean of a non-empty batch of equally-shaped prototype sets.
PrototypeSet batch_mean(const std::vector<PrototypeSet>& batch_protos);

// S_k(i,j) = <p_k, F(:,i,j)>; plain dot product, no normalization.
SimilarityStack similarity_maps(const PrototypeSet& protos, const FeatureMap& f);

} // namespace protomark

#endif
