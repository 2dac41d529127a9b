#include "protomark/prototypes.hpp"

#include <string>

#include "protomark/errors.hpp"

namespace protomark {

ad::Var instance_prototypes(ad::Tape& tape, ad::Var features, const HeatmapStack& heatmaps) {
    return tape.weighted_pool(features, heatmaps);
}

PrototypeSet instance_prototypes(const FeatureMap& f, const HeatmapStack& heatmaps) {
    if (f.h != heatmaps.h || f.w != heatmaps.w)
        throw ShapeError("instance_prototypes: feature/heatmap spatial dims disagree");
    PrototypeSet out(heatmaps.k, f.d, PrototypeKind::instance);
    const std::size_t plane = static_cast<std::size_t>(f.h) * f.w;
    for (int k = 0; k < heatmaps.k; ++k) {
        const double* hp = heatmaps.channel(k);
        double mass = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mass += hp[i];
        if (!(mass > 0.0))
            throw DegenerateHeatmapError("heatmap channel " + std::to_string(k) + " has zero mass");
        for (int c = 0; c < f.d; ++c) {
            const double* fp = f.channel(c);
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += hp[i] * fp[i];
            out.at(k, c) = acc / mass;
        }
    }
    return out;
}

PrototypeSet prototypes_from_tape(const ad::Tape& tape, ad::Var v, PrototypeKind kind) {
    const auto& d = tape.dims(v);
    if (d.size() != 2) throw ShapeError("prototypes_from_tape: expected [K,D] node");
    PrototypeSet out(d[0], d[1], kind);
    out.vectors = tape.val(v);
    return out;
}

PrototypeSet batch_mean(const std::vector<PrototypeSet>& batch_protos) {
    if (batch_protos.empty()) throw PreconditionError("batch_mean: empty batch");
    const int k = batch_protos.front().k;
    const int d = batch_protos.front().d;
    PrototypeSet mean(k, d, PrototypeKind::instance);
    for (const auto& p : batch_protos) {
        if (p.k != k || p.d != d)
            throw ShapeError("batch_mean: prototype set shapes disagree");
        for (std::size_t i = 0; i < mean.vectors.size(); ++i) mean.vectors[i] += p.vectors[i];
    }
    const double inv = 1.0 / static_cast<double>(batch_protos.size());
    for (double& v : mean.vectors) v *= inv;
    return mean;
}

void ema_update(PrototypeBank& bank, const std::vector<PrototypeSet>& batch_protos) {
    if (batch_protos.empty()) throw PreconditionError("ema_update: empty batch");
    const PrototypeSet mean = batch_mean(batch_protos);
    if (bank.holistic.k != 0 &&
        (bank.holistic.k != mean.k || bank.holistic.d != mean.d))
        throw ShapeError("ema_update: bank/batch shapes disagree");
    if (!bank.initialized) {
        bank.holistic = mean;
        bank.holistic.kind = PrototypeKind::holistic;
        bank.initialized = true;
    } else {
        const double a = bank.alpha;
        for (std::size_t i = 0; i < bank.holistic.vectors.size(); ++i)
            bank.holistic.vectors[i] = a * bank.holistic.vectors[i] + (1.0 - a) * mean.vectors[i];
    }
    ++bank.step;
}

SimilarityStack similarity_maps(const PrototypeSet& protos, const FeatureMap& f) {
    if (protos.d != f.d)
        throw ShapeError("similarity_maps: prototype dim " + std::to_string(protos.d) +
                         " != feature dim " + std::to_string(f.d));
    SimilarityStack s(protos.k, f.h, f.w);
    const std::size_t plane = static_cast<std::size_t>(f.h) * f.w;
    for (int k = 0; k < protos.k; ++k) {
        double* sp = s.channel(k);
        for (int c = 0; c < protos.d; ++c) {
            const double pk = protos.at(k, c);
            if (pk == 0.0) continue;
            const double* fp = f.channel(c);
            for (std::size_t i = 0; i < plane; ++i) sp[i] += pk * fp[i];
        }
    }
    return s;
}

} // namespace protomark
