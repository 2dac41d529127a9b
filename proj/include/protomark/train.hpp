#ifndef PROTOMARK_TRAIN_HPP
#define PROTOMARK_TRAIN_HPP

#include <string>
#include <vector>

#include "protomark/checkpoint.hpp"
#include "protomark/config.hpp"
#include "protomark/landmarks.hpp"
#include "protomark/losses.hpp"
#include "protomark/params.hpp"
#include "protomark/pipeline.hpp"
#include "protomark/prototypes.hpp"
#include "protomark/rng.hpp"

namespace protomark {

// Everything a training run mutates. The holistic bank changes only through
// ema_update, exactly once per step.
struct TrainState {
    RunConfig cfg;
    ParamSet backbone;
    ParamSet rel_head;
    ParamSet pos_embedder;
    ParamSet vel_backbone; // SGD momentum buffers
    ParamSet vel_rel_head;
    ParamSet vel_pos_embedder;
    PrototypeBank bank;
    long step = 0;
    int epoch = 0;
    Rng rng; // augmentation + mask draws
};

TrainState init_train_state(const RunConfig& cfg);

// clip(contrast*(img-0.5) + 0.5 + brightness + noise, 0, 1); deterministic
// given rng, geometry untouched.
GrayImage augment(const GrayImage& img, const AugmentSpec& spec, Rng& rng);

// lr * decay^floor(epoch / every).
double lr_at(int epoch, const RunConfig& cfg);

// Preprocesses one batch: augmentation, heatmap rendering from the untouched
// landmarks, coordinate normalization, mask draws.
std::vector<PipelineSample> prepare_batch(const std::vector<Sample>& batch, const RunConfig& cfg,
                                          Rng& rng);

// One optimization step: forward, EMA bank update (detached), loss assembly,
// backward, SGD-with-momentum update of backbone + relation head + positional
// embedder. Throws NumericError with a step diagnostic on non-finite loss.
LossBreakdown train_step(TrainState& state, const std::vector<Sample>& batch,
                         const RunConfig& cfg);

// Group-stratified shuffled batches; both groups interleave evenly so each
// batch carries ceil(B/2)/floor(B/2) per group while samples remain. Tail
// batches below 2 samples are dropped.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& ds, int batch_size, Rng& rng);

struct FitResult {
    std::string best_checkpoint;
    std::string last_checkpoint;
    double best_val_mre_mm = 0.0;
    int best_epoch = -1;
};

// Full training loop. Writes train_log.csv / val_log.csv plus best.ckpt and
// last.ckpt under out_dir; returns the checkpoint paths (best falls back to
// last when no validation pass ran).
FitResult fit(const RunConfig& cfg, const Dataset& train_set, const Dataset& val_set,
              const std::string& out_dir);

Checkpoint snapshot_checkpoint(const TrainState& state);

} // namespace protomark

#endif
