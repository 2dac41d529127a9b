#include "protomark/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "protomark/backbone.hpp"
#include "protomark/errors.hpp"
#include "protomark/eval.hpp"
#include "protomark/heatmap.hpp"

namespace fs = std::filesystem;

namespace protomark {

namespace {
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    // splitmix64 over (base + salt) keeps the component streams independent.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace

TrainState init_train_state(const RunConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.backbone = init_backbone(cfg, derive_seed(cfg.seed, 0));
    st.rel_head = init_relation_head(cfg.feature_dim(), cfg.msa_heads, derive_seed(cfg.seed, 1));
    st.pos_embedder =
        init_pos_embedder(cfg.mlp_hidden_resolved(), cfg.feature_dim(), derive_seed(cfg.seed, 2));
    st.vel_backbone = st.backbone.zeros_like();
    st.vel_rel_head = st.rel_head.zeros_like();
    st.vel_pos_embedder = st.pos_embedder.zeros_like();
    st.bank = PrototypeBank(cfg.num_landmarks, cfg.feature_dim(), cfg.alpha);
    st.rng = Rng(derive_seed(cfg.seed, 3));
    return st;
}

GrayImage augment(const GrayImage& img, const AugmentSpec& spec, Rng& rng) {
    const double brightness = spec.brightness_delta == 0.0
                                  ? 0.0
                                  : rng.uniform(-spec.brightness_delta, spec.brightness_delta);
    const double contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi);
    const double noise_sigma = rng.uniform(spec.noise_sigma_lo, spec.noise_sigma_hi);
    GrayImage out(img.height, img.width);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        double v = contrast * (img.values[i] - 0.5) + 0.5 + brightness;
        if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
        out.values[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

double lr_at(int epoch, const RunConfig& cfg) {
    if (epoch < 0) throw PreconditionError("lr_at: epoch must be >= 0");
    return cfg.lr * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every_epochs);
}

std::vector<PipelineSample> prepare_batch(const std::vector<Sample>& batch, const RunConfig& cfg,
                                          Rng& rng) {
    std::vector<PipelineSample> out;
    out.reserve(batch.size());
    for (const Sample& s : batch) {
        PipelineSample ps;
        ps.image = augment(s.image, cfg.augment, rng);
        ps.heatmaps = render_heatmaps(s.landmarks, s.image.height, s.image.width, cfg.sigma_px);
        ps.norm_coords = normalize_coords(s.landmarks.coords, s.image.height, s.image.width);
        ps.mask = draw_mask(s.landmarks.k(), cfg.mask_ratio, rng);
        out.push_back(std::move(ps));
    }
    return out;
}

namespace {

void sgd_update(ParamSet& params, ParamSet& velocity, const ad::Tape& tape, const ParamVars& vars,
                double lr, double momentum) {
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& g = tape.grad_of(vars.at(params.name(i)));
        auto& v = velocity.tensor(i).data;
        auto& p = params.tensor(i).data;
        if (g.empty()) {
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] *= momentum;
                p[j] -= lr * v[j];
            }
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = momentum * v[j] + g[j];
                p[j] -= lr * v[j];
            }
        }
    }
}

bool all_finite(const ParamSet& params) {
    for (std::size_t i = 0; i < params.count(); ++i)
        for (double v : params.tensor(i).data)
            if (!std::isfinite(v)) return false;
    return true;
}

} // namespace

LossBreakdown train_step(TrainState& state, const std::vector<Sample>& batch,
                         const RunConfig& cfg) {
    if (batch.size() < 2) throw PreconditionError("train_step: batch must hold at least 2 samples");

    const std::vector<PipelineSample> prepped = prepare_batch(batch, cfg, state.rng);

    ad::Tape tape;
    PipelineParams pp{&state.backbone, &state.rel_head, &state.pos_embedder};
    ForwardFeatures fwd = forward_features(tape, pp, prepped, cfg);

    // EMA update precedes the similarity loss; the bank enters the graph as a
    // constant, so no gradient reaches it.
    std::vector<PrototypeSet> batch_protos;
    batch_protos.reserve(prepped.size());
    for (ad::Var p : fwd.instance_protos)
        batch_protos.push_back(prototypes_from_tape(tape, p, PrototypeKind::instance));
    ema_update(state.bank, batch_protos);

    LossVars losses = assemble_losses(tape, fwd, prepped, state.bank.holistic, cfg, nullptr);
    const LossBreakdown breakdown =
        loss_total(tape.scalar(losses.reg), tape.scalar(losses.align), tape.scalar(losses.mine),
                   cfg.lambda1, cfg.lambda2);
    if (!std::isfinite(breakdown.total))
        throw NumericError("non-finite loss at step " + std::to_string(state.step) + " (reg=" +
                           std::to_string(breakdown.reg) + ", align=" + std::to_string(breakdown.align) +
                           ", mine=" + std::to_string(breakdown.mine) + ")");

    tape.backward(losses.total);

    const double lr = lr_at(state.epoch, cfg);
    sgd_update(state.backbone, state.vel_backbone, tape, fwd.backbone_vars, lr, cfg.momentum);
    sgd_update(state.rel_head, state.vel_rel_head, tape, fwd.rel_vars, lr, cfg.momentum);
    sgd_update(state.pos_embedder, state.vel_pos_embedder, tape, fwd.pos_vars, lr, cfg.momentum);

    if (!all_finite(state.backbone) || !all_finite(state.rel_head) ||
        !all_finite(state.pos_embedder))
        throw NumericError("non-finite parameters after step " + std::to_string(state.step));

    ++state.step;
    return breakdown;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& ds, int batch_size, Rng& rng) {
    std::vector<std::size_t> adult, adolescent;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        (ds.samples[i].landmarks.group == Group::adult ? adult : adolescent).push_back(i);
    }
    rng.shuffle(adult);
    rng.shuffle(adolescent);

    // Even interleave of the two shuffled streams keeps every window of B
    // near the global group proportion.
    std::vector<std::size_t> order;
    order.reserve(ds.samples.size());
    std::size_t ia = 0, ib = 0;
    const double na = static_cast<double>(adult.size());
    const double nb = static_cast<double>(adolescent.size());
    while (ia < adult.size() || ib < adolescent.size()) {
        if (ib >= adolescent.size()) {
            order.push_back(adult[ia++]);
        } else if (ia >= adult.size()) {
            order.push_back(adolescent[ib++]);
        } else {
            const double pa = (static_cast<double>(ia) + 0.5) / na;
            const double pb = (static_cast<double>(ib) + 0.5) / nb;
            order.push_back(pa <= pb ? adult[ia++] : adolescent[ib++]);
        }
    }

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        if (end - start < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Checkpoint snapshot_checkpoint(const TrainState& state) {
    Checkpoint ckpt;
    ckpt.cfg = state.cfg;
    ckpt.seed = state.cfg.seed;
    ckpt.epoch = state.epoch;
    ckpt.step = state.step;
    ckpt.backbone = state.backbone;
    ckpt.bank = state.bank;
    ckpt.rel_head = state.rel_head;
    ckpt.pos_embedder = state.pos_embedder;
    return ckpt;
}

FitResult fit(const RunConfig& cfg, const Dataset& train_set, const Dataset& val_set,
              const std::string& out_dir) {
    cfg.validate();
    if (train_set.samples.empty()) throw ConfigError("fit: training set is empty");
    if (static_cast<int>(train_set.samples.size()) < cfg.batch_size)
        throw ConfigError("fit: training set smaller than one batch");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create run directory: " + out_dir);

    TrainState state = init_train_state(cfg);

    std::ofstream train_log(fs::path(out_dir) / "train_log.csv");
    if (!train_log) throw IoError("cannot write train_log.csv under " + out_dir);
    train_log << "step,epoch,reg,align,mine,total,lr\n";
    std::ofstream val_log(fs::path(out_dir) / "val_log.csv");
    val_log << "epoch,mre_px,mre_mm,sdr_2.0mm,sdr_2.5mm,sdr_3.0mm,sdr_4.0mm\n";

    const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
    const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();

    FitResult result;
    result.last_checkpoint = last_path;

    Rng batch_rng(derive_seed(cfg.seed, 4));
    char buf[256];
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.epoch = epoch;
        const auto batches = make_batches(train_set, cfg.batch_size, batch_rng);
        for (const auto& batch_idx : batches) {
            std::vector<Sample> batch;
            batch.reserve(batch_idx.size());
            for (std::size_t i : batch_idx) batch.push_back(train_set.samples[i]);
            const LossBreakdown b = train_step(state, batch, cfg);
            std::snprintf(buf, sizeof(buf), "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", state.step,
                          epoch, b.reg, b.align, b.mine, b.total, lr_at(epoch, cfg));
            train_log << buf;
        }
        if (!val_set.samples.empty()) {
            const Checkpoint snap = snapshot_checkpoint(state);
            const EvalReport rep = evaluate(snap, val_set);
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.4f,%.4f,%.4f,%.4f\n", epoch,
                          rep.mre_px, rep.combined.mre_mm, rep.combined.sdr_pct[0],
                          rep.combined.sdr_pct[1], rep.combined.sdr_pct[2], rep.combined.sdr_pct[3]);
            val_log << buf;
            if (result.best_epoch < 0 || rep.combined.mre_mm < result.best_val_mre_mm) {
                result.best_val_mre_mm = rep.combined.mre_mm;
                result.best_epoch = epoch;
                save_checkpoint(best_path, snap);
                result.best_checkpoint = best_path;
            }
        }
    }
    state.epoch = cfg.epochs;
    save_checkpoint(last_path, snapshot_checkpoint(state));
    if (result.best_checkpoint.empty()) result.best_checkpoint = last_path;
    return result;
}

} // namespace protomark
