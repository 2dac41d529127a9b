#ifndef PROTOMARK_CHECKPOINT_HPP
#define PROTOMARK_CHECKPOINT_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "protomark/config.hpp"
#include "protomark/params.hpp"
#include "protomark/prototypes.hpp"

namespace protomark {

// Training checkpoints carry the relation head and positional embedder;
// inference exports carry only what decoding needs (backbone + bank).
struct Checkpoint {
    RunConfig cfg;
    std::uint64_t seed = 0;
    int epoch = 0;
    long step = 0;
    ParamSet backbone;
    PrototypeBank bank;
    std::optional<ParamSet> rel_head;
    std::optional<ParamSet> pos_embedder;

    bool inference_only() const { return !rel_head.has_value(); }
};

// Writes the binary parameter blob at `path` and a plain-text manifest at
// `path + ".manifest"` (line-oriented key=value: kind, epoch, step, seed,
// content hash, full config).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Loads blob + manifest; verifies the recorded content hash.
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a 64-bit, used as the checkpoint content hash.
std::uint64_t fnv1a64(const void* data, std::size_t n);

} // namespace protomark

#endif
