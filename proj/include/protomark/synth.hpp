#ifndef PROTOMARK_SYNTH_HPP
#define PROTOMARK_SYNTH_HPP

#include <cstdint>
#include <string>

#include "protomark/landmarks.hpp"
#include "protomark/rng.hpp"

namespace protomark {

// Two-domain synthetic corpus: skull-analog scenes (cranium ellipse, jaw arc,
// tooth marks) with landmarks at fixed template anchors. The adolescent
// domain perturbs the anchors with a smooth offset field and scatters
// distractor blobs near the tooth row, reproducing consistent landmark
// semantics under domain-dependent appearance and landmark shift.
struct SynthConfig {
    int image_size = 128; // square, divisible by 4
    int k = 10;
    int count_adult = 250;
    int count_adolescent = 250;
    double shift_px = 4.0;           // offset field scale, in pixels
    double eruption_density = 0.7;   // distractor blob probability per tooth
    double spacing_mm_per_px = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

// Deterministic given rng. Internally resamples geometry when the offset
// field pushes an anchor out of bounds; fails after 100 attempts.
Sample generate_sample(const SynthConfig& cfg, Group domain, Rng& rng);

// Template anchor positions for this sample's randomized geometry before any
// domain shift; exposed so tests can measure the applied displacement.
Sample generate_sample(const SynthConfig& cfg, Group domain, Rng& rng,
                       std::vector<Point>* unshifted_anchors);

// Writes images/ + annotations.json (balanced across domains) under out_dir.
// Sample ids are "adult_NNNN" / "adolescent_NNNN".
void generate_corpus(const SynthConfig& cfg, const std::string& out_dir);

} // namespace protomark

#endif
