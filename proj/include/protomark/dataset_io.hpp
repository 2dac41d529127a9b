#ifndef PROTOMARK_DATASET_IO_HPP
#define PROTOMARK_DATASET_IO_HPP

#include <array>
#include <string>

#include "protomark/landmarks.hpp"
#include "protomark/rng.hpp"

namespace protomark {

// Corpus layout: root/images/*.png plus root/annotations.json:
//   {"version": 1, "num_landmarks": K, "samples": [{"id", "image", "group",
//    "spacing_mm_per_px", "landmarks": [[x, y] x K]}]}
// Unknown top-level keys are rejected; landmark arrays must be length K.
Dataset load_dataset(const std::string& root_path);

// Same, but resizes every image to target_h x target_w at load. Landmark
// coordinates are scaled per axis (align-corners map); spacing is adjusted by
// the mean of the two scale factors and flagged approximated when they differ.
Dataset load_dataset(const std::string& root_path, int target_h, int target_w);

// Writes the corpus layout (images/ + annotations.json) for the dataset.
void save_corpus(const Dataset& d, const std::string& root_path, int bit_depth = 8);

// Stratified per-group split. Within each group, counts follow the fractions
// by largest-remainder apportionment (off by at most one sample) and
// assignment is a seeded shuffle. Fractions must sum to 1 within 1e-9 and
// every split must receive at least one sample from each group.
std::array<Dataset, 3> split_dataset(const Dataset& d, const std::array<double, 3>& fractions,
                                     std::uint64_t seed);

// Resizes a single sample to the target working size (align-corners map).
Sample resize_sample(const Sample& s, int target_h, int target_w);

// Maps working-resolution coordinates back to the native grid recorded in
// ResizeInfo (inverse of the load-time map). Identity for unresized samples.
Point to_native_coords(const Point& working, const ResizeInfo& info, int working_h, int working_w);

} // namespace protomark

#endif
