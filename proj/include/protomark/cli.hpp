#ifndef PROTOMARK_CLI_HPP
#define PROTOMARK_CLI_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "protomark/config.hpp"

namespace protomark {

// Entry point shared by the binary and the test suite. args excludes the
// program name. Returns 0 on success, 1 on runtime failure (single-line
// diagnostic on stderr), 2 on usage errors.
int cli_run(const std::vector<std::string>& args);

// One ablation training run: configuration label, seed, resulting test MRE.
struct AblationRow {
    std::string config;
    std::uint64_t seed = 0;
    double mask_ratio = 0.0;
    double test_mre_mm = 0.0;
    double test_mre_std_mm = 0.0;
    std::array<double, 4> test_sdr_pct{}; // 2 / 2.5 / 3 / 4 mm
};

struct AblateOptions {
    std::string corpus_dir;
    std::string out_dir;
    RunConfig base;               // full-configuration hyperparameters
    int n_seeds = 5;
    std::vector<double> mask_grid;  // empty -> no sweep
    std::array<double, 3> fractions{0.625, 0.0625, 0.3125};
    std::uint64_t split_seed = 0;
};

struct AblateReport {
    std::vector<AblationRow> runs;   // 3 configs x n_seeds
    std::vector<AblationRow> sweep;  // one per grid point
    std::vector<std::pair<std::string, double>> median_mre; // per config label
};

// Trains reg-only / reg+align / full over n_seeds, evaluates each best
// checkpoint on the test split, optionally sweeps the mask ratio with the
// full configuration. Writes ablation_runs.csv, ablation_table.csv and, when
// sweeping, sweep.csv + sweep_plot.svg under out_dir.
AblateReport run_ablation(const AblateOptions& opts);

} // namespace protomark

#endif
