#ifndef PROTOMARK_EVAL_HPP
#define PROTOMARK_EVAL_HPP

#include <string>
#include <utility>
#include <vector>

#include "protomark/checkpoint.hpp"
#include "protomark/landmarks.hpp"

namespace protomark {

inline const std::vector<double>& sdr_thresholds_mm() {
    static const std::vector<double> t = {2.0, 2.5, 3.0, 4.0};
    return t;
}

// e_k = spacing * sqrt((x_hat-x)^2 + (y_hat-y)^2), in millimetres.
std::vector<double> radial_errors(const LandmarkSet& pred, const LandmarkSet& gt);

// (mean, population std) over pooled landmark-level errors. Errors must be
// non-empty.
std::pair<double, double> mre(const std::vector<double>& errors);

// Percentage of errors <= threshold (closed inequality), per threshold.
std::vector<double> sdr(const std::vector<double>& errors, const std::vector<double>& thresholds);

struct GroupReport {
    bool empty = true;
    int n_images = 0;
    std::vector<double> errors_mm; // pooled landmark-level radial errors
    double mre_mm = 0.0;
    double mre_std_mm = 0.0;
    std::vector<double> sdr_pct; // aligned with sdr_thresholds_mm()
};

struct EvalReport {
    GroupReport combined;
    GroupReport adult;
    GroupReport adolescent;
    double mre_px = 0.0; // working-resolution pixel MRE over all landmarks
};

// Aggregates the three-way report from per-sample errors.
EvalReport build_report(const std::vector<std::vector<double>>& per_sample_errors_mm,
                        const std::vector<Group>& groups,
                        const std::vector<double>& pooled_errors_px);

// Decodes landmarks for one image: features -> similarity against the bank ->
// per-channel argmax. Coordinates are at the image's working resolution.
std::vector<Point> predict_landmarks(const ParamSet& backbone, const PrototypeBank& bank,
                                     const GrayImage& img, const RunConfig& cfg);

// Runs prediction over the dataset and aggregates MRE/SDR per group.
// Predictions are decoded at the checkpoint's working resolution and mapped
// back to each sample's native grid before millimetre conversion.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& ds);

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& label);
// Table-shaped grid: one row per labelled report, MRE/SDR columns per group.
void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, EvalReport>>& rows);

} // namespace protomark

#endif
