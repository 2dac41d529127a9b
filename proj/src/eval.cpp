#include "protomark/eval.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "protomark/backbone.hpp"
#include "protomark/dataset_io.hpp"
#include "protomark/errors.hpp"
#include "protomark/heatmap.hpp"

namespace protomark {

std::vector<double> radial_errors(const LandmarkSet& pred, const LandmarkSet& gt) {
    if (pred.k() != gt.k())
        throw ShapeError("radial_errors: prediction has " + std::to_string(pred.k()) +
                         " landmarks, ground truth has " + std::to_string(gt.k()));
    if (pred.spacing_mm_per_px != gt.spacing_mm_per_px)
        throw PreconditionError("radial_errors: spacing mismatch");
    std::vector<double> out(static_cast<std::size_t>(gt.k()));
    for (int k = 0; k < gt.k(); ++k) {
        const double dx = pred.coords[static_cast<std::size_t>(k)].x - gt.coords[static_cast<std::size_t>(k)].x;
        const double dy = pred.coords[static_cast<std::size_t>(k)].y - gt.coords[static_cast<std::size_t>(k)].y;
        out[static_cast<std::size_t>(k)] = gt.spacing_mm_per_px * std::sqrt(dx * dx + dy * dy);
    }
    return out;
}

std::pair<double, double> mre(const std::vector<double>& errors) {
    if (errors.empty()) throw PreconditionError("mre: empty error collection");
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    var /= static_cast<double>(errors.size()); // population form
    return {mean, std::sqrt(var)};
}

std::vector<double> sdr(const std::vector<double>& errors, const std::vector<double>& thresholds) {
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        if (t <= 0.0) throw PreconditionError("sdr: thresholds must be positive");
        if (errors.empty()) {
            out.push_back(0.0);
            continue;
        }
        std::size_t hit = 0;
        for (double e : errors)
            if (e <= t) ++hit;
        out.push_back(100.0 * static_cast<double>(hit) / static_cast<double>(errors.size()));
    }
    return out;
}

namespace {

GroupReport make_group_report(std::vector<double> errors, int n_images) {
    GroupReport r;
    r.n_images = n_images;
    r.errors_mm = std::move(errors);
    if (r.errors_mm.empty()) return r;
    r.empty = false;
    auto [mean, sd] = mre(r.errors_mm);
    r.mre_mm = mean;
    r.mre_std_mm = sd;
    r.sdr_pct = sdr(r.errors_mm, sdr_thresholds_mm());
    return r;
}

} // namespace

EvalReport build_report(const std::vector<std::vector<double>>& per_sample_errors_mm,
                        const std::vector<Group>& groups,
                        const std::vector<double>& pooled_errors_px) {
    if (per_sample_errors_mm.size() != groups.size())
        throw ShapeError("build_report: sample/group count mismatch");
    std::vector<double> all, adult, adolescent;
    int n_adult = 0, n_adolescent = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& errs = per_sample_errors_mm[i];
        all.insert(all.end(), errs.begin(), errs.end());
        if (groups[i] == Group::adult) {
            adult.insert(adult.end(), errs.begin(), errs.end());
            ++n_adult;
        } else {
            adolescent.insert(adolescent.end(), errs.begin(), errs.end());
            ++n_adolescent;
        }
    }
    EvalReport report;
    report.combined = make_group_report(std::move(all), static_cast<int>(groups.size()));
    report.adult = make_group_report(std::move(adult), n_adult);
    report.adolescent = make_group_report(std::move(adolescent), n_adolescent);
    if (!pooled_errors_px.empty()) report.mre_px = mre(pooled_errors_px).first;
    return report;
}

std::vector<Point> predict_landmarks(const ParamSet& backbone, const PrototypeBank& bank,
                                     const GrayImage& img, const RunConfig& cfg) {
    const FeatureMap f = extract_features(backbone, img, cfg);
    const SimilarityStack s = similarity_maps(bank.holistic, f);
    return decode_landmarks(s);
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& ds) {
    if (ckpt.cfg.num_landmarks != ds.num_landmarks)
        throw ConfigError("evaluate: checkpoint expects K=" + std::to_string(ckpt.cfg.num_landmarks) +
                          " but dataset has K=" + std::to_string(ds.num_landmarks));
    std::vector<std::vector<double>> per_sample;
    std::vector<Group> groups;
    std::vector<double> px_errors;
    for (const Sample& raw : ds.samples) {
        const Sample s = (raw.image.height == ckpt.cfg.image_h && raw.image.width == ckpt.cfg.image_w)
                             ? raw
                             : resize_sample(raw, ckpt.cfg.image_h, ckpt.cfg.image_w);
        const std::vector<Point> pred = predict_landmarks(ckpt.backbone, ckpt.bank, s.image, ckpt.cfg);

        for (int k = 0; k < ds.num_landmarks; ++k) {
            const double dx = pred[static_cast<std::size_t>(k)].x - s.landmarks.coords[static_cast<std::size_t>(k)].x;
            const double dy = pred[static_cast<std::size_t>(k)].y - s.landmarks.coords[static_cast<std::size_t>(k)].y;
            px_errors.push_back(std::sqrt(dx * dx + dy * dy));
        }

        // Map back to the native grid so millimetre errors are independent of
        // the working-resolution choice.
        LandmarkSet pred_native;
        pred_native.group = s.landmarks.group;
        pred_native.spacing_mm_per_px =
            s.resize.resized ? s.resize.native_spacing_mm_per_px : s.landmarks.spacing_mm_per_px;
        LandmarkSet gt_native = pred_native;
        for (int k = 0; k < ds.num_landmarks; ++k) {
            pred_native.coords.push_back(
                to_native_coords(pred[static_cast<std::size_t>(k)], s.resize, s.image.height, s.image.width));
            gt_native.coords.push_back(to_native_coords(s.landmarks.coords[static_cast<std::size_t>(k)],
                                                        s.resize, s.image.height, s.image.width));
        }
        per_sample.push_back(radial_errors(pred_native, gt_native));
        groups.push_back(s.landmarks.group);
    }
    return build_report(per_sample, groups, px_errors);
}

namespace {

nlohmann::json group_to_json(const GroupReport& g) {
    nlohmann::json j;
    j["empty"] = g.empty;
    j["n_images"] = g.n_images;
    j["n_landmarks"] = g.errors_mm.size();
    if (!g.empty) {
        j["mre_mm"] = g.mre_mm;
        j["mre_std_mm"] = g.mre_std_mm;
        nlohmann::json s;
        for (std::size_t i = 0; i < sdr_thresholds_mm().size(); ++i) {
            char key[16];
            std::snprintf(key, sizeof(key), "%.1fmm", sdr_thresholds_mm()[i]);
            s[key] = g.sdr_pct[i];
        }
        j["sdr_pct"] = std::move(s);
    }
    return j;
}

} // namespace

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& label) {
    nlohmann::json j;
    j["label"] = label;
    j["mre_px_working"] = report.mre_px;
    j["combined"] = group_to_json(report.combined);
    j["adult"] = group_to_json(report.adult);
    j["adolescent"] = group_to_json(report.adolescent);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << "label";
    for (const char* grp : {"combined", "adult", "adolescent"}) {
        out << "," << grp << "_mre_mm," << grp << "_mre_std_mm";
        for (double t : sdr_thresholds_mm()) {
            char col[32];
            std::snprintf(col, sizeof(col), ",%s_sdr_%.1fmm", grp, t);
            out << col;
        }
    }
    out << "\n";
    auto put_group = [&out](const GroupReport& g) {
        if (g.empty) {
            out << ",,";
            for (std::size_t i = 0; i < sdr_thresholds_mm().size(); ++i) out << ",";
            return;
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", g.mre_mm, g.mre_std_mm);
        out << buf;
        for (double v : g.sdr_pct) {
            std::snprintf(buf, sizeof(buf), ",%.2f", v);
            out << buf;
        }
    };
    for (const auto& [label, report] : rows) {
        out << label;
        put_group(report.combined);
        put_group(report.adult);
        put_group(report.adolescent);
        out << "\n";
    }
}

} // namespace protomark
