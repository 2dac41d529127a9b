#include "protomark/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "protomark/dataset_io.hpp"
#include "protomark/errors.hpp"
#include "protomark/eval.hpp"
#include "protomark/plot.hpp"
#include "protomark/synth.hpp"
#include "protomark/train.hpp"

namespace fs = std::filesystem;

namespace protomark {

namespace {

void write_run_manifest(const std::string& out_dir, const std::string& verb,
                        const RunConfig& cfg, const std::vector<std::string>& args) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream man(fs::path(out_dir) / "run_manifest.txt");
    if (!man) throw IoError("cannot write run manifest under " + out_dir);
    man << "verb=" << verb << "\n";
    std::string argv_line;
    for (const auto& a : args) argv_line += (argv_line.empty() ? "" : " ") + a;
    man << "argv=" << argv_line << "\n";
    for (const auto& line : config_lines(cfg)) man << line << "\n";
}

std::array<double, 3> parse_fractions(const std::string& s) {
    std::array<double, 3> f{};
    std::stringstream ss(s);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 3) throw ConfigError("expected exactly three comma-separated fractions");
        f[static_cast<std::size_t>(i++)] = std::stod(item);
    }
    if (i != 3) throw ConfigError("expected exactly three comma-separated fractions");
    return f;
}

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> grid;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
    return grid;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Shared trainer flags; each assigns into cfg after the preset/config file.
struct TrainFlags {
    std::string config_file;
    std::string preset = "desk";
    std::vector<std::string> overrides; // key=value, applied last
};

void add_override_flags(CLI::App* cmd, TrainFlags& tf) {
    cmd->add_option("--config", tf.config_file, "key = value config file");
    cmd->add_option("--preset", tf.preset, "base preset: paper|desk|micro")
        ->check(CLI::IsMember({"paper", "desk", "micro"}));
    auto push_override = [&tf](const std::string& key) {
        return [&tf, key](const std::string& v) { tf.overrides.push_back(key + "=" + v); };
    };
    cmd->add_option_function<std::string>("--seed", push_override("seed"), "rng seed");
    cmd->add_option_function<std::string>("--image-size", push_override("image_size"),
                                          "working resolution (square)");
    cmd->add_option_function<std::string>("--epochs", push_override("epochs"), "training epochs");
    cmd->add_option_function<std::string>("--lambda1", push_override("lambda1"),
                                          "alignment loss weight");
    cmd->add_option_function<std::string>("--lambda2", push_override("lambda2"),
                                          "relation mining loss weight");
    cmd->add_option_function<std::string>("--mask-ratio", push_override("mask_ratio"),
                                          "prototype mask ratio R");
    cmd->add_option_function<std::string>("--lr", push_override("lr"), "learning rate");
    cmd->add_option_function<std::string>("--batch-size", push_override("batch_size"),
                                          "mini-batch size");
    cmd->add_option_function<std::string>("--sigma", push_override("sigma_px"),
                                          "heatmap sigma in px");
    cmd->add_option_function<std::string>("--alpha", push_override("alpha"), "EMA coefficient");
    cmd->add_option_function<std::string>("--k", push_override("num_landmarks"),
                                          "landmark count K");
}

RunConfig resolve_config(const TrainFlags& tf) {
    RunConfig cfg = preset_by_name(tf.preset);
    if (!tf.config_file.empty()) cfg = load_config_file(tf.config_file, cfg);
    for (const auto& kv : tf.overrides) {
        const std::size_t eq = kv.find('=');
        apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void emit_ablation_csvs(const AblateOptions& opts, AblateReport& report) {
    {
        std::ofstream runs(fs::path(opts.out_dir) / "ablation_runs.csv");
        if (!runs) throw IoError("cannot write ablation_runs.csv");
        runs << "config,seed,mask_ratio,test_mre_mm,test_mre_std_mm,"
                "sdr_2.0mm,sdr_2.5mm,sdr_3.0mm,sdr_4.0mm\n";
        char buf[256];
        for (const auto& r : report.runs) {
            std::snprintf(buf, sizeof(buf), "%s,%llu,%.3g,%.6f,%.6f,%.2f,%.2f,%.2f,%.2f\n",
                          r.config.c_str(), static_cast<unsigned long long>(r.seed), r.mask_ratio,
                          r.test_mre_mm, r.test_mre_std_mm, r.test_sdr_pct[0], r.test_sdr_pct[1],
                          r.test_sdr_pct[2], r.test_sdr_pct[3]);
            runs << buf;
        }
    }
    {
        std::ofstream table(fs::path(opts.out_dir) / "ablation_table.csv");
        if (!table) throw IoError("cannot write ablation_table.csv");
        table << "config,median_test_mre_mm,median_sdr_2.0mm,median_sdr_2.5mm,"
                 "median_sdr_3.0mm,median_sdr_4.0mm,n_seeds\n";
        for (const char* config : {"reg_only", "reg_align", "full"}) {
            std::vector<double> mre_vals;
            std::array<std::vector<double>, 4> sdr_vals;
            for (const auto& r : report.runs) {
                if (r.config != config) continue;
                mre_vals.push_back(r.test_mre_mm);
                for (std::size_t t = 0; t < 4; ++t) sdr_vals[t].push_back(r.test_sdr_pct[t]);
            }
            if (mre_vals.empty()) continue;
            const double med = median(mre_vals);
            report.median_mre.emplace_back(config, med);
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.2f,%.2f,%.2f,%.2f,%zu\n", config, med,
                          median(sdr_vals[0]), median(sdr_vals[1]), median(sdr_vals[2]),
                          median(sdr_vals[3]), mre_vals.size());
            table << buf;
        }
    }
    if (!report.sweep.empty()) {
        std::ofstream sweep(fs::path(opts.out_dir) / "sweep.csv");
        if (!sweep) throw IoError("cannot write sweep.csv");
        sweep << "mask_ratio,test_mre_mm,test_mre_std_mm,sdr_2.0mm\n";
        PlotSeries series;
        series.label = "test MRE (mm)";
        char buf[128];
        for (const auto& r : report.sweep) {
            std::snprintf(buf, sizeof(buf), "%.3g,%.6f,%.6f,%.2f\n", r.mask_ratio, r.test_mre_mm,
                          r.test_mre_std_mm, r.test_sdr_pct[0]);
            sweep << buf;
            series.x.push_back(r.mask_ratio);
            series.y.push_back(r.test_mre_mm);
        }
        write_svg_line_plot((fs::path(opts.out_dir) / "sweep_plot.svg").string(),
                            "Mask ratio sweep", "mask ratio R", "test MRE (mm)", {series});
    }
}

} // namespace

AblateReport run_ablation(const AblateOptions& opts) {
    opts.base.validate();
    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    if (ec) throw IoError("cannot create ablation directory: " + opts.out_dir);

    const Dataset corpus = load_dataset(opts.corpus_dir, opts.base.image_h, opts.base.image_w);
    const auto splits = split_dataset(corpus, opts.fractions, opts.split_seed);
    const Dataset& train_set = splits[0];
    const Dataset& val_set = splits[1];
    const Dataset& test_set = splits[2];

    struct ConfigRow {
        const char* label;
        double lambda1, lambda2;
    };
    const ConfigRow configs[] = {{"reg_only", 0.0, 0.0},
                                 {"reg_align", opts.base.lambda1, 0.0},
                                 {"full", opts.base.lambda1, opts.base.lambda2}};

    AblateReport report;
    auto run_one = [&](const std::string& label, const RunConfig& cfg,
                       const std::string& run_dir) -> AblationRow {
        const FitResult fr = fit(cfg, train_set, val_set, run_dir);
        const Checkpoint best = load_checkpoint(fr.best_checkpoint);
        const EvalReport ev = evaluate(best, test_set);
        AblationRow row;
        row.config = label;
        row.seed = cfg.seed;
        row.mask_ratio = cfg.mask_ratio;
        row.test_mre_mm = ev.combined.mre_mm;
        row.test_mre_std_mm = ev.combined.mre_std_mm;
        for (std::size_t t = 0; t < 4; ++t) row.test_sdr_pct[t] = ev.combined.sdr_pct[t];
        return row;
    };

    for (int s = 0; s < opts.n_seeds; ++s) {
        for (const auto& c : configs) {
            RunConfig cfg = opts.base;
            cfg.lambda1 = c.lambda1;
            cfg.lambda2 = c.lambda2;
            cfg.seed = opts.base.seed + static_cast<std::uint64_t>(s);
            char dir[64];
            std::snprintf(dir, sizeof(dir), "run_%s_seed%d", c.label, s);
            report.runs.push_back(
                run_one(c.label, cfg, (fs::path(opts.out_dir) / dir).string()));
            std::printf("[ablate] %s seed=%d test MRE %.4f mm\n", c.label, s,
                        report.runs.back().test_mre_mm);
            std::fflush(stdout);
        }
    }

    for (double r : opts.mask_grid) {
        RunConfig cfg = opts.base;
        cfg.seed = opts.base.seed;
        cfg.mask_ratio = r;
        char dir[64];
        std::snprintf(dir, sizeof(dir), "sweep_R%.2f", r);
        AblationRow row = run_one("sweep", cfg, (fs::path(opts.out_dir) / dir).string());
        row.mask_ratio = r;
        report.sweep.push_back(row);
        std::printf("[ablate] sweep R=%.2f test MRE %.4f mm\n", r, report.sweep.back().test_mre_mm);
        std::fflush(stdout);
    }

    emit_ablation_csvs(opts, report);
    return report;
}

namespace {

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"prototype-based landmark detection pipeline"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "render a synthetic two-domain corpus");
    SynthConfig synth;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output corpus directory")->required();
    gen->add_option("--seed", synth.seed, "corpus seed");
    gen->add_option("--image-size", synth.image_size, "square image size");
    gen->add_option("--k", synth.k, "landmarks per image");
    gen->add_option("--count-adult", synth.count_adult, "adult sample count");
    gen->add_option("--count-adolescent", synth.count_adolescent, "adolescent sample count");
    gen->add_option("--shift", synth.shift_px, "adolescent landmark shift magnitude (px)");
    gen->add_option("--eruption-density", synth.eruption_density,
                    "distractor blob probability per tooth");
    gen->add_option("--spacing", synth.spacing_mm_per_px, "physical spacing mm/px");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train on a corpus");
    TrainFlags train_tf;
    std::string train_corpus, train_out, train_fractions = "0.625,0.0625,0.3125";
    std::uint64_t train_split_seed = 0;
    train_cmd->add_option("--corpus", train_corpus, "corpus directory")->required();
    train_cmd->add_option("--out", train_out, "run output directory")->required();
    train_cmd->add_option("--fractions", train_fractions, "train,val,test fractions");
    train_cmd->add_option("--split-seed", train_split_seed, "split shuffle seed");
    add_override_flags(train_cmd, train_tf);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_corpus, eval_out, eval_split = "test";
    std::string eval_fractions = "0.625,0.0625,0.3125";
    std::uint64_t eval_split_seed = 0;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "corpus directory")->required();
    eval_cmd->add_option("--out", eval_out, "report output directory")->required();
    eval_cmd->add_option("--split", eval_split, "train|val|test|all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_option("--fractions", eval_fractions, "train,val,test fractions");
    eval_cmd->add_option("--split-seed", eval_split_seed, "split shuffle seed");

    // ---- ablate ----
    auto* abl = app.add_subcommand("ablate", "loss-term ablation and mask-ratio sweep");
    TrainFlags abl_tf;
    std::string abl_corpus, abl_out, abl_grid, abl_fractions = "0.625,0.0625,0.3125";
    int abl_seeds = 5;
    std::uint64_t abl_split_seed = 0;
    abl->add_option("--corpus", abl_corpus, "corpus directory")->required();
    abl->add_option("--out", abl_out, "ablation output directory")->required();
    abl->add_option("--seeds", abl_seeds, "seeds per configuration");
    abl->add_option("--mask-grid", abl_grid, "comma-separated mask ratios to sweep");
    abl->add_option("--fractions", abl_fractions, "train,val,test fractions");
    abl->add_option("--split-seed", abl_split_seed, "split shuffle seed");
    add_override_flags(abl, abl_tf);

    // ---- report ----
    auto* rep = app.add_subcommand("report", "re-emit summaries and plots for a run directory");
    std::string rep_run;
    rep->add_option("--run", rep_run, "run directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help text or the usage diagnostic
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        generate_corpus(synth, gen_out);
        RunConfig manifest_cfg = desk_preset();
        manifest_cfg.image_h = manifest_cfg.image_w = synth.image_size;
        manifest_cfg.num_landmarks = synth.k;
        manifest_cfg.seed = synth.seed;
        write_run_manifest(gen_out, "generate", manifest_cfg, args);
        std::printf("corpus written to %s (%d adult + %d adolescent, K=%d)\n", gen_out.c_str(),
                    synth.count_adult, synth.count_adolescent, synth.k);
        return 0;
    }

    if (train_cmd->parsed()) {
        RunConfig cfg = resolve_config(train_tf);
        const Dataset corpus = load_dataset(train_corpus, cfg.image_h, cfg.image_w);
        if (corpus.num_landmarks != cfg.num_landmarks) {
            RunConfig adjusted = cfg;
            adjusted.num_landmarks = corpus.num_landmarks;
            adjusted.validate();
            cfg = adjusted;
        }
        const auto splits = split_dataset(corpus, parse_fractions(train_fractions), train_split_seed);
        write_run_manifest(train_out, "train", cfg, args);
        const FitResult fr = fit(cfg, splits[0], splits[1], train_out);
        std::printf("training done; best=%s last=%s\n", fr.best_checkpoint.c_str(),
                    fr.last_checkpoint.c_str());
        return 0;
    }

    if (eval_cmd->parsed()) {
        const Checkpoint ckpt = load_checkpoint(eval_ckpt);
        Dataset ds = load_dataset(eval_corpus, ckpt.cfg.image_h, ckpt.cfg.image_w);
        if (eval_split != "all") {
            const auto splits = split_dataset(ds, parse_fractions(eval_fractions), eval_split_seed);
            ds = splits[eval_split == "train" ? 0 : (eval_split == "val" ? 1 : 2)];
        }
        const EvalReport report = evaluate(ckpt, ds);
        std::error_code ec;
        fs::create_directories(eval_out, ec);
        write_report_json((fs::path(eval_out) / "report.json").string(), report, eval_split);
        write_report_csv((fs::path(eval_out) / "report.csv").string(), {{eval_split, report}});
        write_run_manifest(eval_out, "eval", ckpt.cfg, args);
        std::printf("MRE %.4f mm (adult %.4f, adolescent %.4f); SDR@2mm %.2f%%\n",
                    report.combined.mre_mm, report.adult.empty ? 0.0 : report.adult.mre_mm,
                    report.adolescent.empty ? 0.0 : report.adolescent.mre_mm,
                    report.combined.empty ? 0.0 : report.combined.sdr_pct[0]);
        return 0;
    }

    if (abl->parsed()) {
        AblateOptions opts;
        opts.corpus_dir = abl_corpus;
        opts.out_dir = abl_out;
        opts.base = resolve_config(abl_tf);
        {
            const Dataset probe = load_dataset(abl_corpus);
            if (probe.num_landmarks != opts.base.num_landmarks)
                opts.base.num_landmarks = probe.num_landmarks;
            opts.base.validate();
        }
        opts.n_seeds = abl_seeds;
        if (!abl_grid.empty()) opts.mask_grid = parse_grid(abl_grid);
        opts.fractions = parse_fractions(abl_fractions);
        opts.split_seed = abl_split_seed;
        write_run_manifest(abl_out, "ablate", opts.base, args);
        const AblateReport report = run_ablation(opts);
        for (const auto& [label, med] : report.median_mre)
            std::printf("%s median test MRE %.4f mm\n", label.c_str(), med);
        return 0;
    }

    if (rep->parsed()) {
        bool did_anything = false;
        const fs::path run(rep_run);
        if (fs::exists(run / "train_log.csv")) {
            std::ifstream log(run / "train_log.csv");
            std::string line;
            std::getline(log, line); // header
            PlotSeries total;
            total.label = "total loss";
            while (std::getline(log, line)) {
                std::stringstream ss(line);
                std::string cell;
                std::vector<std::string> cells;
                while (std::getline(ss, cell, ',')) cells.push_back(cell);
                if (cells.size() >= 6) {
                    total.x.push_back(std::stod(cells[0]));
                    total.y.push_back(std::stod(cells[5]));
                }
            }
            if (!total.x.empty()) {
                write_svg_line_plot((run / "loss_curve.svg").string(), "Training loss", "step",
                                    "total loss", {total});
                std::printf("wrote %s\n", (run / "loss_curve.svg").c_str());
                did_anything = true;
            }
        }
        if (fs::exists(run / "sweep.csv")) {
            std::ifstream sweep(run / "sweep.csv");
            std::string line;
            std::getline(sweep, line);
            PlotSeries series;
            series.label = "test MRE (mm)";
            while (std::getline(sweep, line)) {
                std::stringstream ss(line);
                std::string cell;
                std::vector<std::string> cells;
                while (std::getline(ss, cell, ',')) cells.push_back(cell);
                if (cells.size() >= 2) {
                    series.x.push_back(std::stod(cells[0]));
                    series.y.push_back(std::stod(cells[1]));
                }
            }
            if (!series.x.empty()) {
                write_svg_line_plot((run / "sweep_plot.svg").string(), "Mask ratio sweep",
                                    "mask ratio R", "test MRE (mm)", {series});
                std::printf("wrote %s\n", (run / "sweep_plot.svg").c_str());
                did_anything = true;
            }
        }
        if (!did_anything)
            throw IoError("nothing to report under " + rep_run +
                          " (no train_log.csv or sweep.csv)");
        return 0;
    }

    return 0;
}

} // namespace

int cli_run(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace protomark
