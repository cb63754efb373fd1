// spinecurve: batch geometry analysis for spine segmentation masks.
//
// Subcommands: analyze, heatmap, rank, calibrate, synth.  Batch commands
// collect all per-file results before emitting anything, so output bytes do
// not depend on --jobs.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinecurve/io.hpp"
#include "spinecurve/pipeline.hpp"
#include "spinecurve/regressor.hpp"
#include "spinecurve/synth.hpp"

namespace fs = std::filesystem;
using namespace spinecurve;

namespace {

// ---------------------------------------------------------------------------
// Shared option plumbing

struct PipelineFlags {
    std::string channel = "spine";
    std::string refine = "parabolic";
    double support_threshold = 0.1;
    int smooth_window = 11;
    int kappa_smooth_window = 31;
    std::vector<double> percentiles = {3.0, 97.0};
    double min_deviation = 0.5;
    double probe_radius = 20.0;
    double grid_step = 0.25;
    int median_window = 5;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--channel", f.channel, "Mask channel to analyze")->capture_default_str();
    cmd->add_option("--support-threshold", f.support_threshold, "Minimum per-pixel support")->capture_default_str();
    cmd->add_option("--refine", f.refine, "Peak refinement: argmax|parabolic|soft_argmax")->capture_default_str();
    cmd->add_option("--smooth", f.smooth_window, "Curve smoothing window for angle measurement (odd)")
        ->capture_default_str();
    cmd->add_option("--kappa-smooth", f.kappa_smooth_window, "Curve smoothing window for curvature (odd)")
        ->capture_default_str();
    cmd->add_option("--percentiles", f.percentiles, "Baseline endpoint percentiles lo,hi")
        ->delimiter(',')
        ->expected(2)
        ->capture_default_str();
    cmd->add_option("--min-deviation", f.min_deviation, "Deviation floor in px for curve segments")
        ->capture_default_str();
    cmd->add_option("--radius", f.probe_radius, "Curvature probe disk radius in px")->capture_default_str();
    cmd->add_option("--grid-step", f.grid_step, "Disk area integration step in px")->capture_default_str();
    cmd->add_option("--median-window", f.median_window, "Median filter window for the curvature profile (odd)")
        ->capture_default_str();
}

AnalyzeConfig to_config(const PipelineFlags& f) {
    AnalyzeConfig cfg;
    cfg.channel = body_part_from_name(f.channel);
    cfg.support_threshold = f.support_threshold;
    cfg.refine = refine_mode_from_name(f.refine);
    cfg.smooth_window = f.smooth_window;
    cfg.kappa_smooth_window = f.kappa_smooth_window;
    cfg.lo_pct = f.percentiles.at(0);
    cfg.hi_pct = f.percentiles.at(1);
    cfg.min_deviation = f.min_deviation;
    cfg.probe_radius = f.probe_radius;
    cfg.grid_step = f.grid_step;
    cfg.profile_median_window = f.median_window;
    return cfg;
}

int default_jobs() {
    const char* env = std::getenv("SPINECURVE_JOBS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) return 1;
    return static_cast<int>(v);
}

/// Runs fn(i) for i in [0, n) on `jobs` threads.  fn must only touch slot i
/// of any shared output; emission happens after the join.
void run_indexed(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs == 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    jobs = std::clamp(jobs, 1, std::max(1, n));
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

std::string scan_id_of(const std::string& path) { return fs::path(path).stem().string(); }

/// IO exceptions already lead with the path; prefix only the ones that don't.
std::string file_error(const std::string& path, const std::exception& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) return what;
    return path + ": " + what;
}

std::string sibling_path(const std::string& input, const std::string& suffix) {
    fs::path p(input);
    p.replace_extension();
    p += suffix;
    return p.string();
}

/// Prints collected per-file errors in input order; returns the exit code.
int flush_errors(const std::vector<std::string>& errors) {
    bool any = false;
    for (const auto& e : errors)
        if (!e.empty()) {
            std::fprintf(stderr, "spinecurve: %s\n", e.c_str());
            any = true;
        }
    return any ? 2 : 0;
}

// ---------------------------------------------------------------------------
// analyze

int cmd_analyze(const std::vector<std::string>& inputs, const PipelineFlags& flags, int jobs) {
    const AnalyzeConfig cfg = to_config(flags);
    const int n = static_cast<int>(inputs.size());
    std::vector<std::string> errors(inputs.size());
    std::vector<std::string> written(inputs.size());

    run_indexed(n, jobs, [&](int i) {
        try {
            const SoftMask mask = load_softmask(inputs[static_cast<std::size_t>(i)]);
            const AnalysisResult res = analyze_mask(mask, cfg);
            const nlohmann::json j = report_to_json(scan_id_of(inputs[static_cast<std::size_t>(i)]), res);
            const std::string out = sibling_path(inputs[static_cast<std::size_t>(i)], ".report.json");
            std::ofstream f(out, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + out);
            f << j.dump(2) << '\n';
            written[static_cast<std::size_t>(i)] = out;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = file_error(inputs[static_cast<std::size_t>(i)], e);
        }
    });

    for (const auto& w : written)
        if (!w.empty()) std::printf("%s\n", w.c_str());
    return flush_errors(errors);
}

// ---------------------------------------------------------------------------
// heatmap

int cmd_heatmap(const std::string& input, std::string output, const PipelineFlags& flags,
                const std::vector<double>& absolute) {
    const AnalyzeConfig cfg = to_config(flags);
    if (output.empty()) output = sibling_path(input, ".heatmap.pgm");

    const SoftMask mask = load_softmask(input);
    const AnalysisResult res = analyze_mask(mask, cfg);

    std::optional<std::pair<double, double>> range;
    if (!absolute.empty()) range = std::make_pair(absolute.at(0), absolute.at(1));
    const ScanGrid heat = heatmap_values(res.profile, mask, cfg.channel, cfg.support_threshold, range);

    const std::string ext = fs::path(output).extension().string();
    if (ext == ".ppm") {
        ScanGrid t = heat;
        for (double& v : t.values) v /= 255.0;
        ScanGrid underlay(mask.rows, mask.cols, 0.0);
        const auto& ch = mask.channels[static_cast<std::size_t>(cfg.channel)];
        for (std::size_t k = 0; k < underlay.values.size(); ++k) underlay.values[k] = ch[k];
        save_heat_ppm(output, t, &underlay);
    } else {
        save_pgm(output, heat);
    }
    std::printf("%s\n", output.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// rank

struct RankEntry {
    std::string scan_id;
    double max_curvature = 1.0;
    std::optional<double> predicted_angle_deg;
    bool scoliosis_flag = false;
};

int cmd_rank(const std::vector<std::string>& inputs, const PipelineFlags& flags, int jobs,
             const std::string& model_path, const std::string& format) {
    const AnalyzeConfig cfg = to_config(flags);
    std::optional<RegressorModel> model;
    if (!model_path.empty()) model = load_model(model_path);

    const int n = static_cast<int>(inputs.size());
    std::vector<std::string> errors(inputs.size());
    std::vector<std::optional<RankEntry>> rows(inputs.size());

    run_indexed(n, jobs, [&](int i) {
        try {
            const SoftMask mask = load_softmask(inputs[static_cast<std::size_t>(i)]);
            const AnalysisResult res = analyze_mask(mask, cfg);
            RankEntry e;
            e.scan_id = scan_id_of(inputs[static_cast<std::size_t>(i)]);
            e.max_curvature = res.report.max_curvature;
            e.scoliosis_flag = res.report.scoliosis_flag;
            if (model) e.predicted_angle_deg = predict_angle(*model, e.max_curvature).angle_deg;
            rows[static_cast<std::size_t>(i)] = e;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = file_error(inputs[static_cast<std::size_t>(i)], e);
        }
    });

    std::vector<RankEntry> ok;
    for (const auto& r : rows)
        if (r) ok.push_back(*r);
    std::sort(ok.begin(), ok.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.max_curvature != b.max_curvature) return a.max_curvature > b.max_curvature;
        return a.scan_id < b.scan_id;
    });

    if (format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : ok) {
            nlohmann::json j = {{"scan_id", e.scan_id},
                                {"max_curvature", e.max_curvature},
                                {"scoliosis_flag", e.scoliosis_flag}};
            if (e.predicted_angle_deg)
                j["predicted_angle_deg"] = *e.predicted_angle_deg;
            else
                j["predicted_angle_deg"] = nullptr;
            arr.push_back(std::move(j));
        }
        std::printf("%s\n", arr.dump(2).c_str());
    } else {
        std::printf("scan_id\tmax_curvature\tpredicted_angle_deg\tscoliosis_flag\n");
        for (const auto& e : ok) {
            std::string pred = "-";
            if (e.predicted_angle_deg) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.2f", *e.predicted_angle_deg);
                pred = buf;
            }
            std::printf("%s\t%.6f\t%s\t%s\n", e.scan_id.c_str(), e.max_curvature, pred.c_str(),
                        e.scoliosis_flag ? "true" : "false");
        }
    }
    return flush_errors(errors);
}

// ---------------------------------------------------------------------------
// calibrate

int cmd_calibrate(const std::string& train_path, const std::string& val_path, const std::string& out_path,
                  const std::string& log_path, const TrainConfig& cfg) {
    const std::vector<LabeledSample> train_set = load_training_csv(train_path);
    if (train_set.empty()) throw std::runtime_error(train_path + ": no training samples");
    TrainResult result;
    if (val_path.empty()) {
        result = train(train_set, cfg);
    } else {
        const std::vector<LabeledSample> val_set = load_training_csv(val_path);
        if (val_set.empty()) throw std::runtime_error(val_path + ": no validation samples");
        result = train(train_set, val_set, cfg);
    }

    save_model(out_path, result.model);
    if (!log_path.empty()) {
        std::ofstream f(log_path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + log_path);
        f << "epoch,train_nll,val_nll,learning_rate,event\n";
        char buf[192];
        for (const auto& e : result.log) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%s\n", e.epoch, e.train_loss, e.val_loss,
                          e.learning_rate, e.event.c_str());
            f << buf;
        }
    }
    std::printf("epochs_run %d\nbest_val_nll %.6f\nearly_stopped %s\nmodel %s\n", result.epochs_run,
                result.best_val_loss, result.early_stopped ? "true" : "false", out_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(int count, const std::string& shape, std::uint64_t seed, const std::string& out_dir, double lo_deg,
              double hi_deg, double noise, int rows, int cols, double profile_sigma, const SynthSpec& base) {
    fs::create_directories(out_dir);
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["seed"] = seed;
    manifest["count"] = count;
    nlohmann::json samples = nlohmann::json::array();

    if (!shape.empty()) {
        SynthSpec spec = base;
        spec.shape = shape_from_name(shape);
        spec.rows = rows;
        spec.cols = cols;
        spec.noise_sigma = noise;
        for (int i = 0; i < count; ++i) {
            spec.seed = seed + static_cast<std::uint64_t>(i);
            char id[64];
            std::snprintf(id, sizeof id, "%s_%04d", shape_name(spec.shape), i);
            auto [mask, gt] = generate_softmask(spec, profile_sigma);
            const std::string file = (fs::path(out_dir) / (std::string(id) + ".smask")).string();
            save_softmask(file, mask);
            samples.push_back({{"id", id},
                               {"file", std::string(id) + ".smask"},
                               {"shape", shape_name(gt.shape)},
                               {"angle_deg", gt.apex_angle_deg},
                               {"noc_class", gt.noc_class},
                               {"apex_rows", gt.apex_rows}});
        }
    } else {
        const auto corpus = generate_corpus(count, lo_deg, hi_deg, seed, noise, rows, cols, profile_sigma);
        for (const auto& s : corpus) {
            const std::string file = (fs::path(out_dir) / (s.id + ".smask")).string();
            save_softmask(file, s.mask);
            samples.push_back({{"id", s.id},
                               {"file", s.id + ".smask"},
                               {"family", std::string(1, s.family)},
                               {"target_angle_deg", s.target_angle_deg},
                               {"angle_deg", s.gt.apex_angle_deg},
                               {"amplitude", s.amplitude},
                               {"noc_class", s.gt.noc_class}});
        }
    }

    manifest["samples"] = std::move(samples);
    const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream f(mpath, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + mpath);
    f << manifest.dump(2) << '\n';
    std::printf("%s\n", mpath.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spinal geometry from soft segmentation masks"};
    app.require_subcommand(1);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Write a <input>.report.json next to each input mask");
    std::vector<std::string> an_inputs;
    PipelineFlags an_flags;
    int an_jobs = default_jobs();
    analyze->add_option("inputs", an_inputs, "Input .smask files")->required()->expected(-1);
    add_pipeline_flags(analyze, an_flags);
    analyze->add_option("--jobs", an_jobs, "Worker threads; 0 means hardware concurrency");

    // heatmap
    auto* heatmap = app.add_subcommand("heatmap", "Render a per-row curvature heat image");
    std::string hm_input, hm_output;
    PipelineFlags hm_flags;
    std::vector<double> hm_absolute;
    heatmap->add_option("input", hm_input, "Input .smask file")->required();
    heatmap->add_option("-o,--output", hm_output, "Output image (.pgm grayscale, .ppm colormapped)");
    heatmap->add_option("--absolute", hm_absolute, "Fixed kappa range lo,hi instead of per-scan scaling")
        ->delimiter(',')
        ->expected(2);
    add_pipeline_flags(heatmap, hm_flags);

    // rank
    auto* rank = app.add_subcommand("rank", "Order scans by curvature score, worst first");
    std::vector<std::string> rk_inputs;
    PipelineFlags rk_flags;
    std::string rk_model, rk_format = "tsv";
    int rk_jobs = default_jobs();
    rank->add_option("inputs", rk_inputs, "Input .smask files")->required()->expected(-1);
    rank->add_option("--model", rk_model, "Angle regressor model JSON; omitted leaves predictions blank");
    rank->add_option("--format", rk_format, "Output format")->check(CLI::IsMember({"tsv", "json"}))
        ->capture_default_str();
    rank->add_option("--jobs", rk_jobs, "Worker threads; 0 means hardware concurrency");
    add_pipeline_flags(rank, rk_flags);

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Fit the curvature-to-angle regressor");
    std::string cb_train, cb_val, cb_out = "model.json", cb_log;
    TrainConfig cb_cfg;
    calibrate->add_option("--train", cb_train, "Training CSV (kappa,angle_deg)")->required();
    calibrate->add_option("--val", cb_val, "Validation CSV; omitted splits --train internally");
    calibrate->add_option("--out", cb_out, "Model JSON output path")->capture_default_str();
    calibrate->add_option("--log", cb_log, "Per-epoch training log CSV");
    calibrate->add_option("--lr", cb_cfg.learning_rate, "Adam learning rate")->capture_default_str();
    calibrate->add_option("--epochs", cb_cfg.max_epochs, "Epoch budget")->capture_default_str();
    calibrate->add_option("--batch-size", cb_cfg.batch_size, "Minibatch size")->capture_default_str();
    calibrate->add_option("--patience", cb_cfg.patience, "Epochs without improvement before lr decay")
        ->capture_default_str();
    calibrate->add_option("--min-improvement", cb_cfg.min_improvement, "Validation improvement threshold")
        ->capture_default_str();
    calibrate->add_option("--val-fraction", cb_cfg.val_fraction, "Held-out fraction when --val is omitted")
        ->capture_default_str();
    calibrate->add_option("--seed", cb_cfg.seed, "Shuffle and init seed")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic masks with a ground-truth manifest");
    int sy_count = 1, sy_rows = 416, sy_cols = 128;
    std::string sy_shape, sy_dir = ".";
    std::uint64_t sy_seed = 0;
    double sy_lo = 1.0, sy_hi = 45.0, sy_noise = 0.3, sy_profile_sigma = 2.0;
    SynthSpec sy_base;
    synth->add_option("-n,--count", sy_count, "Number of masks")->capture_default_str();
    synth->add_option("--shape", sy_shape, "Fixed shape (straight|arc|s_curve|vshape|sinusoid|bump); "
                                           "omitted draws a mixed corpus");
    synth->add_option("--seed", sy_seed, "Base seed")->capture_default_str();
    synth->add_option("--out-dir", sy_dir, "Output directory")->capture_default_str();
    synth->add_option("--lo", sy_lo, "Corpus minimum apex angle, degrees")->capture_default_str();
    synth->add_option("--hi", sy_hi, "Corpus maximum apex angle, degrees")->capture_default_str();
    synth->add_option("--noise", sy_noise, "Centerline jitter sigma, px")->capture_default_str();
    synth->add_option("--rows", sy_rows, "Mask rows")->capture_default_str();
    synth->add_option("--cols", sy_cols, "Mask cols")->capture_default_str();
    synth->add_option("--profile-sigma", sy_profile_sigma, "Cross-section softness, px")->capture_default_str();
    synth->add_option("--amplitude", sy_base.amplitude, "Shape amplitude, px")->capture_default_str();
    synth->add_option("--arc-radius", sy_base.arc_radius, "Arc radius, px")->capture_default_str();
    synth->add_option("--apex-row", sy_base.apex_row, "Apex row; -1 centers it")->capture_default_str();
    synth->add_option("--apex-offset", sy_base.apex_offset, "V-shape tip column offset, px")->capture_default_str();
    synth->add_option("--wavelength", sy_base.wavelength, "Sinusoid wavelength, px; 0 spans the frame")
        ->capture_default_str();
    synth->add_option("--phase", sy_base.phase, "Sinusoid phase, radians")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*analyze) return cmd_analyze(an_inputs, an_flags, an_jobs);
        if (*heatmap) return cmd_heatmap(hm_input, hm_output, hm_flags, hm_absolute);
        if (*rank) return cmd_rank(rk_inputs, rk_flags, rk_jobs, rk_model, rk_format);
        if (*calibrate) return cmd_calibrate(cb_train, cb_val, cb_out, cb_log, cb_cfg);
        if (*synth)
            return cmd_synth(sy_count, sy_shape, sy_seed, sy_dir, sy_lo, sy_hi, sy_noise, sy_rows, sy_cols,
                             sy_profile_sigma, sy_base);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "spinecurve: %s\n", e.what());
        return 1;
    }
    return 0;
}
