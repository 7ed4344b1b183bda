#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "markerforge/benchmark.hpp"
#include "markerforge/dataset.hpp"
#include "markerforge/losses.hpp"
#include "markerforge/matcher.hpp"
#include "markerforge/metrics.hpp"
#include "markerforge/sampler.hpp"
#include "markerforge/serialize.hpp"
#include "markerforge/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace markerforge;

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("MARKERFORGE_LOG");
    if (!env) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << msg << '\n';
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << msg << '\n';
}

std::vector<std::string> list_pngs(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            out.push_back(entry.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ConfigError("no .png files in " + dir);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

flyingmarkers::Range to_range(const std::vector<double>& v) {
    return {v[0], v[1]};
}

struct EstimatorOptions {
    std::string method = "gt";
    uint64_t seed = 0;
    int iterations = 2000;
    double threshold = 3.0;
    int max_corners = 500;
    int levels = 4;
    int search_radius = 4;
    int sweeps = 1;
    double min_peak = 0.2;
};

matcher::MatchOutcome run_homography_estimator(const imaging::Image& marker,
                                               const imaging::Image& reference,
                                               const EstimatorOptions& opt) {
    const auto corners_m = matcher::detect_corners(marker, opt.max_corners);
    const auto corners_r = matcher::detect_corners(reference, opt.max_corners);
    const auto matches =
        matcher::match_descriptors(marker, corners_m, reference, corners_r);
    matcher::RansacParams params;
    params.iterations = opt.iterations;
    params.inlier_threshold_px = opt.threshold;
    params.seed = opt.seed;
    return matcher::ransac_homography(matches, params,
                                      {marker.width, marker.height},
                                      {reference.width, reference.height});
}

matcher::MatchOutcome run_dense_estimator(const imaging::Image& marker,
                                          const imaging::Image& reference,
                                          const EstimatorOptions& opt) {
    matcher::DenseMatchParams params;
    params.levels = opt.levels;
    params.search_radius = opt.search_radius;
    params.iterations = opt.sweeps;
    params.min_peak = opt.min_peak;
    return matcher::MatchOutcome::success(
        matcher::dense_match(marker, reference, params));
}

benchmark::Estimator make_estimator(const EstimatorOptions& opt) {
    if (opt.method == "gt") {
        return [](const imaging::Image&, const imaging::Image&,
                  const benchmark::BenchmarkSample& sample) {
            if (!sample.gt_flow_path) {
                return matcher::MatchOutcome::failed("no ground truth");
            }
            return matcher::MatchOutcome::success(
                imaging::read_flo(*sample.gt_flow_path));
        };
    }
    if (opt.method == "homography") {
        return [opt](const imaging::Image& m, const imaging::Image& r,
                     const benchmark::BenchmarkSample&) {
            return run_homography_estimator(m, r, opt);
        };
    }
    if (opt.method == "dense") {
        return [opt](const imaging::Image& m, const imaging::Image& r,
                     const benchmark::BenchmarkSample&) {
            return run_dense_estimator(m, r, opt);
        };
    }
    throw ConfigError("unknown estimator: " + opt.method);
}

json loss_report_json(const losses::LossReport& r) {
    json j{{"total", r.total}, {"count", r.count}, {"mean", r.mean()}};
    if (r.degenerate_count > 0) j["degenerate_count"] = r.degenerate_count;
    return j;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
    std::string markers_dir;
    std::string backgrounds_dir;
    std::string out_dir;
    std::string name = "flyingmarkers";
    int64_t count = 0;
    uint64_t seed = 0;
    int workers = 1;
    int max_redraws = 16;
    std::vector<double> rotation;
    std::vector<double> shear;
    std::vector<double> scale;
    std::vector<double> tps;
    std::vector<double> kind_weights;
    std::vector<int> canvas;
};

int cmd_generate(const GenerateArgs& a) {
    flyingmarkers::GeneratorConfig config;
    config.count = a.count;
    config.output_dir = a.out_dir;
    config.name = a.name;
    config.workers = a.workers;
    config.max_redraws = a.max_redraws;
    config.sampler.master_seed = a.seed;
    if (!a.rotation.empty()) config.sampler.rotation = to_range(a.rotation);
    if (!a.shear.empty()) config.sampler.shear = to_range(a.shear);
    if (!a.scale.empty()) config.sampler.scale = to_range(a.scale);
    if (!a.tps.empty()) config.sampler.tps_perturbation = to_range(a.tps);
    if (!a.kind_weights.empty()) {
        for (int i = 0; i < 3; ++i) config.sampler.kind_weights[i] = a.kind_weights[i];
    }
    if (!a.canvas.empty()) config.sampler.canvas = {a.canvas[0], a.canvas[1]};
    config.sampler.validate();

    const auto markers = list_pngs(a.markers_dir);
    const auto backgrounds = list_pngs(a.backgrounds_dir);
    log_debug("markers: " + std::to_string(markers.size()) +
              ", backgrounds: " + std::to_string(backgrounds.size()));

    const auto start = std::chrono::steady_clock::now();
    const auto manifest =
        flyingmarkers::generate_dataset(config, markers, backgrounds);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    json summary{{"samples", manifest.count},
                 {"manifest", (fs::path(a.out_dir) / "manifest.json").string()},
                 {"elapsed_s", elapsed}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// --- match ------------------------------------------------------------------

struct MatchArgs {
    EstimatorOptions est;
    std::string marker_path;
    std::string reference_path;
    std::string sample_dir;
    std::string out_path;
};

int cmd_match(const MatchArgs& a) {
    matcher::MatchOutcome outcome = matcher::MatchOutcome::failed("unset");
    if (a.est.method == "gt") {
        if (a.sample_dir.empty()) {
            throw ConfigError("--method gt needs --sample");
        }
        outcome = matcher::MatchOutcome::success(
            imaging::read_flo((fs::path(a.sample_dir) / "flow.flo").string()));
    } else {
        if (a.marker_path.empty() || a.reference_path.empty()) {
            throw ConfigError("--marker and --ref are required");
        }
        const auto marker = imaging::read_png(a.marker_path);
        const auto reference = imaging::read_png(a.reference_path);
        if (a.est.method == "homography") {
            outcome = run_homography_estimator(marker, reference, a.est);
        } else if (a.est.method == "dense") {
            outcome = run_dense_estimator(marker, reference, a.est);
        } else {
            throw ConfigError("unknown estimator: " + a.est.method);
        }
    }

    json summary{{"method", a.est.method}, {"failed", !outcome.ok()}};
    if (outcome.ok()) {
        imaging::write_flo(a.out_path, *outcome.flow);
        summary["out"] = a.out_path;
        summary["valid_pixels"] = outcome.flow->valid_count();
    } else {
        summary["reason"] = outcome.failure_reason;
        json sentinel{{"failed", true}, {"reason", outcome.failure_reason}};
        write_text(a.out_path + ".failed.json", sentinel.dump(2) + "\n");
        summary["sentinel"] = a.out_path + ".failed.json";
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

// --- losses -----------------------------------------------------------------

struct LossesArgs {
    std::string flow_path;
    std::string transform_path;
    std::string pose_path;
    std::string syn_map_path;
    std::string sed_map_path;
    double sed_weight = 1.0;
    double sed_clip = 0.0;  // 0 = off
    bool gradcheck = false;
    uint64_t seed = 0;
    int samples = 200;
};

json gradcheck_syn(const imaging::FlowField& flow,
                   const geometry::GeometricTransform& t, Rng& rng,
                   int samples) {
    const auto grad = losses::grad_l_syn(flow, t);
    const double h = 1e-4;
    double max_abs = 0.0;
    int checked = 0;
    for (int k = 0; k < samples; ++k) {
        const int x = static_cast<int>(rng.below(flow.width));
        const int y = static_cast<int>(rng.below(flow.height));
        if (!flow.is_valid(x, y)) continue;
        const auto p = flow.at(x, y);
        const auto target = geometry::apply_transform(
            t, {static_cast<double>(x), static_cast<double>(y)});
        const double d[2] = {p.x - target.x, p.y - target.y};
        const geometry::Point2 g = grad.at(x, y);
        const double analytic[2] = {g.x, g.y};
        for (int c = 0; c < 2; ++c) {
            if (std::abs(d[c]) < 1e-2) continue;  // kink neighborhood
            const double lp = std::abs(d[c] + h) + std::abs(d[1 - c]);
            const double lm = std::abs(d[c] - h) + std::abs(d[1 - c]);
            const double diff = (lp - lm) / (2.0 * h);
            max_abs = std::max(max_abs, std::abs(diff - analytic[c]));
            ++checked;
        }
    }
    return json{{"max_abs_dev", max_abs}, {"checked", checked}};
}

json gradcheck_sed(const imaging::FlowField& flow,
                   const geometry::FundamentalMatrix& f, Rng& rng,
                   int samples) {
    const auto grad = losses::grad_l_sed(flow, f);
    const double h = 1e-4;
    double max_abs = 0.0, max_rel = 0.0;
    int checked = 0;
    for (int k = 0; k < samples; ++k) {
        const int x = static_cast<int>(rng.below(flow.width));
        const int y = static_cast<int>(rng.below(flow.height));
        if (!flow.is_valid(x, y)) continue;
        const geometry::Point2 src{static_cast<double>(x),
                                   static_cast<double>(y)};
        const auto p = flow.at(x, y);
        double base;
        try {
            base = geometry::sed(src, p, f);
        } catch (const EpipoleDegenerateError&) {
            continue;
        }
        if (base < 1e-2) continue;  // kink neighborhood (|r| = 0)
        const geometry::Point2 g = grad.at(x, y);
        const double analytic[2] = {g.x, g.y};
        for (int c = 0; c < 2; ++c) {
            geometry::Point2 pp = p, pm = p;
            (c == 0 ? pp.x : pp.y) += h;
            (c == 0 ? pm.x : pm.y) -= h;
            double fd;
            try {
                fd = (geometry::sed(src, pp, f) - geometry::sed(src, pm, f)) /
                     (2.0 * h);
            } catch (const EpipoleDegenerateError&) {
                continue;
            }
            const double dev = std::abs(fd - analytic[c]);
            max_abs = std::max(max_abs, dev);
            if (std::abs(fd) > 1e-9) {
                max_rel = std::max(max_rel, dev / std::abs(fd));
            }
            ++checked;
        }
    }
    return json{
        {"max_abs_dev", max_abs}, {"max_rel_dev", max_rel}, {"checked", checked}};
}

int cmd_losses(const LossesArgs& a) {
    if (a.transform_path.empty() && a.pose_path.empty()) {
        throw ConfigError("provide --transform and/or --pose");
    }
    const auto flow = imaging::read_flo(a.flow_path);
    const double clip = a.sed_clip > 0.0 ? a.sed_clip : losses::kNoClip;

    json out = json::object();
    Rng rng(a.seed);

    std::optional<geometry::GeometricTransform> transform;
    std::optional<geometry::FundamentalMatrix> fundamental;
    if (!a.transform_path.empty()) {
        transform = geometry::load_transform(a.transform_path);
    }
    if (!a.pose_path.empty()) {
        const auto pair = geometry::load_posed_pair(a.pose_path);
        fundamental =
            geometry::fundamental_from_pose(pair.k_a, pair.k_b, pair.pose);
    }

    if (transform) {
        const bool keep = !a.syn_map_path.empty();
        const auto report = losses::l_syn(flow, *transform, keep);
        out["l_syn"] = loss_report_json(report);
        if (keep) {
            imaging::write_pfm(a.syn_map_path, report.width, report.height,
                               report.per_pixel);
        }
        if (a.gradcheck) {
            out["gradcheck"]["l_syn"] =
                gradcheck_syn(flow, *transform, rng, a.samples);
        }
    }
    if (fundamental) {
        const bool keep = !a.sed_map_path.empty();
        const auto report = losses::l_sed(flow, *fundamental, keep, clip);
        out["l_sed"] = loss_report_json(report);
        if (keep) {
            imaging::write_pfm(a.sed_map_path, report.width, report.height,
                               report.per_pixel);
        }
        if (a.gradcheck) {
            out["gradcheck"]["l_sed"] =
                gradcheck_sed(flow, *fundamental, rng, a.samples);
        }
    }
    if (transform && fundamental) {
        const auto all =
            losses::l_all(flow, *transform, flow, *fundamental, a.sed_weight);
        out["l_all"] = loss_report_json(all);
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

// --- bench / report ---------------------------------------------------------

struct BenchArgs {
    EstimatorOptions est;
    std::string manifest_path;
    std::string out_path;
    std::string table_path;
    std::string svg_path;
    int workers = 1;
};

int cmd_bench(const BenchArgs& a) {
    std::vector<benchmark::BenchmarkSample> samples;
    {
        std::ifstream in(a.manifest_path);
        if (!in) throw IoError("cannot open " + a.manifest_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(a.manifest_path + ": " + e.what());
        }
        samples = j.is_array()
                      ? benchmark::load_bench_manifest(a.manifest_path)
                      : benchmark::samples_from_dataset(a.manifest_path);
    }
    log_info("benchmarking " + std::to_string(samples.size()) + " samples");

    benchmark::BenchConfig config;
    config.workers = a.workers;
    const auto report =
        benchmark::run_benchmark(samples, make_estimator(a.est), config);

    write_text(a.out_path, benchmark::report_to_json(report).dump(2) + "\n");
    if (!a.table_path.empty()) {
        write_text(a.table_path, benchmark::render_text_table(report));
    }
    if (!a.svg_path.empty()) {
        write_text(a.svg_path, benchmark::render_level_curves_svg(report));
    }

    for (const auto& [name, stats] : report.subsets) {
        char line[160];
        std::snprintf(line, sizeof(line),
                      "%s: scored %zu/%zu, failed %.1f%%, ssim %.4f, psnr %.2f",
                      name.c_str(), stats.scored, stats.total,
                      stats.failure_pct(), stats.ssim_mean, stats.psnr_mean);
        log_info(line);
    }
    return 0;
}

struct ReportArgs {
    std::string in_path;
    std::string format = "table";
    std::string out_path = "-";
};

int cmd_report(const ReportArgs& a) {
    std::ifstream in(a.in_path);
    if (!in) throw IoError("cannot open " + a.in_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(a.in_path + ": " + e.what());
    }
    const auto report = benchmark::report_from_json(j);
    if (a.format == "table") {
        write_text(a.out_path, benchmark::render_text_table(report));
    } else if (a.format == "svg") {
        write_text(a.out_path, benchmark::render_level_curves_svg(report));
    } else {
        throw ConfigError("unknown report format: " + a.format);
    }
    return 0;
}

void add_estimator_options(CLI::App* cmd, EstimatorOptions& est,
                           bool with_method = true) {
    if (with_method) {
        cmd->add_option("--method", est.method,
                        "Estimator: gt, homography or dense")
            ->default_val("gt");
    }
    cmd->add_option("--seed", est.seed, "RANSAC seed")->default_val(0);
    cmd->add_option("--iterations", est.iterations, "RANSAC iterations")
        ->default_val(2000);
    cmd->add_option("--threshold", est.threshold,
                    "RANSAC inlier threshold (px)")
        ->default_val(3.0);
    cmd->add_option("--max-corners", est.max_corners,
                    "Corner budget per image")
        ->default_val(500);
    cmd->add_option("--levels", est.levels, "Dense matcher pyramid levels")
        ->default_val(4);
    cmd->add_option("--search-radius", est.search_radius,
                    "Dense matcher refinement radius (px)")
        ->default_val(4);
    cmd->add_option("--sweeps", est.sweeps,
                    "Dense matcher refinement sweeps per level")
        ->default_val(1);
    cmd->add_option("--min-peak", est.min_peak,
                    "Dense matcher correlation floor")
        ->default_val(0.2);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic marker correspondence toolkit"};
    app.name("markerforge");
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file (flags take precedence)");

    GenerateArgs gen_args;
    auto* gen = app.add_subcommand("generate",
                                   "Generate a synthetic training dataset");
    gen->configurable();
    gen->add_option("--markers", gen_args.markers_dir,
                    "Directory of marker PNGs")
        ->required()
        ->check(CLI::ExistingDirectory);
    gen->add_option("--backgrounds", gen_args.backgrounds_dir,
                    "Directory of background PNGs")
        ->required()
        ->check(CLI::ExistingDirectory);
    gen->add_option("--out", gen_args.out_dir, "Output dataset directory")
        ->required();
    gen->add_option("--count", gen_args.count, "Number of samples")
        ->required()
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_args.seed, "Master seed")->default_val(0);
    gen->add_option("--workers", gen_args.workers, "Worker threads")
        ->default_val(1)
        ->check(CLI::PositiveNumber);
    gen->add_option("--name", gen_args.name, "Dataset name")
        ->default_val("flyingmarkers");
    gen->add_option("--max-redraws", gen_args.max_redraws,
                    "Per-sample redraw budget")
        ->default_val(16);
    gen->add_option("--rotation", gen_args.rotation,
                    "Rotation range (radians): LO HI")
        ->expected(2);
    gen->add_option("--shear", gen_args.shear, "Shear range (radians): LO HI")
        ->expected(2);
    gen->add_option("--scale", gen_args.scale, "Scale range: LO HI")
        ->expected(2);
    gen->add_option("--tps", gen_args.tps, "TPS perturbation range: LO HI")
        ->expected(2);
    gen->add_option("--kind-weights", gen_args.kind_weights,
                    "Transform kind weights: AFFINE HOMOGRAPHY TPS")
        ->expected(3);
    gen->add_option("--canvas", gen_args.canvas, "Canvas size: W H")
        ->expected(2);

    MatchArgs match_args;
    auto* match = app.add_subcommand("match",
                                     "Estimate a dense flow for one pair");
    match->configurable();
    add_estimator_options(match, match_args.est);
    match->add_option("--marker", match_args.marker_path, "Marker image");
    match->add_option("--ref", match_args.reference_path, "Reference image");
    match->add_option("--sample", match_args.sample_dir,
                      "Dataset sample directory (gt method)");
    match->add_option("--out", match_args.out_path, "Output flow file")
        ->required();

    LossesArgs losses_args;
    auto* losses_cmd =
        app.add_subcommand("losses", "Evaluate training losses on a flow");
    losses_cmd->configurable();
    losses_cmd->add_option("--flow", losses_args.flow_path, "Flow file")
        ->required()
        ->check(CLI::ExistingFile);
    losses_cmd->add_option("--transform", losses_args.transform_path,
                           "Transform JSON (enables the synthesis loss)");
    losses_cmd->add_option("--pose", losses_args.pose_path,
                           "Pose+intrinsics JSON (enables the epipolar loss)");
    losses_cmd->add_option("--syn-map", losses_args.syn_map_path,
                           "Per-pixel synthesis loss map (PFM)");
    losses_cmd->add_option("--sed-map", losses_args.sed_map_path,
                           "Per-pixel epipolar loss map (PFM)");
    losses_cmd->add_option("--sed-weight", losses_args.sed_weight,
                           "Weight of the epipolar term in the combined loss")
        ->default_val(1.0);
    losses_cmd->add_option("--sed-clip", losses_args.sed_clip,
                           "Clip per-pixel epipolar distance (0 = off)")
        ->default_val(0.0);
    losses_cmd->add_flag("--gradcheck", losses_args.gradcheck,
                         "Verify analytic gradients by finite differences");
    losses_cmd->add_option("--seed", losses_args.seed, "Gradient check seed")
        ->default_val(0);
    losses_cmd->add_option("--samples", losses_args.samples,
                           "Gradient check pixel draws")
        ->default_val(200);

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Run the benchmark protocol");
    bench->configurable();
    add_estimator_options(bench, bench_args.est);
    bench->add_option("--manifest", bench_args.manifest_path,
                      "Benchmark manifest (or dataset manifest) JSON")
        ->required()
        ->check(CLI::ExistingFile);
    bench->add_option("--out", bench_args.out_path, "Report JSON path")
        ->required();
    bench->add_option("--table", bench_args.table_path,
                      "Write the text table here ('-' for stdout)");
    bench->add_option("--svg", bench_args.svg_path,
                      "Write per-level SVG curves here");
    bench->add_option("--workers", bench_args.workers, "Worker threads")
        ->default_val(1)
        ->check(CLI::PositiveNumber);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report",
                                      "Render a stored report JSON");
    report->configurable();
    report->add_option("--in", report_args.in_path, "Report JSON")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--format", report_args.format, "table or svg")
        ->default_val("table");
    report->add_option("--out", report_args.out_path,
                       "Output path ('-' for stdout)")
        ->default_val("-");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_args);
        if (match->parsed()) return cmd_match(match_args);
        if (losses_cmd->parsed()) return cmd_losses(losses_args);
        if (bench->parsed()) return cmd_bench(bench_args);
        if (report->parsed()) return cmd_report(report_args);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}
