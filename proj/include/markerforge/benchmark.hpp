#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "markerforge/flow.hpp"
#include "markerforge/image.hpp"
#include "markerforge/matcher.hpp"

namespace markerforge::benchmark {

using imaging::FlowField;
using imaging::Image;

struct EpeResult {
    int width = 0;
    int height = 0;
    std::vector<float> per_pixel;  // 0 at pixels outside the evaluation set
    double mean = 0.0;
    std::size_t count = 0;
};

// Euclidean endpoint error over pixels valid in both fields. Throws
// DimensionMismatchError on shape mismatch, EmptyRegionError when the valid
// masks do not intersect.
EpeResult epe(const FlowField& flow_pred, const FlowField& gt);

// Fraction of gt-valid pixels with endpoint error strictly below delta.
// Pixels the prediction marks invalid count against the score. Throws
// EmptyRegionError when gt has no valid pixels.
double pck(const FlowField& flow_pred, const FlowField& gt, double delta);

struct AlignmentScore {
    bool scored = false;  // false when the warp covers nothing
    double ssim = 0.0;
    double psnr = 0.0;
    std::size_t valid_count = 0;
};

// Warps the marker by the predicted flow and scores the covered region
// against the twin when given (lighting protocol), else the reference.
AlignmentScore alignment_eval(const Image& marker, const FlowField& flow_pred,
                              const Image& reference,
                              const Image* twin = nullptr);

struct BenchmarkSample {
    std::string id;
    std::string subset;  // deformation | viewpoint | lighting | synthetic
    int level = 1;
    std::string marker_path;
    std::string reference_path;
    std::optional<std::string> twin_path;
    std::optional<std::string> gt_flow_path;
};

struct EvalRecord {
    std::string id;
    std::string subset;
    int level = 1;
    bool scored = false;
    std::string failure_reason;  // set when scored is false
    double ssim = 0.0;
    double psnr = 0.0;
    std::size_t valid_count = 0;
    std::optional<double> epe_mean;
    std::optional<std::array<double, 3>> pck;  // at the configured deltas
};

struct LevelStats {
    int level = 0;
    std::size_t scored = 0;
    double ssim_mean = 0.0;
    double psnr_mean = 0.0;
};

struct SubsetStats {
    std::size_t total = 0;
    std::size_t scored = 0;
    std::size_t failed = 0;
    // Aggregates cover scored records only; medians are lower-medians.
    double ssim_mean = 0.0;
    double ssim_median = 0.0;
    double psnr_mean = 0.0;
    double psnr_median = 0.0;
    std::optional<double> epe_mean;
    std::optional<std::array<double, 3>> pck_mean;
    std::vector<LevelStats> levels;  // ascending by level

    double failure_pct() const {
        return total ? 100.0 * static_cast<double>(failed) / total : 0.0;
    }
};

struct BenchmarkReport {
    std::array<double, 3> pck_deltas{1.0, 3.0, 5.0};
    std::vector<EvalRecord> records;           // ascending by id
    std::map<std::string, SubsetStats> subsets;
};

using Estimator = std::function<matcher::MatchOutcome(
    const Image& marker, const Image& reference, const BenchmarkSample&)>;

struct BenchConfig {
    int workers = 1;
    std::array<double, 3> pck_deltas{1.0, 3.0, 5.0};
};

// Runs the estimator over every sample (in parallel, deterministic result),
// marks estimator failures and empty-coverage warps as failed, and
// aggregates per subset and per difficulty level over the scored records.
BenchmarkReport run_benchmark(const std::vector<BenchmarkSample>& samples,
                              const Estimator& estimator,
                              const BenchConfig& config = {});

// Benchmark manifest: a JSON array of {id, subset, level, marker, reference,
// twin?, gt_flow?}. Relative paths resolve against the manifest's directory.
// Levels are validated per subset (deformation 1-5, viewpoint 1-4, lighting
// 1-10); lighting samples must carry a twin, synthetic ones ground truth.
std::vector<BenchmarkSample> load_bench_manifest(const std::string& path);

// Adapts a generated dataset manifest into synthetic benchmark samples (the
// reference doubles as ground truth supplier via each sample's flow file).
std::vector<BenchmarkSample> samples_from_dataset(
    const std::string& manifest_path);

nlohmann::json report_to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const nlohmann::json& j);

// Aligned-column text table: one block per subset plus per-level rows.
std::string render_text_table(const BenchmarkReport& report);

// Two stacked line charts (mean SSIM and mean PSNR vs difficulty level, one
// series per subset).
std::string render_level_curves_svg(const BenchmarkReport& report);

struct StandinConfig {
    std::string output_dir;
    uint64_t seed = 0;
    Size canvas{640, 480};
    Size marker{160, 120};
    int markers = 10;
    int pictures = 10;
};

// Synthetic stand-in for the physical benchmark: deformation realized by
// graded TPS, viewpoint by graded plane-rotation homographies, lighting by
// exposure curves over the reference with a clean twin. Every record carries
// ground-truth flow. Writes images, flows and manifest.json under
// output_dir; returns the manifest path.
std::string make_dvl_standin(const StandinConfig& config);

}  // namespace markerforge::benchmark
