#pragma once

#include <optional>
#include <string>
#include <vector>

#include "markerforge/flow.hpp"
#include "markerforge/geometry.hpp"
#include "markerforge/image.hpp"
#include "markerforge/rng.hpp"

namespace markerforge::matcher {

using geometry::Point2;
using imaging::FlowField;
using imaging::Image;

struct Keypoint {
    Point2 location;
    double response = 0.0;
};

struct Match {
    Keypoint marker;
    Keypoint reference;
    double distance = 0.0;
};
using MatchSet = std::vector<Match>;

// Flow(FlowField) | Failed(reason). Failure is a value, not an exception.
struct MatchOutcome {
    std::optional<FlowField> flow;
    std::string failure_reason;

    bool ok() const { return flow.has_value(); }

    static MatchOutcome success(FlowField f) {
        MatchOutcome o;
        o.flow = std::move(f);
        return o;
    }
    static MatchOutcome failed(std::string reason) {
        MatchOutcome o;
        o.failure_reason = std::move(reason);
        return o;
    }
};

// Harris corners (k = 0.04, Sobel gradients, Gaussian-smoothed structure
// tensor): local maxima with non-maximum suppression over `nms_radius`,
// keeping responses above quality * max response, strongest first. Ties and
// ordering are broken by (response, y, x) so output is deterministic.
std::vector<Keypoint> detect_corners(const Image& img, int max_count,
                                     double quality = 0.01, int nms_radius = 5);

// Normalized patch descriptors (patch x patch grayscale, zero mean, unit
// norm) compared by L2 distance; mutual nearest neighbors passing the ratio
// test, sorted by distance. Keypoints whose patch leaves the image are
// dropped.
MatchSet match_descriptors(const Image& a, const std::vector<Keypoint>& pts_a,
                           const Image& b, const std::vector<Keypoint>& pts_b,
                           int patch = 11, double ratio = 0.9);

struct RansacParams {
    int iterations = 2000;
    double inlier_threshold_px = 3.0;
    uint64_t seed = 0;
};

// Classic RANSAC over minimal 4-point hypotheses. The inlier metric is the
// symmetric transfer error (forward and backward Euclidean residuals,
// averaged). Each iteration draws from its own seed derived from
// (params.seed, iteration), so raising the iteration count never changes
// earlier hypotheses and never lowers the best inlier count; ties keep the
// earliest hypothesis. The winner is refit with least-squares DLT on its
// inliers and rasterized into a dense flow over the marker grid.
MatchOutcome ransac_homography(const MatchSet& matches,
                               const RansacParams& params, Size marker_size,
                               Size reference_size);

struct DenseMatchParams {
    int levels = 4;          // pyramid depth, clamped so the top stays >= 12 px
    int search_radius = 4;   // per-level refinement window, full-search at top
    int iterations = 1;      // refinement sweeps per level
    int patch_radius = 3;    // ZNCC patch half-width
    double min_peak = 0.2;   // correlations below this mark the pixel invalid
};

// Coarse-to-fine ZNCC: exhaustive search at the coarsest level, windowed
// refinement plus quadratic subpixel peak interpolation on the way down, and
// a 5x5 median smoothness pass on the displacement field between levels.
FlowField dense_match(const Image& marker, const Image& reference,
                      const DenseMatchParams& params = {});

}  // namespace markerforge::matcher
