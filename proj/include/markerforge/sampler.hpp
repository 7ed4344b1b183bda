#pragma once

#include "markerforge/geometry.hpp"
#include "markerforge/rng.hpp"

namespace markerforge::flyingmarkers {

using geometry::AffineTransform;
using geometry::GeometricTransform;
using geometry::Homography;
using geometry::ThinPlateSpline;

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SamplerConfig {
    Range rotation{-kPi / 3.0, kPi / 3.0};
    Range shear{-kPi / 2.0, kPi / 2.0};
    Range scale{0.75, 1.25};
    Range tps_perturbation{-0.5, 0.5};
    std::array<double, 3> kind_weights{1.0, 1.0, 1.0};  // affine, homography, tps
    Size canvas{640, 480};
    uint64_t master_seed = 0;

    static constexpr double kPi = 3.14159265358979323846;

    // Throws ConfigError when a range has lo > hi, a weight is negative or
    // all weights are zero, or the canvas is not positive.
    void validate() const;
};

// Rotation, shear and scale drawn uniformly from the configured ranges, then
// a placement translation drawn uniformly over the translations that keep the
// linearly warped marker's bounding box inside the canvas. The linear part is
// redrawn (up to 100 times) when no placement fits; throws PlacementError
// once the budget is spent.
AffineTransform sample_affine(Rng& rng, const SamplerConfig& config,
                              Size marker_size);

// Maps the marker corners onto four points drawn uniformly inside the canvas,
// redrawing until the destination quad is convex, keeps the source winding
// and has every interior angle within [20, 160] degrees. Throws SamplingError
// after 1000 rejected draws.
Homography sample_homography(Rng& rng, Size marker_size, Size canvas_size);

// Identity TPS with an independent uniform perturbation added to each of the
// 18 parameters, redrawn (up to 100 times) while the map folds, i.e. the
// Jacobian determinant is <= 0 somewhere on a 17x17 grid over [-1,1]^2.
ThinPlateSpline sample_tps(Rng& rng, const SamplerConfig& config);

// Picks a transform kind by the configured weights and dispatches to the
// matching sampler; the result carries marker_size and the config canvas.
GeometricTransform sample_transform(Rng& rng, const SamplerConfig& config,
                                    Size marker_size);

// True when the quad is convex with all cross products matching the source
// winding (positive in image coordinates) and every interior angle lies in
// [angle_lo_deg, angle_hi_deg]. Exposed for the rejection-rule tests.
bool quad_acceptable(const std::array<geometry::Point2, 4>& quad,
                     double angle_lo_deg = 20.0, double angle_hi_deg = 160.0);

// Smallest Jacobian determinant of the TPS over a grid x grid lattice
// covering [-1,1]^2.
double tps_min_jacobian(const ThinPlateSpline& tps, int grid = 17);

}  // namespace markerforge::flyingmarkers
