#include "markerforge/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace markerforge::flyingmarkers {

using geometry::Point2;

namespace {

constexpr int kPlacementBudget = 100;
constexpr int kQuadBudget = 1000;
constexpr int kFoldBudget = 100;

double draw(Rng& rng, Range r) { return rng.uniform(r.lo, r.hi); }

std::array<Point2, 4> marker_corners(Size s) {
    const double w = s.width - 1.0;
    const double h = s.height - 1.0;
    return {Point2{0.0, 0.0}, {w, 0.0}, {w, h}, {0.0, h}};
}

}  // namespace

void SamplerConfig::validate() const {
    for (Range r : {rotation, shear, scale, tps_perturbation}) {
        if (!(r.lo <= r.hi)) throw ConfigError("sampler range has lo > hi");
    }
    double total = 0.0;
    for (double w : kind_weights) {
        if (!(w >= 0.0)) throw ConfigError("kind weights must be nonnegative");
        total += w;
    }
    if (total <= 0.0) throw ConfigError("kind weights must not all be zero");
    if (canvas.width <= 0 || canvas.height <= 0) {
        throw ConfigError("canvas must be positive");
    }
}

AffineTransform sample_affine(Rng& rng, const SamplerConfig& config,
                              Size marker_size) {
    config.validate();
    if (marker_size.width <= 0 || marker_size.height <= 0) {
        throw ConfigError("marker size must be positive");
    }

    for (int attempt = 0; attempt < kPlacementBudget; ++attempt) {
        const double theta = draw(rng, config.rotation);
        const double phi = draw(rng, config.shear);
        const double s = draw(rng, config.scale);
        const auto linear =
            AffineTransform::from_params(theta, phi, s, {0.0, 0.0});

        double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
        bool first = true;
        for (Point2 c : marker_corners(marker_size)) {
            const Point2 q = linear.apply(c);
            if (first) {
                xmin = xmax = q.x;
                ymin = ymax = q.y;
                first = false;
            } else {
                xmin = std::min(xmin, q.x);
                xmax = std::max(xmax, q.x);
                ymin = std::min(ymin, q.y);
                ymax = std::max(ymax, q.y);
            }
        }

        const double tx_lo = -xmin;
        const double tx_hi = config.canvas.width - 1.0 - xmax;
        const double ty_lo = -ymin;
        const double ty_hi = config.canvas.height - 1.0 - ymax;
        if (tx_lo > tx_hi || ty_lo > ty_hi) continue;

        const Point2 t{rng.uniform(tx_lo, tx_hi), rng.uniform(ty_lo, ty_hi)};
        return AffineTransform::from_params(theta, phi, s, t);
    }
    throw PlacementError("no in-canvas placement found for the marker");
}

bool quad_acceptable(const std::array<Point2, 4>& quad, double angle_lo_deg,
                     double angle_hi_deg) {
    const double lo = angle_lo_deg * SamplerConfig::kPi / 180.0;
    const double hi = angle_hi_deg * SamplerConfig::kPi / 180.0;
    for (int i = 0; i < 4; ++i) {
        const Point2 v = quad[i];
        const Point2 prev = quad[(i + 3) % 4];
        const Point2 next = quad[(i + 1) % 4];
        const Point2 a = next - v;
        const Point2 b = quad[(i + 2) % 4] - next;
        const double cross = a.x * b.y - a.y * b.x;
        if (cross <= 0.0) return false;  // reflex, collinear or flipped

        const Point2 e1 = prev - v;
        const Point2 e2 = next - v;
        const double dot = e1.x * e2.x + e1.y * e2.y;
        const double wedge = e1.x * e2.y - e1.y * e2.x;
        const double angle = std::atan2(std::abs(wedge), dot);
        if (angle < lo || angle > hi) return false;
    }
    return true;
}

Homography sample_homography(Rng& rng, Size marker_size, Size canvas_size) {
    if (marker_size.width <= 0 || marker_size.height <= 0 ||
        canvas_size.width <= 0 || canvas_size.height <= 0) {
        throw ConfigError("marker and canvas sizes must be positive");
    }
    const auto src = marker_corners(marker_size);
    for (int attempt = 0; attempt < kQuadBudget; ++attempt) {
        std::array<Point2, 4> dst;
        for (auto& p : dst) {
            p.x = rng.uniform(0.0, canvas_size.width - 1.0);
            p.y = rng.uniform(0.0, canvas_size.height - 1.0);
        }
        if (!quad_acceptable(dst)) continue;
        return geometry::homography_from_four_points(src, dst);
    }
    throw SamplingError("no acceptable destination quad within budget");
}

double tps_min_jacobian(const ThinPlateSpline& tps, int grid) {
    double best = std::numeric_limits<double>::infinity();
    for (int iy = 0; iy < grid; ++iy) {
        for (int ix = 0; ix < grid; ++ix) {
            const Point2 p{-1.0 + 2.0 * ix / (grid - 1),
                           -1.0 + 2.0 * iy / (grid - 1)};
            const auto j = tps.jacobian(p);
            best = std::min(best, j[0] * j[3] - j[1] * j[2]);
        }
    }
    return best;
}

ThinPlateSpline sample_tps(Rng& rng, const SamplerConfig& config) {
    config.validate();
    for (int attempt = 0; attempt < kFoldBudget; ++attempt) {
        ThinPlateSpline tps;
        for (double& v : tps.affine) v += draw(rng, config.tps_perturbation);
        for (double& v : tps.coefficients) {
            v += draw(rng, config.tps_perturbation);
        }
        if (tps_min_jacobian(tps) > 0.0) return tps;
    }
    throw SamplingError("no fold-free TPS within budget");
}

GeometricTransform sample_transform(Rng& rng, const SamplerConfig& config,
                                    Size marker_size) {
    config.validate();
    double total = 0.0;
    for (double w : config.kind_weights) total += w;
    const double u = rng.uniform() * total;

    GeometricTransform t;
    t.marker_size = marker_size;
    t.reference_size = config.canvas;
    if (u < config.kind_weights[0]) {
        t.map = sample_affine(rng, config, marker_size);
    } else if (u < config.kind_weights[0] + config.kind_weights[1]) {
        t.map = sample_homography(rng, marker_size, config.canvas);
    } else {
        t.map = sample_tps(rng, config);
    }
    return t;
}

}  // namespace markerforge::flyingmarkers
