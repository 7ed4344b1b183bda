#pragma once

#include <limits>

#include "markerforge/flow.hpp"
#include "markerforge/geometry.hpp"

namespace markerforge::losses {

using geometry::FundamentalMatrix;
using geometry::GeometricTransform;
using geometry::Point2;
using imaging::FlowField;

struct LossReport {
    double total = 0.0;
    std::size_t count = 0;             // pixels that contributed
    std::size_t degenerate_count = 0;  // skipped epipole-degenerate pixels
    // Dense per-pixel map (0 at pixels that did not contribute); filled only
    // when requested.
    int width = 0;
    int height = 0;
    std::vector<float> per_pixel;

    double mean() const { return count ? total / static_cast<double>(count) : 0.0; }
};

// Per-pixel dL/df(x), dense over the flow grid, zero at invalid pixels.
struct FlowGradient {
    int width = 0;
    int height = 0;
    std::vector<double> grad;           // (d/dx', d/dy') pairs, row-major
    std::vector<std::uint8_t> valid;    // mirror of the input mask

    static FlowGradient like(const FlowField& flow);

    Point2 at(int x, int y) const {
        const std::size_t i = 2 * (static_cast<std::size_t>(y) * width + x);
        return {grad[i], grad[i + 1]};
    }
    void set(int x, int y, Point2 g) {
        const std::size_t i = 2 * (static_cast<std::size_t>(y) * width + x);
        grad[i] = g.x;
        grad[i + 1] = g.y;
    }
};

inline constexpr double kNoClip = std::numeric_limits<double>::infinity();

// Sum over valid pixels of |pred(x) - T(x)|_1. Throws EmptyRegionError when
// the mask is empty, DimensionMismatchError when the flow does not cover the
// marker grid of t.
LossReport l_syn(const FlowField& flow_pred, const GeometricTransform& t,
                 bool keep_map = false);

// Sum of sed(x, pred(x), f) over valid pixels. Pixels whose epipolar line
// degenerates (zero normal on either side) are skipped and counted in
// degenerate_count. Per-pixel values are clipped at `clip` when finite.
LossReport l_sed(const FlowField& flow_pred, const FundamentalMatrix& f,
                 bool keep_map = false, double clip = kNoClip);

// l_syn(flow_syn, t) + sed_weight * l_sed(flow_real, f); counts add.
LossReport l_all(const FlowField& flow_syn, const GeometricTransform& t,
                 const FlowField& flow_real, const FundamentalMatrix& f,
                 double sed_weight = 1.0);

// d l_syn / d pred(x) = sign(pred(x) - T(x)) componentwise, 0 at exact zeros.
FlowGradient grad_l_syn(const FlowField& flow_pred, const GeometricTransform& t);

// d l_sed / d pred(x). Derivation in the implementation; pixels clipped away
// or epipole-degenerate get a zero gradient.
FlowGradient grad_l_sed(const FlowField& flow_pred, const FundamentalMatrix& f,
                        double clip = kNoClip);

}  // namespace markerforge::losses
