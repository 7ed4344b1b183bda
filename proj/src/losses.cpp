#include "markerforge/losses.hpp"

#include <cmath>

namespace markerforge::losses {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_nonempty(const FlowField& flow) {
    if (flow.width <= 0 || flow.height <= 0 || flow.valid_count() == 0) {
        throw EmptyRegionError("flow has no valid pixels");
    }
}

}  // namespace

FlowGradient FlowGradient::like(const FlowField& flow) {
    FlowGradient g;
    g.width = flow.width;
    g.height = flow.height;
    g.grad.assign(2 * static_cast<std::size_t>(flow.width) * flow.height, 0.0);
    g.valid = flow.valid;
    return g;
}

LossReport l_syn(const FlowField& flow_pred, const GeometricTransform& t,
                 bool keep_map) {
    require_nonempty(flow_pred);
    if (flow_pred.width != t.marker_size.width ||
        flow_pred.height != t.marker_size.height) {
        throw DimensionMismatchError("flow does not cover the marker grid");
    }

    LossReport report;
    report.width = flow_pred.width;
    report.height = flow_pred.height;
    if (keep_map) report.per_pixel.assign(flow_pred.valid.size(), 0.0f);

    for (int y = 0; y < flow_pred.height; ++y) {
        for (int x = 0; x < flow_pred.width; ++x) {
            if (!flow_pred.is_valid(x, y)) continue;
            const Point2 target = geometry::apply_transform(
                t, {static_cast<double>(x), static_cast<double>(y)});
            const Point2 d = flow_pred.at(x, y) - target;
            const double v = std::abs(d.x) + std::abs(d.y);
            report.total += v;
            ++report.count;
            if (keep_map) {
                report.per_pixel[static_cast<std::size_t>(y) * flow_pred.width +
                                 x] = static_cast<float>(v);
            }
        }
    }
    return report;
}

LossReport l_sed(const FlowField& flow_pred, const FundamentalMatrix& f,
                 bool keep_map, double clip) {
    require_nonempty(flow_pred);

    LossReport report;
    report.width = flow_pred.width;
    report.height = flow_pred.height;
    if (keep_map) report.per_pixel.assign(flow_pred.valid.size(), 0.0f);

    for (int y = 0; y < flow_pred.height; ++y) {
        for (int x = 0; x < flow_pred.width; ++x) {
            if (!flow_pred.is_valid(x, y)) continue;
            double v;
            try {
                v = geometry::sed({static_cast<double>(x),
                                   static_cast<double>(y)},
                                  flow_pred.at(x, y), f);
            } catch (const EpipoleDegenerateError&) {
                ++report.degenerate_count;
                continue;
            }
            if (v > clip) v = clip;
            report.total += v;
            ++report.count;
            if (keep_map) {
                report.per_pixel[static_cast<std::size_t>(y) * flow_pred.width +
                                 x] = static_cast<float>(v);
            }
        }
    }
    return report;
}

LossReport l_all(const FlowField& flow_syn, const GeometricTransform& t,
                 const FlowField& flow_real, const FundamentalMatrix& f,
                 double sed_weight) {
    const LossReport syn = l_syn(flow_syn, t);
    const LossReport sed = l_sed(flow_real, f);
    LossReport report;
    report.total = syn.total + sed_weight * sed.total;
    report.count = syn.count + sed.count;
    report.degenerate_count = sed.degenerate_count;
    return report;
}

FlowGradient grad_l_syn(const FlowField& flow_pred,
                        const GeometricTransform& t) {
    require_nonempty(flow_pred);
    if (flow_pred.width != t.marker_size.width ||
        flow_pred.height != t.marker_size.height) {
        throw DimensionMismatchError("flow does not cover the marker grid");
    }

    FlowGradient g = FlowGradient::like(flow_pred);
    for (int y = 0; y < flow_pred.height; ++y) {
        for (int x = 0; x < flow_pred.width; ++x) {
            if (!flow_pred.is_valid(x, y)) continue;
            const Point2 target = geometry::apply_transform(
                t, {static_cast<double>(x), static_cast<double>(y)});
            const Point2 d = flow_pred.at(x, y) - target;
            g.set(x, y, {sign(d.x), sign(d.y)});
        }
    }
    return g;
}

// SED(x, x') = |r| / sqrt(a^2 + b^2) + |r| / sqrt(a'^2 + b'^2) where
// r = x'~^T F x~, (a, b, c) = F x~ and (a', b', c') = F^T x'~ (the same
// residual r serves both terms, by symmetry of the bilinear form).
//
// The first term's denominator does not depend on x', so
//   d/dx' (|r| / n) = sign(r) * (a, b) / n,            n = sqrt(a^2 + b^2).
// The second term depends on x' through both r and the normal (a', b'):
//   d/dx' (|r| / m) = sign(r) * (a, b) / m
//                   - |r| * (a' * dA + b' * dB) / m^3,  m = sqrt(a'^2 + b'^2),
// with dA = (F11, F21) and dB = (F12, F22) the x' derivatives of a' and b'.
FlowGradient grad_l_sed(const FlowField& flow_pred, const FundamentalMatrix& f,
                        double clip) {
    require_nonempty(flow_pred);

    FlowGradient g = FlowGradient::like(flow_pred);
    for (int y = 0; y < flow_pred.height; ++y) {
        for (int x = 0; x < flow_pred.width; ++x) {
            if (!flow_pred.is_valid(x, y)) continue;
            const Point2 xp = flow_pred.at(x, y);

            geometry::EpipolarLine l1, l2;
            try {
                l1 = geometry::epipolar_line(
                    f, {static_cast<double>(x), static_cast<double>(y)});
                l2 = geometry::epipolar_line(f.transpose(), xp);
            } catch (const EpipoleDegenerateError&) {
                continue;
            }

            const double r = l1.a * xp.x + l1.b * xp.y + l1.c;
            const double n = std::sqrt(l1.a * l1.a + l1.b * l1.b);
            const double m = std::sqrt(l2.a * l2.a + l2.b * l2.b);
            if (std::isfinite(clip)) {
                const double v = std::abs(r) / n + std::abs(r) / m;
                if (v > clip) continue;
            }

            const double s = sign(r);
            const double dax = f.m(0, 0), day = f.m(1, 0);
            const double dbx = f.m(0, 1), dby = f.m(1, 1);
            const double m3 = m * m * m;
            const Point2 grad{
                s * l1.a / n + s * l1.a / m -
                    std::abs(r) * (l2.a * dax + l2.b * dbx) / m3,
                s * l1.b / n + s * l1.b / m -
                    std::abs(r) * (l2.a * day + l2.b * dby) / m3};
            g.set(x, y, grad);
        }
    }
    return g;
}

}  // namespace markerforge::losses
