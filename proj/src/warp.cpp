#include "markerforge/warp.hpp"

#include <algorithm>
#include <cmath>

namespace markerforge::imaging {

using geometry::Point2;

std::optional<Color> bilinear_sample(const Image& img, Point2 p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;

    int x0 = static_cast<int>(std::floor(p.x));
    int y0 = static_cast<int>(std::floor(p.y));
    // Points exactly on the far edge use the last full 2x2 footprint.
    if (x0 + 1 == img.width && p.x == static_cast<double>(x0)) --x0;
    if (y0 + 1 == img.height && p.y == static_cast<double>(y0)) --y0;
    if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) {
        return std::nullopt;
    }

    const double fx = p.x - x0;
    const double fy = p.y - y0;
    const double w00 = (1 - fx) * (1 - fy);
    const double w10 = fx * (1 - fy);
    const double w01 = (1 - fx) * fy;
    const double w11 = fx * fy;

    Color out{0, 0, 0};
    for (int c = 0; c < img.channels; ++c) {
        out[c] = static_cast<float>(
            w00 * img.at(x0, y0, c) + w10 * img.at(x0 + 1, y0, c) +
            w01 * img.at(x0, y0 + 1, c) + w11 * img.at(x0 + 1, y0 + 1, c));
    }
    return out;
}

namespace {

// Rasterizes one triangle of the forward mesh: pixel centers inside the
// reference-space triangle are resampled from the marker at the
// barycentric-interpolated source location.
void rasterize_triangle(const Image& marker, const Point2 ref[3],
                        const Point2 src[3], Image& out, ValidRegion& region) {
    const double det = (ref[1].x - ref[0].x) * (ref[2].y - ref[0].y) -
                       (ref[1].y - ref[0].y) * (ref[2].x - ref[0].x);
    if (std::abs(det) < 1e-12) return;

    const double min_x = std::min({ref[0].x, ref[1].x, ref[2].x});
    const double max_x = std::max({ref[0].x, ref[1].x, ref[2].x});
    const double min_y = std::min({ref[0].y, ref[1].y, ref[2].y});
    const double max_y = std::max({ref[0].y, ref[1].y, ref[2].y});

    const int x_lo = std::max(0, static_cast<int>(std::ceil(min_x - 1e-9)));
    const int x_hi = std::min(out.width - 1,
                              static_cast<int>(std::floor(max_x + 1e-9)));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(min_y - 1e-9)));
    const int y_hi = std::min(out.height - 1,
                              static_cast<int>(std::floor(max_y + 1e-9)));

    constexpr double kEdgeEps = 1e-9;
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            const double px = x - ref[0].x;
            const double py = y - ref[0].y;
            const double beta = (px * (ref[2].y - ref[0].y) -
                                 py * (ref[2].x - ref[0].x)) / det;
            const double gamma = ((ref[1].x - ref[0].x) * py -
                                  (ref[1].y - ref[0].y) * px) / det;
            if (beta < -kEdgeEps || gamma < -kEdgeEps ||
                beta + gamma > 1.0 + kEdgeEps) {
                continue;
            }
            const Point2 q{src[0].x + beta * (src[1].x - src[0].x) +
                               gamma * (src[2].x - src[0].x),
                           src[0].y + beta * (src[1].y - src[0].y) +
                               gamma * (src[2].y - src[0].y)};
            const auto color = bilinear_sample(marker, q);
            if (!color) continue;
            for (int c = 0; c < out.channels; ++c) {
                out.at(x, y, c) = (*color)[c];
            }
            region.set(x, y);
        }
    }
}

}  // namespace

std::pair<Image, ValidRegion> warp_by_flow(const Image& marker,
                                           const FlowField& flow,
                                           Size reference_size) {
    if (flow.width != marker.width || flow.height != marker.height) {
        throw DimensionMismatchError("flow dimensions must match the marker");
    }

    Image out = Image::create(reference_size.width, reference_size.height,
                              marker.channels);
    ValidRegion region =
        ValidRegion::create(reference_size.width, reference_size.height);

    // Cells walk row-major and each cell splits into a fixed triangle pair,
    // so overlapping writes resolve identically on every run.
    for (int y = 0; y + 1 < marker.height; ++y) {
        for (int x = 0; x + 1 < marker.width; ++x) {
            if (!flow.is_valid(x, y) || !flow.is_valid(x + 1, y) ||
                !flow.is_valid(x, y + 1) || !flow.is_valid(x + 1, y + 1)) {
                continue;
            }
            const Point2 s00{static_cast<double>(x), static_cast<double>(y)};
            const Point2 s10{static_cast<double>(x + 1), static_cast<double>(y)};
            const Point2 s01{static_cast<double>(x), static_cast<double>(y + 1)};
            const Point2 s11{static_cast<double>(x + 1),
                             static_cast<double>(y + 1)};
            const Point2 t00 = flow.at(x, y);
            const Point2 t10 = flow.at(x + 1, y);
            const Point2 t01 = flow.at(x, y + 1);
            const Point2 t11 = flow.at(x + 1, y + 1);

            const Point2 tri1_ref[3] = {t00, t10, t11};
            const Point2 tri1_src[3] = {s00, s10, s11};
            rasterize_triangle(marker, tri1_ref, tri1_src, out, region);

            const Point2 tri2_ref[3] = {t00, t11, t01};
            const Point2 tri2_src[3] = {s00, s11, s01};
            rasterize_triangle(marker, tri2_ref, tri2_src, out, region);
        }
    }
    return {std::move(out), std::move(region)};
}

std::pair<Image, ValidRegion> warp_by_transform(
    const Image& marker, const geometry::GeometricTransform& t) {
    Image out = Image::create(t.reference_size.width, t.reference_size.height,
                              marker.channels);
    ValidRegion region =
        ValidRegion::create(t.reference_size.width, t.reference_size.height);

    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            Point2 q;
            try {
                q = apply_transform_inverse(
                    t, {static_cast<double>(x), static_cast<double>(y)});
            } catch (const DegenerateTransformError&) {
                if (t.kind() == geometry::GeometricTransform::Kind::Tps) {
                    throw;
                }
                continue;  // pixel on the projected line at infinity
            }
            const auto color = bilinear_sample(marker, q);
            if (!color) continue;
            for (int c = 0; c < out.channels; ++c) {
                out.at(x, y, c) = (*color)[c];
            }
            region.set(x, y);
        }
    }
    return {std::move(out), std::move(region)};
}

Image region_to_image(const ValidRegion& region) {
    Image img = Image::create(region.width, region.height, 1);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = region.mask[i] ? 1.0f : 0.0f;
    }
    return img;
}

ValidRegion region_from_image(const Image& mask) {
    if (mask.channels != 1) {
        throw DimensionMismatchError("mask image must be single-channel");
    }
    ValidRegion region = ValidRegion::create(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y, 0) != 0.0f) region.set(x, y);
        }
    }
    return region;
}

FlowField flow_from_transform(const geometry::GeometricTransform& t) {
    FlowField flow = FlowField::create(t.marker_size.width,
                                       t.marker_size.height);
    const double max_x = t.reference_size.width - 1;
    const double max_y = t.reference_size.height - 1;
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            Point2 p;
            try {
                p = apply_transform(
                    t, {static_cast<double>(x), static_cast<double>(y)});
            } catch (const DegenerateTransformError&) {
                flow.set(x, y, {0.0, 0.0}, false);
                continue;
            }
            const bool in_canvas =
                p.x >= 0.0 && p.x <= max_x && p.y >= 0.0 && p.y <= max_y;
            flow.set(x, y, p, in_canvas);
        }
    }
    return flow;
}

}  // namespace markerforge::imaging
