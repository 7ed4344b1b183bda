#include "markerforge/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "markerforge/warp.hpp"

namespace markerforge::matcher {

namespace {

constexpr double kHarrisK = 0.04;
constexpr double kVarianceFloor = 1e-12;

std::vector<float> to_gray(const Image& img) {
    std::vector<float> gray(img.pixel_count());
    if (img.channels == 1) {
        gray.assign(img.data.begin(), img.data.end());
    } else {
        for (std::size_t i = 0; i < gray.size(); ++i) {
            gray[i] = (img.data[3 * i] + img.data[3 * i + 1] +
                       img.data[3 * i + 2]) / 3.0f;
        }
    }
    return gray;
}

// Separable binomial blur [1 4 6 4 1]/16 with clamped borders.
std::vector<float> blur5(const std::vector<float>& src, int w, int h) {
    static constexpr float k[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16,
                                   1.0f / 16};
    std::vector<float> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -2; i <= 2; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += k[i + 2] * src[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -2; i <= 2; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += k[i + 2] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

}  // namespace

std::vector<Keypoint> detect_corners(const Image& img, int max_count,
                                     double quality, int nms_radius) {
    if (max_count <= 0) return {};
    const int w = img.width;
    const int h = img.height;
    if (w < 7 || h < 7) return {};
    const std::vector<float> gray = to_gray(img);

    auto g = [&](int x, int y) {
        return gray[static_cast<std::size_t>(y) * w + x];
    };

    std::vector<float> ixx(gray.size(), 0.0f), iyy(gray.size(), 0.0f),
        ixy(gray.size(), 0.0f);
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const float gx =
                (g(x + 1, y - 1) - g(x - 1, y - 1) +
                 2.0f * (g(x + 1, y) - g(x - 1, y)) +
                 g(x + 1, y + 1) - g(x - 1, y + 1)) / 8.0f;
            const float gy =
                (g(x - 1, y + 1) - g(x - 1, y - 1) +
                 2.0f * (g(x, y + 1) - g(x, y - 1)) +
                 g(x + 1, y + 1) - g(x + 1, y - 1)) / 8.0f;
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    ixx = blur5(ixx, w, h);
    iyy = blur5(iyy, w, h);
    ixy = blur5(ixy, w, h);

    std::vector<float> resp(gray.size(),
                            -std::numeric_limits<float>::infinity());
    float max_resp = 0.0f;
    for (int y = 3; y + 3 < h; ++y) {
        for (int x = 3; x + 3 < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const float det = ixx[i] * iyy[i] - ixy[i] * ixy[i];
            const float tr = ixx[i] + iyy[i];
            const float r = det - static_cast<float>(kHarrisK) * tr * tr;
            resp[i] = r;
            max_resp = std::max(max_resp, r);
        }
    }
    if (max_resp <= 0.0f) return {};
    const float threshold = static_cast<float>(quality) * max_resp;

    std::vector<Keypoint> points;
    for (int y = 3; y + 3 < h; ++y) {
        for (int x = 3; x + 3 < w; ++x) {
            const float r = resp[static_cast<std::size_t>(y) * w + x];
            if (r <= threshold) continue;
            bool is_max = true;
            for (int dy = -nms_radius; dy <= nms_radius && is_max; ++dy) {
                for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const float nr =
                        resp[static_cast<std::size_t>(ny) * w + nx];
                    // Equal-response plateaus keep the scan-order first pixel.
                    if (nr > r || (nr == r && (ny < y || (ny == y && nx < x)))) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) {
                points.push_back(
                    {{static_cast<double>(x), static_cast<double>(y)}, r});
            }
        }
    }

    std::sort(points.begin(), points.end(), [](const Keypoint& a,
                                               const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.location.y != b.location.y) return a.location.y < b.location.y;
        return a.location.x < b.location.x;
    });
    if (static_cast<int>(points.size()) > max_count) {
        points.resize(static_cast<std::size_t>(max_count));
    }
    return points;
}

namespace {

// Zero-mean, unit-norm grayscale patch around a keypoint; nullopt when the
// patch leaves the image or has no variance.
std::optional<std::vector<float>> describe(const std::vector<float>& gray,
                                           int w, int h, Point2 p, int patch) {
    const int r = patch / 2;
    const int cx = static_cast<int>(std::lround(p.x));
    const int cy = static_cast<int>(std::lround(p.y));
    if (cx - r < 0 || cy - r < 0 || cx + r >= w || cy + r >= h) {
        return std::nullopt;
    }
    std::vector<float> d(static_cast<std::size_t>(patch) * patch);
    double mean = 0.0;
    std::size_t i = 0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++i) {
            d[i] = gray[static_cast<std::size_t>(cy + dy) * w + (cx + dx)];
            mean += d[i];
        }
    }
    mean /= static_cast<double>(d.size());
    double norm2 = 0.0;
    for (float& v : d) {
        v -= static_cast<float>(mean);
        norm2 += static_cast<double>(v) * v;
    }
    if (norm2 < kVarianceFloor) return std::nullopt;
    const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (float& v : d) v *= inv;
    return d;
}

double descriptor_distance(const std::vector<float>& a,
                           const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

MatchSet match_descriptors(const Image& a, const std::vector<Keypoint>& pts_a,
                           const Image& b, const std::vector<Keypoint>& pts_b,
                           int patch, double ratio) {
    const std::vector<float> gray_a = to_gray(a);
    const std::vector<float> gray_b = to_gray(b);

    struct Described {
        std::size_t index;  // into the original keypoint list
        std::vector<float> desc;
    };
    std::vector<Described> da, db;
    for (std::size_t i = 0; i < pts_a.size(); ++i) {
        if (auto d = describe(gray_a, a.width, a.height, pts_a[i].location,
                              patch)) {
            da.push_back({i, std::move(*d)});
        }
    }
    for (std::size_t i = 0; i < pts_b.size(); ++i) {
        if (auto d = describe(gray_b, b.width, b.height, pts_b[i].location,
                              patch)) {
            db.push_back({i, std::move(*d)});
        }
    }
    if (da.empty() || db.empty()) return {};

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_b(da.size());
    std::vector<double> best_d(da.size(), inf), second_d(da.size(), inf);
    std::vector<std::size_t> best_a(db.size());
    std::vector<double> best_a_d(db.size(), inf);

    for (std::size_t i = 0; i < da.size(); ++i) {
        for (std::size_t j = 0; j < db.size(); ++j) {
            const double d = descriptor_distance(da[i].desc, db[j].desc);
            if (d < best_d[i]) {
                second_d[i] = best_d[i];
                best_d[i] = d;
                best_b[i] = j;
            } else if (d < second_d[i]) {
                second_d[i] = d;
            }
            if (d < best_a_d[j]) {
                best_a_d[j] = d;
                best_a[j] = i;
            }
        }
    }

    MatchSet matches;
    for (std::size_t i = 0; i < da.size(); ++i) {
        if (!std::isfinite(best_d[i])) continue;
        const std::size_t j = best_b[i];
        if (best_a[j] != i) continue;
        if (std::isfinite(second_d[i]) && best_d[i] > ratio * second_d[i]) {
            continue;
        }
        matches.push_back(
            {pts_a[da[i].index], pts_b[db[j].index], best_d[i]});
    }
    std::sort(matches.begin(), matches.end(), [](const Match& x,
                                                 const Match& y) {
        if (x.distance != y.distance) return x.distance < y.distance;
        if (x.marker.location.y != y.marker.location.y) {
            return x.marker.location.y < y.marker.location.y;
        }
        return x.marker.location.x < y.marker.location.x;
    });
    return matches;
}

namespace {

double symmetric_transfer_error(const geometry::Homography& h, Point2 p,
                                Point2 q) {
    const Point2 fwd = h.apply(p) - q;
    const Point2 bwd = h.apply_inverse(q) - p;
    return 0.5 * (geometry::norm(fwd) + geometry::norm(bwd));
}

}  // namespace

MatchOutcome ransac_homography(const MatchSet& matches,
                               const RansacParams& params, Size marker_size,
                               Size reference_size) {
    const std::size_t n = matches.size();
    if (n < 4) return MatchOutcome::failed("insufficient matches");
    if (params.iterations <= 0) {
        throw ConfigError("iterations must be positive");
    }

    geometry::Homography best;
    std::size_t best_count = 0;

    for (int it = 0; it < params.iterations; ++it) {
        Rng rng(derive_seed(params.seed, static_cast<uint64_t>(it)));
        std::array<std::size_t, 4> idx{};
        for (int k = 0; k < 4; ++k) {
            std::size_t candidate;
            bool fresh;
            do {
                candidate = rng.below(n);
                fresh = true;
                for (int m = 0; m < k; ++m) fresh = fresh && idx[m] != candidate;
            } while (!fresh);
            idx[k] = candidate;
        }

        try {
            std::array<Point2, 4> src, dst;
            for (int k = 0; k < 4; ++k) {
                src[k] = matches[idx[k]].marker.location;
                dst[k] = matches[idx[k]].reference.location;
            }
            const auto h = geometry::homography_from_four_points(src, dst);

            std::size_t count = 0;
            for (const Match& m : matches) {
                if (symmetric_transfer_error(h, m.marker.location,
                                             m.reference.location) <
                    params.inlier_threshold_px) {
                    ++count;
                }
            }
            if (count > best_count) {
                best_count = count;
                best = h;
            }
        } catch (const Error&) {
            continue;  // degenerate minimal sample or ill-conditioned fit
        }
    }

    if (best_count < 4) return MatchOutcome::failed("insufficient inliers");

    std::vector<Point2> src_in, dst_in;
    src_in.reserve(best_count);
    dst_in.reserve(best_count);
    for (const Match& m : matches) {
        if (symmetric_transfer_error(best, m.marker.location,
                                     m.reference.location) <
            params.inlier_threshold_px) {
            src_in.push_back(m.marker.location);
            dst_in.push_back(m.reference.location);
        }
    }
    geometry::Homography refined = best;
    try {
        refined = geometry::homography_dlt(src_in, dst_in);
    } catch (const Error&) {
        // keep the minimal-sample winner
    }

    geometry::GeometricTransform t;
    t.map = refined;
    t.marker_size = marker_size;
    t.reference_size = reference_size;
    return MatchOutcome::success(imaging::flow_from_transform(t));
}

namespace {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    float at(int x, int y) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
};

GrayImage make_gray(const Image& img) {
    return {img.width, img.height, to_gray(img)};
}

GrayImage downsample(const GrayImage& src) {
    const std::vector<float> blurred =
        blur5(src.data, src.width, src.height);
    GrayImage out;
    out.width = (src.width + 1) / 2;
    out.height = (src.height + 1) / 2;
    out.data.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            out.data[static_cast<std::size_t>(y) * out.width + x] =
                blurred[static_cast<std::size_t>(2 * y) * src.width + 2 * x];
        }
    }
    return out;
}

// Per-pixel displacement estimate at one pyramid level.
struct DisplacementField {
    int width = 0;
    int height = 0;
    std::vector<double> dx, dy;
    std::vector<float> peak;
    std::vector<std::uint8_t> valid;

    static DisplacementField create(int w, int h) {
        DisplacementField f;
        f.width = w;
        f.height = h;
        const std::size_t n = static_cast<std::size_t>(w) * h;
        f.dx.assign(n, 0.0);
        f.dy.assign(n, 0.0);
        f.peak.assign(n, -1.0f);
        f.valid.assign(n, 0);
        return f;
    }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * width + x;
    }
};

// ZNCC between the marker patch at (mx, my) and the reference patch at
// (rx, ry); -2 when either patch leaves its image or is flat.
double zncc(const GrayImage& m, int mx, int my, const GrayImage& r, int rx,
            int ry, int rad) {
    if (mx - rad < 0 || my - rad < 0 || mx + rad >= m.width ||
        my + rad >= m.height || rx - rad < 0 || ry - rad < 0 ||
        rx + rad >= r.width || ry + rad >= r.height) {
        return -2.0;
    }
    const int n = (2 * rad + 1) * (2 * rad + 1);
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int dy = -rad; dy <= rad; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
            const double a = m.at(mx + dx, my + dy);
            const double b = r.at(rx + dx, ry + dy);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    const double va = saa - sa * sa / n;
    const double vb = sbb - sb * sb / n;
    if (va < kVarianceFloor || vb < kVarianceFloor) return -2.0;
    return (sab - sa * sb / n) / std::sqrt(va * vb);
}

// Parabolic peak interpolation from samples at -1, 0, +1.
double subpixel_offset(double cm, double c0, double cp) {
    const double denom = cm - 2.0 * c0 + cp;
    if (std::abs(denom) < 1e-12) return 0.0;
    const double off = 0.5 * (cm - cp) / denom;
    return std::clamp(off, -0.5, 0.5);
}

void local_search(const GrayImage& marker, const GrayImage& reference,
                  DisplacementField& field, int radius, int rad,
                  double min_peak) {
    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x) {
            const std::size_t i = field.index(x, y);
            const int cx =
                static_cast<int>(std::lround(x + field.dx[i]));
            const int cy =
                static_cast<int>(std::lround(y + field.dy[i]));

            double best = -2.0;
            int bx = 0, by = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const double c =
                        zncc(marker, x, y, reference, cx + dx, cy + dy, rad);
                    if (c > best) {
                        best = c;
                        bx = cx + dx;
                        by = cy + dy;
                    }
                }
            }
            if (best < min_peak) {
                field.valid[i] = 0;
                field.peak[i] = static_cast<float>(best);
                continue;
            }
            const double cxm = zncc(marker, x, y, reference, bx - 1, by, rad);
            const double cxp = zncc(marker, x, y, reference, bx + 1, by, rad);
            const double cym = zncc(marker, x, y, reference, bx, by - 1, rad);
            const double cyp = zncc(marker, x, y, reference, bx, by + 1, rad);
            const double ox =
                (cxm >= -1.0 && cxp >= -1.0) ? subpixel_offset(cxm, best, cxp)
                                             : 0.0;
            const double oy =
                (cym >= -1.0 && cyp >= -1.0) ? subpixel_offset(cym, best, cyp)
                                             : 0.0;
            field.dx[i] = bx + ox - x;
            field.dy[i] = by + oy - y;
            field.peak[i] = static_cast<float>(best);
            field.valid[i] = 1;
        }
    }
}

void median_smooth(DisplacementField& field) {
    const int r = 2;  // 5x5
    std::vector<double> out_dx = field.dx, out_dy = field.dy;
    std::vector<double> vals;
    vals.reserve(25);
    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x) {
            const std::size_t i = field.index(x, y);
            if (!field.valid[i]) continue;
            for (int pass = 0; pass < 2; ++pass) {
                vals.clear();
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= field.width ||
                            ny >= field.height) {
                            continue;
                        }
                        const std::size_t j = field.index(nx, ny);
                        if (!field.valid[j]) continue;
                        vals.push_back(pass == 0 ? field.dx[j] : field.dy[j]);
                    }
                }
                std::sort(vals.begin(), vals.end());
                const double med = vals[(vals.size() - 1) / 2];
                (pass == 0 ? out_dx[i] : out_dy[i]) = med;
            }
        }
    }
    field.dx = std::move(out_dx);
    field.dy = std::move(out_dy);
}

// Doubles the displacement field onto the next finer grid. Pixels whose
// parent is invalid borrow the nearest valid parent (spiral up to radius 2)
// so borders and dropouts can still be rescued by the finer search.
DisplacementField upsample_field(const DisplacementField& coarse, int w,
                                 int h) {
    DisplacementField fine = DisplacementField::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int px = std::min(x / 2, coarse.width - 1);
            const int py = std::min(y / 2, coarse.height - 1);
            std::size_t parent = coarse.index(px, py);
            if (!coarse.valid[parent]) {
                bool found = false;
                for (int rad = 1; rad <= 2 && !found; ++rad) {
                    for (int dy = -rad; dy <= rad && !found; ++dy) {
                        for (int dx = -rad; dx <= rad && !found; ++dx) {
                            const int nx = px + dx;
                            const int ny = py + dy;
                            if (nx < 0 || ny < 0 || nx >= coarse.width ||
                                ny >= coarse.height) {
                                continue;
                            }
                            if (coarse.valid[coarse.index(nx, ny)]) {
                                parent = coarse.index(nx, ny);
                                found = true;
                            }
                        }
                    }
                }
            }
            const std::size_t i = fine.index(x, y);
            if (coarse.valid[parent]) {
                fine.dx[i] = 2.0 * coarse.dx[parent];
                fine.dy[i] = 2.0 * coarse.dy[parent];
            }
        }
    }
    return fine;
}

}  // namespace

FlowField dense_match(const Image& marker, const Image& reference,
                      const DenseMatchParams& params) {
    if (marker.width <= 0 || reference.width <= 0) {
        throw EmptyRegionError("dense_match needs nonempty images");
    }
    const int rad = params.patch_radius;

    int levels = std::max(1, params.levels);
    const int min_dim = std::min({marker.width, marker.height,
                                  reference.width, reference.height});
    while (levels > 1 && (min_dim >> (levels - 1)) < 4 * rad) --levels;

    std::vector<GrayImage> mp{make_gray(marker)}, rp{make_gray(reference)};
    for (int l = 1; l < levels; ++l) {
        mp.push_back(downsample(mp.back()));
        rp.push_back(downsample(rp.back()));
    }

    DisplacementField field;
    for (int l = levels - 1; l >= 0; --l) {
        const GrayImage& m = mp[static_cast<std::size_t>(l)];
        const GrayImage& r = rp[static_cast<std::size_t>(l)];
        if (l == levels - 1) {
            // Exhaustive coarse pass: the "window" is the whole image, run as
            // a local search centered so the radius covers every position.
            field = DisplacementField::create(m.width, m.height);
            const int radius = std::max(r.width, r.height);
            local_search(m, r, field, radius, rad, params.min_peak);
        } else {
            field = upsample_field(field, m.width, m.height);
            for (int sweep = 0; sweep < std::max(1, params.iterations);
                 ++sweep) {
                local_search(m, r, field, params.search_radius, rad,
                             params.min_peak);
            }
        }
        if (l > 0) median_smooth(field);
    }

    FlowField flow = FlowField::create(marker.width, marker.height);
    for (int y = 0; y < marker.height; ++y) {
        for (int x = 0; x < marker.width; ++x) {
            const std::size_t i = field.index(x, y);
            const geometry::Point2 target{x + field.dx[i], y + field.dy[i]};
            const bool ok = field.valid[i] != 0 && target.x >= 0.0 &&
                            target.y >= 0.0 &&
                            target.x <= reference.width - 1.0 &&
                            target.y <= reference.height - 1.0;
            flow.set(x, y, ok ? target : geometry::Point2{0.0, 0.0}, ok);
        }
    }
    return flow;
}

}  // namespace markerforge::matcher
