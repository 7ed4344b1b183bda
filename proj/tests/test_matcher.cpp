#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "markerforge/matcher.hpp"
#include "markerforge/warp.hpp"

using namespace markerforge;
using namespace markerforge::geometry;
using namespace markerforge::imaging;
using namespace markerforge::matcher;

namespace {

Image constant_image(int w, int h, float v) {
    auto img = Image::create(w, h, 3);
    for (auto& d : img.data) d = v;
    return img;
}

// Checkerboard with noise-free cells; corners sit at cell boundaries.
Image checkerboard(int w, int h, int cell) {
    auto img = Image::create(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool on = ((x / cell) + (y / cell)) % 2 == 0;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = on ? 0.9f : 0.1f;
        }
    }
    return img;
}

Image noise_texture(Rng& rng, int w, int h) {
    auto img = Image::create(w, h, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return blur5(img);
}

Image crop(const Image& src, int x0, int y0, int w, int h) {
    auto out = Image::create(w, h, src.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < src.channels; ++c)
                out.at(x, y, c) = src.at(x0 + x, y0 + y, c);
    return out;
}

MatchSet synthetic_matches(Rng& rng, const Homography& h, int inliers,
                           int outliers, double noise_sigma, Size marker,
                           Size reference) {
    MatchSet matches;
    for (int i = 0; i < inliers; ++i) {
        const Point2 p{rng.uniform(0, marker.width - 1.0),
                       rng.uniform(0, marker.height - 1.0)};
        auto q = h.apply(p);
        // Box-Muller-free bounded noise is enough here.
        q.x += rng.uniform(-noise_sigma, noise_sigma);
        q.y += rng.uniform(-noise_sigma, noise_sigma);
        matches.push_back({{p, 1.0}, {q, 1.0}, 0.1});
    }
    for (int i = 0; i < outliers; ++i) {
        const Point2 p{rng.uniform(0, marker.width - 1.0),
                       rng.uniform(0, marker.height - 1.0)};
        const Point2 q{rng.uniform(0, reference.width - 1.0),
                       rng.uniform(0, reference.height - 1.0)};
        matches.push_back({{p, 1.0}, {q, 1.0}, 0.2});
    }
    return matches;
}

double flow_epe_against(const FlowField& flow, const Homography& h,
                        double* worst = nullptr) {
    double total = 0.0, max_err = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            if (!flow.is_valid(x, y)) continue;
            const auto p = flow.at(x, y);
            const auto q = h.apply({double(x), double(y)});
            const double e = std::hypot(p.x - q.x, p.y - q.y);
            total += e;
            max_err = std::max(max_err, e);
            ++n;
        }
    }
    if (worst) *worst = max_err;
    return n ? total / double(n) : 1e18;
}

}  // namespace

TEST_CASE("featureless images yield no corners") {
    CHECK(detect_corners(constant_image(64, 48, 0.5f), 100).empty());
}

TEST_CASE("checkerboard corners are found near cell crossings") {
    const int cell = 8;
    const auto img = checkerboard(80, 64, cell);
    const auto corners = detect_corners(img, 200);
    REQUIRE(corners.size() > 20);

    int near = 0;
    for (const auto& kp : corners) {
        const double gx = std::round(kp.location.x / cell) * cell;
        const double gy = std::round(kp.location.y / cell) * cell;
        const double d =
            std::hypot(kp.location.x - (gx - 0.5), kp.location.y - (gy - 0.5));
        if (d < 2.0) ++near;
    }
    CHECK(double(near) / double(corners.size()) > 0.9);
}

TEST_CASE("corner lists are deterministic, bounded and sorted") {
    Rng rng(81);
    const auto img = noise_texture(rng, 96, 72);
    const auto a = detect_corners(img, 50);
    const auto b = detect_corners(img, 50);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() <= 50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].location.x == b[i].location.x);
        CHECK(a[i].location.y == b[i].location.y);
        if (i > 0) CHECK(a[i - 1].response >= a[i].response);
    }
}

TEST_CASE("self matching links keypoints to themselves") {
    Rng rng(82);
    const auto img = noise_texture(rng, 96, 72);
    const auto corners = detect_corners(img, 60);
    REQUIRE(corners.size() >= 10);
    const auto matches = match_descriptors(img, corners, img, corners);
    REQUIRE(matches.size() >= corners.size() / 2);
    for (const auto& m : matches) {
        CHECK(m.marker.location.x == m.reference.location.x);
        CHECK(m.marker.location.y == m.reference.location.y);
        CHECK(m.distance < 1e-6);
    }
}

TEST_CASE("matching follows a pure translation") {
    Rng rng(83);
    const auto big = noise_texture(rng, 160, 120);
    const auto a = crop(big, 0, 0, 120, 90);
    const auto b = crop(big, 17, 11, 120, 90);

    const auto ca = detect_corners(a, 150);
    const auto cb = detect_corners(b, 150);
    const auto matches = match_descriptors(a, ca, b, cb);
    REQUIRE(matches.size() >= 10);

    int consistent = 0;
    for (const auto& m : matches) {
        const double dx = m.marker.location.x - m.reference.location.x;
        const double dy = m.marker.location.y - m.reference.location.y;
        if (std::abs(dx - 17.0) < 1.0 && std::abs(dy - 11.0) < 1.0) ++consistent;
    }
    CHECK(double(consistent) / double(matches.size()) > 0.9);
}

TEST_CASE("ransac recovers a homography through heavy outlier noise") {
    const Size marker{100, 80};
    const Size reference{320, 240};
    Rng rng(84);

    for (int trial = 0; trial < 5; ++trial) {
        const std::array<Point2, 4> src{Point2{0, 0}, Point2{99, 0},
                                        Point2{99, 79}, Point2{0, 79}};
        std::array<Point2, 4> dst;
        for (int i = 0; i < 4; ++i) {
            dst[i] = {src[i].x * 2.0 + 40 + rng.uniform(-10, 10),
                      src[i].y * 2.0 + 30 + rng.uniform(-10, 10)};
        }
        const auto truth = homography_from_four_points(src, dst);
        const auto matches =
            synthetic_matches(rng, truth, 120, 120, 0.5, marker, reference);

        RansacParams params;
        params.seed = 1000 + trial;
        const auto outcome =
            ransac_homography(matches, params, marker, reference);
        REQUIRE(outcome.ok());
        CHECK(flow_epe_against(*outcome.flow, truth) < 0.5);
    }
}

TEST_CASE("ransac is deterministic per seed") {
    const Size marker{100, 80};
    const Size reference{320, 240};
    Rng rng(85);
    const std::array<Point2, 4> src{Point2{0, 0}, Point2{99, 0}, Point2{99, 79},
                                    Point2{0, 79}};
    const std::array<Point2, 4> dst{Point2{50, 40}, Point2{260, 55},
                                    Point2{250, 200}, Point2{45, 190}};
    const auto truth = homography_from_four_points(src, dst);
    const auto matches =
        synthetic_matches(rng, truth, 80, 80, 0.5, marker, reference);

    RansacParams params;
    params.seed = 7;
    const auto a = ransac_homography(matches, params, marker, reference);
    const auto b = ransac_homography(matches, params, marker, reference);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(a.flow->target == b.flow->target);
    CHECK(a.flow->valid == b.flow->valid);
}

TEST_CASE("ransac reports too few correspondences") {
    MatchSet three;
    three.push_back({{{0, 0}, 1}, {{10, 10}, 1}, 0.1});
    three.push_back({{{50, 0}, 1}, {{60, 12}, 1}, 0.1});
    three.push_back({{{0, 40}, 1}, {{12, 52}, 1}, 0.1});
    const auto outcome =
        ransac_homography(three, RansacParams{}, {64, 48}, {320, 240});
    CHECK_FALSE(outcome.ok());
    CHECK(outcome.failure_reason == "insufficient matches");
}

TEST_CASE("ransac reports a missing consensus") {
    // Every source point sits on one line, so every minimal sample is
    // degenerate and no hypothesis ever fits.
    Rng rng(86);
    MatchSet garbage;
    for (int i = 0; i < 40; ++i) {
        garbage.push_back({{{rng.uniform(0, 63), 23.0}, 1},
                           {{rng.uniform(0, 319), rng.uniform(0, 239)}, 1},
                           0.5});
    }
    RansacParams params;
    params.iterations = 50;
    const auto outcome =
        ransac_homography(garbage, params, {64, 48}, {320, 240});
    CHECK_FALSE(outcome.ok());
    CHECK(outcome.failure_reason == "insufficient inliers");
}

TEST_CASE("ransac flow rasterizes the fitted homography") {
    const Size marker{60, 40};
    const Size reference{320, 240};
    const std::array<Point2, 4> src{Point2{0, 0}, Point2{59, 0}, Point2{59, 39},
                                    Point2{0, 39}};
    const std::array<Point2, 4> dst{Point2{80, 60}, Point2{240, 70},
                                    Point2{230, 180}, Point2{85, 170}};
    const auto truth = homography_from_four_points(src, dst);

    Rng rng(87);
    const auto matches =
        synthetic_matches(rng, truth, 60, 0, 0.0, marker, reference);
    const auto outcome =
        ransac_homography(matches, RansacParams{}, marker, reference);
    REQUIRE(outcome.ok());
    CHECK(outcome.flow->width == 60);
    CHECK(outcome.flow->height == 40);
    double worst = 0.0;
    flow_epe_against(*outcome.flow, truth, &worst);
    CHECK(worst < 1e-6);
}

TEST_CASE("dense matching of an image with itself is near perfect") {
    Rng rng(88);
    const auto img = noise_texture(rng, 96, 72);
    const auto flow = dense_match(img, img);
    REQUIRE(flow.width == 96);
    REQUIRE(flow.height == 72);

    std::size_t good = 0;
    for (int y = 0; y < 72; ++y) {
        for (int x = 0; x < 96; ++x) {
            if (!flow.is_valid(x, y)) continue;
            const auto p = flow.at(x, y);
            if (std::hypot(p.x - x, p.y - y) < 0.5) ++good;
        }
    }
    // A patch_radius border band is always invalid, capping coverage at ~86%.
    CHECK(double(flow.valid_count()) / (96.0 * 72.0) > 0.8);
    CHECK(double(good) / double(flow.valid_count()) > 0.99);
}

TEST_CASE("dense matching recovers an integer translation") {
    Rng rng(89);
    const auto reference = noise_texture(rng, 160, 120);
    const auto marker = crop(reference, 21, 14, 96, 72);
    const auto flow = dense_match(marker, reference);

    std::size_t good = 0, valid = 0;
    for (int y = 0; y < 72; ++y) {
        for (int x = 0; x < 96; ++x) {
            if (!flow.is_valid(x, y)) continue;
            ++valid;
            const auto p = flow.at(x, y);
            if (std::hypot(p.x - (x + 21.0), p.y - (y + 14.0)) < 0.75) ++good;
        }
    }
    REQUIRE(valid > std::size_t(0.7 * 96 * 72));
    CHECK(double(good) / double(valid) > 0.95);
}

TEST_CASE("dense matching marks flat inputs invalid") {
    const auto marker = constant_image(48, 36, 0.3f);
    const auto reference = constant_image(96, 72, 0.7f);
    const auto flow = dense_match(marker, reference);
    CHECK(flow.valid_count() == 0);
}

TEST_CASE("dense matching rejects empty inputs") {
    const auto img = constant_image(8, 8, 0.5f);
    CHECK_THROWS_AS(dense_match(Image{}, img), EmptyRegionError);
}

TEST_CASE("dense matching is deterministic") {
    Rng rng(90);
    const auto reference = noise_texture(rng, 128, 96);
    const auto marker = crop(reference, 9, 6, 80, 60);
    const auto a = dense_match(marker, reference);
    const auto b = dense_match(marker, reference);
    CHECK(a.target == b.target);
    CHECK(a.valid == b.valid);
}
