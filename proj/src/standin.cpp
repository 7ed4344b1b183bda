#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "markerforge/benchmark.hpp"
#include "markerforge/dataset.hpp"
#include "markerforge/sampler.hpp"
#include "markerforge/warp.hpp"

namespace markerforge::benchmark {

namespace fs = std::filesystem;
using flyingmarkers::SamplerConfig;
using geometry::GeometricTransform;
using geometry::Point2;
using nlohmann::json;

namespace {

// Blurred seeded noise with the contrast stretched back out, so every patch
// keeps enough texture for correlation and SSIM to bite on.
Image make_texture(Rng& rng, Size size) {
    Image img = Image::create(size.width, size.height, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    img = imaging::blur5(imaging::blur5(img));
    for (int c = 0; c < 3; ++c) {
        float lo = 1.0f, hi = 0.0f;
        for (std::size_t i = c; i < img.data.size(); i += 3) {
            lo = std::min(lo, img.data[i]);
            hi = std::max(hi, img.data[i]);
        }
        const float span = hi - lo;
        if (span < 1e-6f) continue;
        for (std::size_t i = c; i < img.data.size(); i += 3) {
            img.data[i] = 0.05f + 0.9f * (img.data[i] - lo) / span;
        }
    }
    return img;
}

GeometricTransform deformation_transform(Rng& rng, int level, Size marker,
                                         Size canvas) {
    const double amp = 0.04 * level;
    for (int attempt = 0; attempt < 100; ++attempt) {
        geometry::ThinPlateSpline tps;
        for (double& v : tps.affine) v += rng.uniform(-amp, amp);
        for (double& v : tps.coefficients) v += rng.uniform(-amp, amp);
        if (flyingmarkers::tps_min_jacobian(tps) > 0.0) {
            GeometricTransform t;
            t.map = tps;
            t.marker_size = marker;
            t.reference_size = canvas;
            return t;
        }
    }
    throw SamplingError("no fold-free deformation found");
}

// Rotates the marker plane about its vertical axis by the level's angle and
// projects it, then scales the projected quad into the canvas with a small
// seeded placement jitter.
GeometricTransform viewpoint_transform(Rng& rng, int level, Size marker,
                                       Size canvas) {
    static constexpr double kAngles[4] = {10.0, 25.0, 50.0, 75.0};
    const double alpha = kAngles[level - 1] * SamplerConfig::kPi / 180.0;
    const double aspect =
        static_cast<double>(marker.height) / marker.width;
    const double z0 = 3.0;

    const Point2 metric[4] = {
        {-1.0, -aspect}, {1.0, -aspect}, {1.0, aspect}, {-1.0, aspect}};
    std::array<Point2, 4> projected;
    for (int k = 0; k < 4; ++k) {
        const double xr = metric[k].x * std::cos(alpha);
        const double depth = z0 + metric[k].x * std::sin(alpha);
        projected[k] = {z0 * xr / depth, z0 * metric[k].y / depth};
    }

    double max_abs_x = 0.0, max_abs_y = 0.0;
    for (const Point2& p : projected) {
        max_abs_x = std::max(max_abs_x, std::abs(p.x));
        max_abs_y = std::max(max_abs_y, std::abs(p.y));
    }
    const double sx = 0.38 * canvas.width / max_abs_x;
    const double sy = 0.38 * canvas.height / max_abs_y;
    const double s = std::min(sx, sy);
    const Point2 center{canvas.width / 2.0 + rng.uniform(-8.0, 8.0),
                        canvas.height / 2.0 + rng.uniform(-8.0, 8.0)};

    const double w = marker.width - 1.0;
    const double h = marker.height - 1.0;
    const std::array<Point2, 4> src = {
        Point2{0.0, 0.0}, {w, 0.0}, {w, h}, {0.0, h}};
    std::array<Point2, 4> dst;
    for (int k = 0; k < 4; ++k) {
        dst[k] = {center.x + s * projected[k].x,
                  center.y + s * projected[k].y};
    }

    GeometricTransform t;
    t.map = geometry::homography_from_four_points(src, dst);
    t.marker_size = marker;
    t.reference_size = canvas;
    return t;
}

GeometricTransform lighting_transform(Rng& rng, Size marker, Size canvas) {
    SamplerConfig c;
    c.rotation = {-0.17, 0.17};
    c.shear = {0.0, 0.0};
    c.scale = {0.9, 1.0};
    c.canvas = canvas;
    GeometricTransform t;
    t.map = flyingmarkers::sample_affine(rng, c, marker);
    t.marker_size = marker;
    t.reference_size = canvas;
    return t;
}

// Level 1 is well lit, level 2 overexposes, levels 3-10 darken further and
// further.
float expose(float v, int level) {
    if (level <= 1) return v;
    if (level == 2) return std::min(1.0f, v * 2.2f);
    const double gain = 0.55 * std::pow(0.72, level - 3);
    return static_cast<float>(v * gain);
}

}  // namespace

std::string make_dvl_standin(const StandinConfig& config) {
    if (config.output_dir.empty()) {
        throw ConfigError("stand-in output directory required");
    }
    if (config.markers <= 0 || config.pictures <= 0) {
        throw ConfigError("stand-in needs positive marker and picture counts");
    }

    const fs::path root(config.output_dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "flows");

    static constexpr const char* kSubsets[3] = {"deformation", "viewpoint",
                                                "lighting"};
    json manifest = json::array();

    for (int i = 0; i < config.markers; ++i) {
        Rng marker_rng(derive_seed(config.seed, 0x4D000000ULL + i));
        const Image marker_img = make_texture(marker_rng, config.marker);
        char marker_name[64];
        std::snprintf(marker_name, sizeof(marker_name), "images/marker%02d.png",
                      i);
        imaging::write_png((root / marker_name).string(), marker_img);

        for (int j = 0; j < config.pictures; ++j) {
            for (int subset_index = 0; subset_index < 3; ++subset_index) {
                const char* subset = kSubsets[subset_index];
                const uint64_t record_index = static_cast<uint64_t>(
                    (subset_index * config.markers + i) * config.pictures + j);
                Rng rng(derive_seed(config.seed, 0xDB000000ULL + record_index));

                const Image background = make_texture(rng, config.canvas);

                int level = 1;
                GeometricTransform t;
                if (subset_index == 0) {
                    level = 1 + j % 5;
                    t = deformation_transform(rng, level, config.marker,
                                              config.canvas);
                } else if (subset_index == 1) {
                    level = 1 + j % 4;
                    t = viewpoint_transform(rng, level, config.marker,
                                            config.canvas);
                } else {
                    level = 1 + j % 10;
                    t = lighting_transform(rng, config.marker, config.canvas);
                }

                flyingmarkers::DatasetSample sample =
                    flyingmarkers::synthesize_sample(marker_img, background, t);

                char id[64];
                std::snprintf(id, sizeof(id), "%s-m%02d-p%02d", subset, i, j);
                char ref_name[80], flow_name[80], twin_name[80];
                std::snprintf(ref_name, sizeof(ref_name),
                              "images/%s_ref.png", id);
                std::snprintf(flow_name, sizeof(flow_name), "flows/%s.flo",
                              id);

                json entry{{"id", id},
                           {"subset", subset},
                           {"level", level},
                           {"marker", marker_name},
                           {"reference", ref_name},
                           {"gt_flow", flow_name}};

                if (subset_index == 2) {
                    std::snprintf(twin_name, sizeof(twin_name),
                                  "images/%s_twin.png", id);
                    imaging::write_png((root / twin_name).string(),
                                       sample.reference);
                    for (auto& v : sample.reference.data) {
                        v = expose(v, level);
                    }
                    entry["twin"] = twin_name;
                }
                imaging::write_png((root / ref_name).string(),
                                   sample.reference);
                imaging::write_flo((root / flow_name).string(), sample.flow);
                manifest.push_back(std::move(entry));
            }
        }
    }

    const std::string manifest_path = (root / "manifest.json").string();
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write " + manifest_path);
    out << manifest.dump(2) << '\n';
    return manifest_path;
}

}  // namespace markerforge::benchmark
