#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "markerforge/dataset.hpp"
#include "markerforge/metrics.hpp"
#include "markerforge/serialize.hpp"
#include "markerforge/warp.hpp"

using namespace markerforge;
using namespace markerforge::imaging;
using namespace markerforge::geometry;
using namespace markerforge::flyingmarkers;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const auto d = fs::temp_directory_path() / ("mf_dataset_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Image texture(Rng& rng, int w, int h) {
    auto img = Image::create(w, h, 3);
    for (auto& v : img.data) {
        v = static_cast<float>(std::round(rng.uniform() * 255.0) / 255.0);
    }
    return blur5(img);
}

struct Assets {
    std::vector<std::string> markers;
    std::vector<std::string> backgrounds;
};

Assets write_assets(const fs::path& dir, int canvas_w, int canvas_h) {
    Assets assets;
    Rng rng(99);
    for (int i = 0; i < 3; ++i) {
        const auto mp = (dir / ("marker" + std::to_string(i) + ".png")).string();
        const auto bp = (dir / ("bg" + std::to_string(i) + ".png")).string();
        write_png(mp, texture(rng, 48, 36));
        write_png(bp, texture(rng, canvas_w, canvas_h));
        assets.markers.push_back(mp);
        assets.backgrounds.push_back(bp);
    }
    return assets;
}

GeneratorConfig small_config(const fs::path& out) {
    GeneratorConfig config;
    config.count = 10;
    config.output_dir = out.string();
    config.sampler.master_seed = 777;
    config.sampler.canvas = {160, 120};
    return config;
}

std::uint64_t fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::map<std::string, std::uint64_t> tree_digest(const fs::path& root) {
    std::map<std::string, std::uint64_t> digest;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        digest[fs::relative(entry.path(), root).string()] =
            fnv1a(entry.path().string());
    }
    return digest;
}

}  // namespace

TEST_CASE("generated datasets satisfy their invariants") {
    const auto dir = fresh_dir("invariants");
    const auto assets = write_assets(dir, 160, 120);
    const auto out = dir / "ds";
    auto config = small_config(out);
    config.count = 12;

    const auto manifest =
        generate_dataset(config, assets.markers, assets.backgrounds);
    REQUIRE(manifest.count == 12);
    REQUIRE(manifest.samples.size() == 12);
    CHECK(fs::exists(out / "manifest.json"));

    std::map<std::string, int> kinds;
    for (const auto& rec : manifest.samples) {
        const auto sample_dir = out / "samples" / rec.id;
        for (const char* f : {"marker.png", "reference.png", "flow.flo",
                              "mask.png", "transform.json"}) {
            REQUIRE(fs::exists(sample_dir / f));
        }

        const auto t = load_transform((sample_dir / "transform.json").string());
        ++kinds[kind_name(t.kind())];
        const auto flow = read_flo((sample_dir / "flow.flo").string());
        const auto marker = read_png((sample_dir / "marker.png").string());
        const auto reference = read_png((sample_dir / "reference.png").string());
        REQUIRE(flow.width == marker.width);
        REQUIRE(flow.height == marker.height);
        REQUIRE(reference.width == 160);
        REQUIRE(reference.height == 120);
        REQUIRE(flow.valid_count() > 0);

        // Flow targets must be the transform's own values, inside the canvas.
        for (int y = 0; y < flow.height; ++y) {
            for (int x = 0; x < flow.width; ++x) {
                if (!flow.is_valid(x, y)) continue;
                const auto p = flow.at(x, y);
                CHECK(p.x >= 0.0);
                CHECK(p.y >= 0.0);
                CHECK(p.x <= 159.0 + 1e-6);
                CHECK(p.y <= 119.0 + 1e-6);
                const auto q = apply_transform(
                    t, {static_cast<double>(x), static_cast<double>(y)});
                CHECK(std::abs(p.x - q.x) < 2e-3);  // float32 storage
                CHECK(std::abs(p.y - q.y) < 2e-3);
            }
        }

        // Warping the marker by the stored flow reproduces the reference
        // inside the pasted region, up to resampling.
        const auto [warped, region] = warp_by_flow(marker, flow, {160, 120});
        REQUIRE(region.count > 0);
        const auto mask = region_from_image(
            read_png((sample_dir / "mask.png").string()));
        CHECK(mask.count > 0);
        CHECK(psnr_value(warped, reference, region) > 35.0);
        CHECK(ssim_value(warped, reference, region) > 0.98);
    }
    CHECK(kinds.size() == 3);
}

TEST_CASE("manifest serialization round trips") {
    const auto dir = fresh_dir("roundtrip");
    const auto assets = write_assets(dir, 160, 120);
    const auto out = dir / "ds";
    const auto manifest =
        generate_dataset(small_config(out), assets.markers, assets.backgrounds);

    const auto loaded = load_manifest((out / "manifest.json").string());
    CHECK(loaded.name == manifest.name);
    CHECK(loaded.count == manifest.count);
    REQUIRE(loaded.samples.size() == manifest.samples.size());
    for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
        CHECK(loaded.samples[i].id == manifest.samples[i].id);
        CHECK(loaded.samples[i].seed == manifest.samples[i].seed);
    }
    CHECK(manifest_to_json(loaded) == manifest_to_json(manifest));
}

TEST_CASE("sampler config json round trips") {
    SamplerConfig config;
    config.rotation = {-0.5, 0.25};
    config.scale = {0.8, 1.3};
    config.kind_weights = {2, 0, 1};
    config.canvas = {320, 240};
    config.master_seed = 12345;
    const auto back = sampler_config_from_json(sampler_config_to_json(config));
    CHECK(back.rotation.lo == config.rotation.lo);
    CHECK(back.rotation.hi == config.rotation.hi);
    CHECK(back.scale.lo == config.scale.lo);
    CHECK(back.kind_weights[0] == 2);
    CHECK(back.kind_weights[1] == 0);
    CHECK(back.canvas.width == 320);
    CHECK(back.master_seed == 12345);
}

TEST_CASE("worker count does not change the output bytes") {
    const auto dir = fresh_dir("workers");
    const auto assets = write_assets(dir, 160, 120);

    std::vector<std::map<std::string, std::uint64_t>> digests;
    for (const int workers : {1, 4}) {
        const auto out = dir / ("ds_w" + std::to_string(workers));
        auto config = small_config(out);
        config.count = 8;
        config.workers = workers;
        generate_dataset(config, assets.markers, assets.backgrounds);
        digests.push_back(tree_digest(out));
    }
    REQUIRE(digests[0].size() == digests[1].size());
    CHECK(digests[0] == digests[1]);
}

TEST_CASE("regenerating with the same seed is byte identical") {
    const auto dir = fresh_dir("reseed");
    const auto assets = write_assets(dir, 160, 120);
    const auto out_a = dir / "a";
    const auto out_b = dir / "b";
    generate_dataset(small_config(out_a), assets.markers, assets.backgrounds);
    generate_dataset(small_config(out_b), assets.markers, assets.backgrounds);
    CHECK(tree_digest(out_a) == tree_digest(out_b));

    const auto out_c = dir / "c";
    auto other = small_config(out_c);
    other.sampler.master_seed = 778;
    generate_dataset(other, assets.markers, assets.backgrounds);
    CHECK(tree_digest(out_a) != tree_digest(out_c));
}

TEST_CASE("empty datasets are legal") {
    const auto dir = fresh_dir("empty");
    const auto assets = write_assets(dir, 160, 120);
    const auto out = dir / "ds";
    auto config = small_config(out);
    config.count = 0;
    const auto manifest =
        generate_dataset(config, assets.markers, assets.backgrounds);
    CHECK(manifest.count == 0);
    CHECK(manifest.samples.empty());
    CHECK(load_manifest((out / "manifest.json").string()).count == 0);
}

TEST_CASE("generation errors are reported as configuration errors") {
    const auto dir = fresh_dir("badcfg");
    const auto assets = write_assets(dir, 160, 120);
    auto config = small_config(dir / "ds");

    CHECK_THROWS_AS(generate_dataset(config, {}, assets.backgrounds),
                    ConfigError);
    CHECK_THROWS_AS(generate_dataset(config, assets.markers, {}), ConfigError);

    auto negative = config;
    negative.count = -1;
    CHECK_THROWS_AS(
        generate_dataset(negative, assets.markers, assets.backgrounds),
        ConfigError);
}

TEST_CASE("impossible placements exhaust the redraw budget") {
    const auto dir = fresh_dir("redraw");
    const auto assets = write_assets(dir, 160, 120);
    auto config = small_config(dir / "ds");
    config.count = 1;
    config.max_redraws = 3;
    config.sampler.kind_weights = {1, 0, 0};
    config.sampler.scale = {8.0, 8.0};  // marker can never fit
    CHECK_THROWS_AS(
        generate_dataset(config, assets.markers, assets.backgrounds),
        SamplingError);
}

TEST_CASE("synthesize_sample validates background dimensions") {
    Rng rng(7);
    const auto marker = texture(rng, 32, 24);
    const auto background = texture(rng, 100, 80);
    const GeometricTransform t{
        AffineTransform::from_params(0.0, 0.0, 1.0, {10, 10}),
        {32, 24},
        {160, 120}};  // claims a larger canvas than the background
    CHECK_THROWS_AS(synthesize_sample(marker, background, t),
                    DimensionMismatchError);
}

TEST_CASE("tps samples produce dense in-region flow") {
    const auto dir = fresh_dir("tpsflow");
    const auto assets = write_assets(dir, 160, 120);
    const auto out = dir / "ds";
    auto config = small_config(out);
    config.count = 4;
    config.sampler.kind_weights = {0, 0, 1};
    config.sampler.tps_perturbation = {-0.05, 0.05};

    const auto manifest =
        generate_dataset(config, assets.markers, assets.backgrounds);
    for (const auto& rec : manifest.samples) {
        const auto sample_dir = out / "samples" / rec.id;
        const auto t = load_transform((sample_dir / "transform.json").string());
        CHECK(t.kind() == GeometricTransform::Kind::Tps);
        const auto flow = read_flo((sample_dir / "flow.flo").string());
        const double coverage =
            double(flow.valid_count()) / double(flow.width * flow.height);
        CHECK(coverage > 0.5);
    }
}
