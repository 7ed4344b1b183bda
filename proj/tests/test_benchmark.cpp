#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "markerforge/benchmark.hpp"
#include "markerforge/dataset.hpp"
#include "markerforge/metrics.hpp"
#include "markerforge/warp.hpp"

using namespace markerforge;
using namespace markerforge::imaging;
using namespace markerforge::benchmark;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const auto d = fs::temp_directory_path() / ("mf_bench_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Image texture(Rng& rng, int w, int h) {
    auto img = Image::create(w, h, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return blur5(img);
}

FlowField uniform_flow(int w, int h, double dx, double dy) {
    auto flow = FlowField::create(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) flow.set(x, y, {x + dx, y + dy});
    return flow;
}

FlowField identity_flow(int w, int h) { return uniform_flow(w, h, 0, 0); }

// EPE recomputed from first principles.
double epe_oracle(const FlowField& pred, const FlowField& gt) {
    double total = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!pred.is_valid(x, y) || !gt.is_valid(x, y)) continue;
            const auto a = pred.at(x, y);
            const auto b = gt.at(x, y);
            total += std::sqrt((a.x - b.x) * (a.x - b.x) +
                               (a.y - b.y) * (a.y - b.y));
            ++n;
        }
    }
    return total / double(n);
}

double pck_oracle(const FlowField& pred, const FlowField& gt, double delta) {
    std::size_t hits = 0, denom = 0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!gt.is_valid(x, y)) continue;
            ++denom;
            if (!pred.is_valid(x, y)) continue;
            const auto a = pred.at(x, y);
            const auto b = gt.at(x, y);
            if (std::hypot(a.x - b.x, a.y - b.y) < delta) ++hits;
        }
    }
    return double(hits) / double(denom);
}

json standin_manifest(const std::string& dir, StandinConfig config) {
    config.output_dir = dir;
    const auto path = make_dvl_standin(config);
    std::ifstream in(path);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("epe of a 3-4-5 displacement is 5") {
    const auto gt = identity_flow(8, 6);
    const auto pred = uniform_flow(8, 6, 3.0, 4.0);
    const auto result = epe(pred, gt);
    CHECK(result.mean == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(result.count == std::size_t(48));
}

TEST_CASE("epe ignores pixels invalid on either side") {
    auto gt = identity_flow(6, 6);
    auto pred = uniform_flow(6, 6, 1.0, 0.0);
    gt.set(0, 0, {0, 0}, false);
    pred.set(5, 5, {0, 0}, false);
    const auto result = epe(pred, gt);
    CHECK(result.count == std::size_t(34));
    CHECK(result.mean == doctest::Approx(1.0));
}

TEST_CASE("epe matches its oracle on random flows") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 5 + int(rng.below(10));
        const int h = 5 + int(rng.below(10));
        auto gt = FlowField::create(w, h);
        auto pred = FlowField::create(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (rng.uniform() < 0.8)
                    gt.set(x, y, {rng.uniform(0, 100), rng.uniform(0, 100)});
                if (rng.uniform() < 0.8)
                    pred.set(x, y, {rng.uniform(0, 100), rng.uniform(0, 100)});
            }
        }
        bool any = false;
        for (int y = 0; y < h && !any; ++y)
            for (int x = 0; x < w && !any; ++x)
                any = gt.is_valid(x, y) && pred.is_valid(x, y);
        if (!any) continue;
        CHECK(epe(pred, gt).mean ==
              doctest::Approx(epe_oracle(pred, gt)).epsilon(1e-9));
    }
}

TEST_CASE("epe validates shapes and coverage") {
    const auto a = identity_flow(5, 5);
    const auto b = identity_flow(6, 5);
    CHECK_THROWS_AS(epe(a, b), DimensionMismatchError);
    const auto empty = FlowField::create(5, 5);
    CHECK_THROWS_AS(epe(empty, a), EmptyRegionError);
}

TEST_CASE("pck uses a strict threshold") {
    const auto gt = identity_flow(10, 10);
    const auto pred = uniform_flow(10, 10, 5.0, 0.0);
    CHECK(pck(pred, gt, 5.0) == 0.0);
    CHECK(pck(pred, gt, 5.0001) == 1.0);
}

TEST_CASE("pck counts abstention as a miss") {
    const auto gt = identity_flow(10, 1);
    auto pred = identity_flow(10, 1);
    for (int x = 0; x < 5; ++x) pred.set(x, 0, {0, 0}, false);
    CHECK(pck(pred, gt, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("pck denominator is the gt-valid set") {
    auto gt = identity_flow(10, 1);
    for (int x = 8; x < 10; ++x) gt.set(x, 0, {0, 0}, false);
    const auto pred = identity_flow(10, 1);
    CHECK(pck(pred, gt, 0.5) == doctest::Approx(1.0));

    const auto empty = FlowField::create(10, 1);
    CHECK_THROWS_AS(pck(pred, empty, 1.0), EmptyRegionError);
}

TEST_CASE("pck is monotone in delta and matches its oracle") {
    Rng rng(102);
    auto gt = FlowField::create(12, 12);
    auto pred = FlowField::create(12, 12);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            gt.set(x, y, {double(x), double(y)});
            if (rng.uniform() < 0.9)
                pred.set(x, y,
                         {x + rng.uniform(-4, 4), y + rng.uniform(-4, 4)});
        }
    }
    double prev = -1.0;
    for (const double delta : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        const double v = pck(pred, gt, delta);
        CHECK(v == doctest::Approx(pck_oracle(pred, gt, delta)).epsilon(1e-12));
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("alignment eval scores identity warps perfectly") {
    Rng rng(103);
    const auto marker = texture(rng, 40, 30);
    const auto flow = identity_flow(40, 30);
    const auto score = alignment_eval(marker, flow, marker);
    REQUIRE(score.scored);
    CHECK(score.ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(score.psnr == doctest::Approx(99.0));
    CHECK(score.valid_count > std::size_t(0));
}

TEST_CASE("alignment eval reports empty coverage") {
    Rng rng(104);
    const auto marker = texture(rng, 40, 30);
    const auto flow = FlowField::create(40, 30);  // nothing valid
    const auto score = alignment_eval(marker, flow, marker);
    CHECK_FALSE(score.scored);
}

TEST_CASE("alignment eval prefers the twin when present") {
    Rng rng(105);
    const auto marker = texture(rng, 40, 30);
    auto dark = marker;
    for (auto& v : dark.data) v *= 0.25f;

    const auto flow = identity_flow(40, 30);
    const auto against_dark = alignment_eval(marker, flow, dark);
    const auto with_twin = alignment_eval(marker, flow, dark, &marker);
    REQUIRE(against_dark.scored);
    REQUIRE(with_twin.scored);
    CHECK(with_twin.ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(against_dark.ssim < 0.9);
    CHECK(with_twin.psnr > against_dark.psnr + 20.0);
}

TEST_CASE("run_benchmark with the oracle estimator is perfect") {
    const auto dir = fresh_dir("oracle");
    Rng rng(106);

    std::vector<BenchmarkSample> samples;
    for (int i = 0; i < 4; ++i) {
        const auto marker = texture(rng, 32, 24);
        const auto marker_path = (dir / ("m" + std::to_string(i) + ".png")).string();
        write_png(marker_path, marker);

        const geometry::GeometricTransform t{
            geometry::AffineTransform::from_params(0.0, 0.0, 1.0,
                                                   {8.0 + i, 6.0}),
            {32, 24},
            {64, 48}};
        const auto background = texture(rng, 64, 48);
        const auto sample = flyingmarkers::synthesize_sample(marker, background, t);
        const auto ref_path = (dir / ("r" + std::to_string(i) + ".png")).string();
        const auto flow_path = (dir / ("f" + std::to_string(i) + ".flo")).string();
        write_png(ref_path, sample.reference);
        write_flo(flow_path, sample.flow);

        BenchmarkSample s;
        s.id = "s" + std::to_string(i);
        s.subset = "synthetic";
        s.level = 1;
        s.marker_path = marker_path;
        s.reference_path = ref_path;
        s.gt_flow_path = flow_path;
        samples.push_back(s);
    }

    const Estimator oracle = [](const Image&, const Image&,
                                const BenchmarkSample& s) {
        return matcher::MatchOutcome::success(read_flo(*s.gt_flow_path));
    };
    const auto report = run_benchmark(samples, oracle);

    REQUIRE(report.records.size() == 4);
    const auto& stats = report.subsets.at("synthetic");
    CHECK(stats.total == 4);
    CHECK(stats.scored == 4);
    CHECK(stats.failed == 0);
    CHECK(stats.ssim_mean > 0.99);
    CHECK(stats.psnr_mean > 40.0);
    REQUIRE(stats.epe_mean.has_value());
    CHECK(*stats.epe_mean < 1e-6);
    REQUIRE(stats.pck_mean.has_value());
    CHECK((*stats.pck_mean)[0] == doctest::Approx(1.0));
    CHECK((*stats.pck_mean)[2] == doctest::Approx(1.0));
    for (const auto& rec : report.records) {
        CHECK(rec.scored);
        REQUIRE(rec.epe_mean.has_value());
        CHECK(*rec.epe_mean < 1e-6);
    }
}

TEST_CASE("aggregates cover scored records only") {
    const auto dir = fresh_dir("scored_only");
    Rng rng(107);

    std::vector<BenchmarkSample> samples;
    for (int i = 0; i < 6; ++i) {
        const auto img = texture(rng, 30, 22);
        const auto path = (dir / ("i" + std::to_string(i) + ".png")).string();
        write_png(path, img);
        BenchmarkSample s;
        s.id = "rec" + std::to_string(i);
        s.subset = "deformation";
        s.level = 1 + (i % 5);
        s.marker_path = path;
        s.reference_path = path;  // marker == reference
        samples.push_back(s);
    }

    // Fails every odd record, returns the identity flow otherwise.
    const Estimator flaky = [](const Image& marker, const Image&,
                               const BenchmarkSample& s) {
        const int n = s.id.back() - '0';
        if (n % 2 == 1) return matcher::MatchOutcome::failed("no luck");
        auto flow = FlowField::create(marker.width, marker.height);
        for (int y = 0; y < marker.height; ++y)
            for (int x = 0; x < marker.width; ++x)
                flow.set(x, y, {double(x), double(y)});
        return matcher::MatchOutcome::success(std::move(flow));
    };

    const auto report = run_benchmark(samples, flaky);
    const auto& stats = report.subsets.at("deformation");
    CHECK(stats.total == 6);
    CHECK(stats.scored == 3);
    CHECK(stats.failed == 3);
    CHECK(stats.failure_pct() == doctest::Approx(50.0));
    // Identity flow on marker == reference: perfection on the scored half.
    CHECK(stats.ssim_mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(stats.ssim_median == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(stats.psnr_mean == doctest::Approx(99.0));
    for (const auto& rec : report.records) {
        if (!rec.scored) CHECK(rec.failure_reason == "no luck");
    }

    // Every observed level keeps its row; all-failed levels show zero scored
    // and contribute nothing to the curve.
    CHECK(stats.levels.size() == 5);
    for (const auto& level : stats.levels) {
        const bool even_record_has_level =
            level.level == 1 || level.level == 3 || level.level == 5;
        CHECK(level.scored == (even_record_has_level ? 1u : 0u));
        if (level.scored > 0) {
            CHECK(level.ssim_mean == doctest::Approx(1.0).epsilon(1e-9));
        } else {
            CHECK(level.ssim_mean == 0.0);
        }
    }
}

TEST_CASE("reports serialize losslessly") {
    const auto dir = fresh_dir("report_json");
    Rng rng(108);
    const auto img = texture(rng, 28, 20);
    const auto path = (dir / "i.png").string();
    write_png(path, img);

    std::vector<BenchmarkSample> samples;
    for (int i = 0; i < 3; ++i) {
        BenchmarkSample s;
        s.id = "x" + std::to_string(i);
        s.subset = "viewpoint";
        s.level = 1 + i;
        s.marker_path = path;
        s.reference_path = path;
        samples.push_back(s);
    }
    const Estimator identity = [](const Image& marker, const Image&,
                                  const BenchmarkSample&) {
        auto flow = FlowField::create(marker.width, marker.height);
        for (int y = 0; y < marker.height; ++y)
            for (int x = 0; x < marker.width; ++x)
                flow.set(x, y, {double(x), double(y)});
        return matcher::MatchOutcome::success(std::move(flow));
    };
    const auto report = run_benchmark(samples, identity);
    const auto round = report_from_json(report_to_json(report));

    REQUIRE(round.records.size() == report.records.size());
    for (std::size_t i = 0; i < round.records.size(); ++i) {
        CHECK(round.records[i].id == report.records[i].id);
        CHECK(round.records[i].scored == report.records[i].scored);
        CHECK(round.records[i].ssim ==
              doctest::Approx(report.records[i].ssim).epsilon(1e-12));
    }
    const auto& a = report.subsets.at("viewpoint");
    const auto& b = round.subsets.at("viewpoint");
    CHECK(a.total == b.total);
    CHECK(a.scored == b.scored);
    CHECK(a.ssim_mean == doctest::Approx(b.ssim_mean).epsilon(1e-12));
    CHECK(a.levels.size() == b.levels.size());
}

TEST_CASE("rendered outputs carry the expected structure") {
    const auto dir = fresh_dir("render");
    Rng rng(109);
    const auto img = texture(rng, 24, 18);
    const auto path = (dir / "i.png").string();
    write_png(path, img);

    std::vector<BenchmarkSample> samples;
    for (const char* subset : {"deformation", "viewpoint"}) {
        for (int i = 0; i < 2; ++i) {
            BenchmarkSample s;
            s.id = std::string(subset) + std::to_string(i);
            s.subset = subset;
            s.level = 1 + i;
            s.marker_path = path;
            s.reference_path = path;
            samples.push_back(s);
        }
    }
    const Estimator identity = [](const Image& marker, const Image&,
                                  const BenchmarkSample&) {
        auto flow = FlowField::create(marker.width, marker.height);
        for (int y = 0; y < marker.height; ++y)
            for (int x = 0; x < marker.width; ++x)
                flow.set(x, y, {double(x), double(y)});
        return matcher::MatchOutcome::success(std::move(flow));
    };
    const auto report = run_benchmark(samples, identity);

    const auto table = render_text_table(report);
    CHECK(table.find("deformation") != std::string::npos);
    CHECK(table.find("viewpoint") != std::string::npos);
    CHECK(table.find("ssim") != std::string::npos);
    CHECK(table.find("failed%") != std::string::npos);

    const auto svg = render_level_curves_svg(report);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("deformation") != std::string::npos);
}

TEST_CASE("bench manifests are validated") {
    const auto dir = fresh_dir("manifest");
    Rng rng(110);
    const auto img = texture(rng, 20, 16);
    const auto img_path = (dir / "i.png").string();
    write_png(img_path, img);

    const auto write_manifest = [&](const json& j) {
        const auto p = (dir / "manifest.json").string();
        std::ofstream out(p);
        out << j.dump(2);
        return p;
    };

    json good = json::array();
    good.push_back({{"id", "a"},
                    {"subset", "deformation"},
                    {"level", 5},
                    {"marker", "i.png"},
                    {"reference", "i.png"}});
    CHECK(load_bench_manifest(write_manifest(good)).size() == 1);

    json bad_subset = good;
    bad_subset[0]["subset"] = "weather";
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(bad_subset)),
                    ConfigError);

    json bad_level = good;
    bad_level[0]["level"] = 6;  // deformation tops out at 5
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(bad_level)),
                    ConfigError);

    json bad_viewpoint = good;
    bad_viewpoint[0]["subset"] = "viewpoint";
    bad_viewpoint[0]["level"] = 5;  // viewpoint tops out at 4
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(bad_viewpoint)),
                    ConfigError);

    json lighting_no_twin = good;
    lighting_no_twin[0]["subset"] = "lighting";
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(lighting_no_twin)),
                    ConfigError);

    json lighting_ok = lighting_no_twin;
    lighting_ok[0]["level"] = 10;
    lighting_ok[0]["twin"] = "i.png";
    CHECK(load_bench_manifest(write_manifest(lighting_ok))[0]
              .twin_path.has_value());

    json synthetic_no_gt = good;
    synthetic_no_gt[0]["subset"] = "synthetic";
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(synthetic_no_gt)),
                    ConfigError);

    json duplicate = good;
    duplicate.push_back(duplicate[0]);
    CHECK_THROWS_AS(load_bench_manifest(write_manifest(duplicate)),
                    ConfigError);
}

TEST_CASE("the stand-in mirrors the physical benchmark's shape") {
    const auto dir = fresh_dir("standin");
    StandinConfig config;
    config.seed = 31;
    config.canvas = {160, 120};
    config.marker = {48, 36};
    config.markers = 2;
    config.pictures = 4;
    const auto j = standin_manifest(dir.string(), config);

    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2 * 4 * 3);

    std::map<std::string, int> per_subset;
    std::map<std::string, std::set<int>> levels;
    std::set<std::string> ids;
    for (const auto& rec : j) {
        per_subset[rec.at("subset")]++;
        levels[rec.at("subset")].insert(rec.at("level").get<int>());
        ids.insert(rec.at("id").get<std::string>());
        CHECK(rec.contains("gt_flow"));
        if (rec.at("subset") == "lighting") CHECK(rec.contains("twin"));
    }
    CHECK(ids.size() == j.size());
    CHECK(per_subset.at("deformation") == 8);
    CHECK(per_subset.at("viewpoint") == 8);
    CHECK(per_subset.at("lighting") == 8);
    for (const auto& [subset, ls] : levels) {
        const int cap = subset == "deformation" ? 5
                        : subset == "viewpoint" ? 4
                                                : 10;
        for (const int l : ls) {
            CHECK(l >= 1);
            CHECK(l <= cap);
        }
    }

    // The manifest loads through the validated path and benches end to end.
    const auto samples =
        load_bench_manifest((fs::path(dir) / "manifest.json").string());
    REQUIRE(samples.size() == 24);
    const Estimator oracle = [](const Image&, const Image&,
                                const BenchmarkSample& s) {
        return matcher::MatchOutcome::success(read_flo(*s.gt_flow_path));
    };
    const auto report = run_benchmark(samples, oracle);
    for (const auto& [name, stats] : report.subsets) {
        CHECK(stats.total == 8);
        CHECK(stats.scored == 8);
        // Ground truth must align well everywhere; the lighting subset only
        // does so because scoring goes against the clean twin.
        CHECK(stats.ssim_mean > 0.95);
        REQUIRE(stats.epe_mean.has_value());
        CHECK(*stats.epe_mean < 1e-5);
    }
}

TEST_CASE("lighting scores collapse without the twin protocol") {
    const auto dir = fresh_dir("twin_protocol");
    StandinConfig config;
    config.seed = 32;
    config.canvas = {160, 120};
    config.marker = {48, 36};
    config.markers = 1;
    config.pictures = 6;
    const auto j = standin_manifest(dir.string(), config);

    // Rewire the lighting records to drop their twins, simulating a broken
    // protocol; deep lighting levels must then score visibly worse.
    json crippled = json::array();
    for (auto rec : j) {
        if (rec.at("subset") == "lighting") rec.erase("twin");
        rec["subset"] = rec.at("subset") == "lighting" ? "deformation"
                                                       : rec.at("subset");
        // Level caps differ; clamp into the deformation range.
        rec["level"] = std::min(rec.at("level").get<int>(), 5);
        crippled.push_back(rec);
    }
    const auto crippled_path = (fs::path(dir) / "crippled.json").string();
    {
        std::ofstream out(crippled_path);
        out << crippled.dump(2);
    }

    const Estimator oracle = [](const Image&, const Image&,
                                const BenchmarkSample& s) {
        return matcher::MatchOutcome::success(read_flo(*s.gt_flow_path));
    };
    const auto with_twin = run_benchmark(load_bench_manifest(
        (fs::path(dir) / "manifest.json").string()), oracle);
    const auto without_twin =
        run_benchmark(load_bench_manifest(crippled_path), oracle);

    // With the twin, lighting aligns essentially perfectly. Without it, the
    // exposure-warped references drag the mean down.
    const double twin_psnr = with_twin.subsets.at("lighting").psnr_mean;
    CHECK(twin_psnr > 35.0);
    double crippled_mean = 0.0;
    int n = 0;
    for (const auto& rec : without_twin.records) {
        if (rec.id.find("lighting") != std::string::npos && rec.scored) {
            crippled_mean += rec.psnr;
            ++n;
        }
    }
    REQUIRE(n > 0);
    crippled_mean /= n;
    CHECK(crippled_mean < twin_psnr - 5.0);
}
