#include "markerforge/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "markerforge/dataset.hpp"
#include "markerforge/metrics.hpp"
#include "markerforge/parallel.hpp"
#include "markerforge/warp.hpp"

namespace markerforge::benchmark {

namespace fs = std::filesystem;
using nlohmann::json;

EpeResult epe(const FlowField& flow_pred, const FlowField& gt) {
    if (flow_pred.width != gt.width || flow_pred.height != gt.height) {
        throw DimensionMismatchError("flow fields differ in shape");
    }
    EpeResult r;
    r.width = gt.width;
    r.height = gt.height;
    r.per_pixel.assign(static_cast<std::size_t>(gt.width) * gt.height, 0.0f);
    double total = 0.0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!gt.is_valid(x, y) || !flow_pred.is_valid(x, y)) continue;
            const double e = geometry::norm(flow_pred.at(x, y) - gt.at(x, y));
            r.per_pixel[static_cast<std::size_t>(y) * gt.width + x] =
                static_cast<float>(e);
            total += e;
            ++r.count;
        }
    }
    if (r.count == 0) {
        throw EmptyRegionError("no pixels valid in both flow fields");
    }
    r.mean = total / static_cast<double>(r.count);
    return r;
}

double pck(const FlowField& flow_pred, const FlowField& gt, double delta) {
    if (flow_pred.width != gt.width || flow_pred.height != gt.height) {
        throw DimensionMismatchError("flow fields differ in shape");
    }
    std::size_t denom = 0;
    std::size_t hits = 0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!gt.is_valid(x, y)) continue;
            ++denom;
            if (!flow_pred.is_valid(x, y)) continue;  // abstention is a miss
            if (geometry::norm(flow_pred.at(x, y) - gt.at(x, y)) < delta) {
                ++hits;
            }
        }
    }
    if (denom == 0) throw EmptyRegionError("ground truth has no valid pixels");
    return static_cast<double>(hits) / static_cast<double>(denom);
}

AlignmentScore alignment_eval(const Image& marker, const FlowField& flow_pred,
                              const Image& reference, const Image* twin) {
    const Image m = imaging::to_rgb(marker);
    const Image ref = imaging::to_rgb(reference);
    Image tw;
    if (twin) {
        tw = imaging::to_rgb(*twin);
        if (tw.width != ref.width || tw.height != ref.height) {
            throw DimensionMismatchError("twin does not match the reference");
        }
    }

    auto [warped, region] =
        imaging::warp_by_flow(m, flow_pred, {ref.width, ref.height});
    AlignmentScore score;
    if (region.count == 0) return score;

    const Image& target = twin ? tw : ref;
    score.scored = true;
    score.ssim = imaging::ssim_value(warped, target, region);
    score.psnr = imaging::psnr_value(warped, target, region);
    score.valid_count = region.count;
    return score;
}

namespace {

double lower_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

void aggregate(BenchmarkReport& report) {
    std::map<std::string, std::vector<const EvalRecord*>> by_subset;
    for (const auto& rec : report.records) {
        by_subset[rec.subset].push_back(&rec);
    }

    for (auto& [subset, recs] : by_subset) {
        SubsetStats stats;
        stats.total = recs.size();

        std::vector<double> ssims, psnrs, epes;
        std::array<double, 3> pck_sum{0.0, 0.0, 0.0};
        std::size_t pck_n = 0;
        std::map<int, LevelStats> levels;
        for (const EvalRecord* rec : recs) {
            auto& lv = levels[rec->level];
            lv.level = rec->level;
            if (!rec->scored) continue;
            ++stats.scored;
            ssims.push_back(rec->ssim);
            psnrs.push_back(rec->psnr);
            lv.ssim_mean += rec->ssim;
            lv.psnr_mean += rec->psnr;
            ++lv.scored;
            if (rec->epe_mean) epes.push_back(*rec->epe_mean);
            if (rec->pck) {
                for (int k = 0; k < 3; ++k) pck_sum[k] += (*rec->pck)[k];
                ++pck_n;
            }
        }
        stats.failed = stats.total - stats.scored;
        if (!ssims.empty()) {
            stats.ssim_mean = 0.0;
            stats.psnr_mean = 0.0;
            for (double v : ssims) stats.ssim_mean += v;
            for (double v : psnrs) stats.psnr_mean += v;
            stats.ssim_mean /= static_cast<double>(ssims.size());
            stats.psnr_mean /= static_cast<double>(psnrs.size());
            stats.ssim_median = lower_median(ssims);
            stats.psnr_median = lower_median(psnrs);
        }
        if (!epes.empty()) {
            double total = 0.0;
            for (double v : epes) total += v;
            stats.epe_mean = total / static_cast<double>(epes.size());
        }
        if (pck_n > 0) {
            stats.pck_mean = std::array<double, 3>{
                pck_sum[0] / pck_n, pck_sum[1] / pck_n, pck_sum[2] / pck_n};
        }
        for (auto& [_, lv] : levels) {
            if (lv.scored > 0) {
                lv.ssim_mean /= static_cast<double>(lv.scored);
                lv.psnr_mean /= static_cast<double>(lv.scored);
            }
            stats.levels.push_back(lv);
        }
        report.subsets[subset] = std::move(stats);
    }
}

}  // namespace

BenchmarkReport run_benchmark(const std::vector<BenchmarkSample>& samples,
                              const Estimator& estimator,
                              const BenchConfig& config) {
    BenchmarkReport report;
    report.pck_deltas = config.pck_deltas;
    report.records.resize(samples.size());

    parallel_for(static_cast<int64_t>(samples.size()), config.workers,
                 [&](int64_t i) {
        const BenchmarkSample& s = samples[static_cast<std::size_t>(i)];
        EvalRecord rec;
        rec.id = s.id;
        rec.subset = s.subset;
        rec.level = s.level;

        const Image marker = imaging::read_png(s.marker_path);
        const Image reference = imaging::read_png(s.reference_path);
        std::optional<Image> twin;
        if (s.twin_path) twin = imaging::read_png(*s.twin_path);

        const matcher::MatchOutcome outcome = estimator(marker, reference, s);
        if (!outcome.ok()) {
            rec.failure_reason = outcome.failure_reason;
        } else {
            const AlignmentScore score = alignment_eval(
                marker, *outcome.flow, reference, twin ? &*twin : nullptr);
            if (!score.scored) {
                rec.failure_reason = "empty warp coverage";
            } else {
                rec.scored = true;
                rec.ssim = score.ssim;
                rec.psnr = score.psnr;
                rec.valid_count = score.valid_count;
                if (s.gt_flow_path) {
                    const FlowField gt = imaging::read_flo(*s.gt_flow_path);
                    try {
                        rec.epe_mean = epe(*outcome.flow, gt).mean;
                    } catch (const EmptyRegionError&) {
                        // prediction covers no ground-truth pixel
                    }
                    rec.pck = std::array<double, 3>{
                        pck(*outcome.flow, gt, config.pck_deltas[0]),
                        pck(*outcome.flow, gt, config.pck_deltas[1]),
                        pck(*outcome.flow, gt, config.pck_deltas[2])};
                }
            }
        }
        report.records[static_cast<std::size_t>(i)] = std::move(rec);
    });

    std::sort(report.records.begin(), report.records.end(),
              [](const EvalRecord& a, const EvalRecord& b) {
                  return a.id < b.id;
              });
    aggregate(report);
    return report;
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
}

void validate_sample(const BenchmarkSample& s) {
    int lo = 1, hi = std::numeric_limits<int>::max();
    if (s.subset == "deformation") {
        hi = 5;
    } else if (s.subset == "viewpoint") {
        hi = 4;
    } else if (s.subset == "lighting") {
        hi = 10;
        if (!s.twin_path) {
            throw ConfigError(s.id + ": lighting samples need a twin");
        }
    } else if (s.subset == "synthetic") {
        if (!s.gt_flow_path) {
            throw ConfigError(s.id + ": synthetic samples need ground truth");
        }
    } else {
        throw ConfigError(s.id + ": unknown subset " + s.subset);
    }
    if (s.level < lo || s.level > hi) {
        throw ConfigError(s.id + ": level " + std::to_string(s.level) +
                          " outside " + s.subset + " range");
    }
}

}  // namespace

std::vector<BenchmarkSample> load_bench_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_array()) {
        throw ConfigError("benchmark manifest must be a JSON array");
    }

    const fs::path base = fs::path(path).parent_path();
    std::vector<BenchmarkSample> samples;
    std::set<std::string> ids;
    for (const auto& e : j) {
        BenchmarkSample s;
        s.id = e.at("id").get<std::string>();
        s.subset = e.at("subset").get<std::string>();
        s.level = e.at("level").get<int>();
        s.marker_path = resolve(base, e.at("marker").get<std::string>());
        s.reference_path = resolve(base, e.at("reference").get<std::string>());
        if (e.contains("twin")) {
            s.twin_path = resolve(base, e.at("twin").get<std::string>());
        }
        if (e.contains("gt_flow")) {
            s.gt_flow_path = resolve(base, e.at("gt_flow").get<std::string>());
        }
        validate_sample(s);
        if (!ids.insert(s.id).second) {
            throw ConfigError("duplicate sample id " + s.id);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<BenchmarkSample> samples_from_dataset(
    const std::string& manifest_path) {
    const auto manifest = flyingmarkers::load_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    std::vector<BenchmarkSample> samples;
    samples.reserve(manifest.samples.size());
    for (const auto& rec : manifest.samples) {
        BenchmarkSample s;
        s.id = rec.id;
        s.subset = "synthetic";
        s.level = 1;
        const std::string dir = "samples/" + rec.id + "/";
        s.marker_path = resolve(base, dir + "marker.png");
        s.reference_path = resolve(base, dir + "reference.png");
        s.gt_flow_path = resolve(base, dir + "flow.flo");
        samples.push_back(std::move(s));
    }
    return samples;
}

json report_to_json(const BenchmarkReport& report) {
    json subsets = json::object();
    for (const auto& [name, s] : report.subsets) {
        json levels = json::array();
        for (const auto& lv : s.levels) {
            levels.push_back(json{{"level", lv.level},
                                  {"scored", lv.scored},
                                  {"ssim_mean", lv.ssim_mean},
                                  {"psnr_mean", lv.psnr_mean}});
        }
        json entry{{"total", s.total},
                   {"scored", s.scored},
                   {"failed", s.failed},
                   {"failure_pct", s.failure_pct()},
                   {"ssim", {{"mean", s.ssim_mean}, {"median", s.ssim_median}}},
                   {"psnr", {{"mean", s.psnr_mean}, {"median", s.psnr_median}}},
                   {"levels", std::move(levels)}};
        if (s.epe_mean) entry["epe_mean"] = *s.epe_mean;
        if (s.pck_mean) entry["pck_mean"] = *s.pck_mean;
        subsets[name] = std::move(entry);
    }

    json records = json::array();
    for (const auto& r : report.records) {
        json rec{{"id", r.id},
                 {"subset", r.subset},
                 {"level", r.level},
                 {"scored", r.scored}};
        if (r.scored) {
            rec["ssim"] = r.ssim;
            rec["psnr"] = r.psnr;
            rec["valid_count"] = r.valid_count;
            if (r.epe_mean) rec["epe_mean"] = *r.epe_mean;
            if (r.pck) rec["pck"] = *r.pck;
        } else {
            rec["failure_reason"] = r.failure_reason;
        }
        records.push_back(std::move(rec));
    }
    return json{{"pck_deltas", report.pck_deltas},
                {"subsets", std::move(subsets)},
                {"records", std::move(records)}};
}

BenchmarkReport report_from_json(const json& j) {
    BenchmarkReport report;
    if (j.contains("pck_deltas")) {
        report.pck_deltas = j.at("pck_deltas").get<std::array<double, 3>>();
    }
    for (const auto& rec : j.at("records")) {
        EvalRecord r;
        r.id = rec.at("id").get<std::string>();
        r.subset = rec.at("subset").get<std::string>();
        r.level = rec.at("level").get<int>();
        r.scored = rec.at("scored").get<bool>();
        if (r.scored) {
            r.ssim = rec.at("ssim").get<double>();
            r.psnr = rec.at("psnr").get<double>();
            r.valid_count = rec.at("valid_count").get<std::size_t>();
            if (rec.contains("epe_mean")) {
                r.epe_mean = rec.at("epe_mean").get<double>();
            }
            if (rec.contains("pck")) {
                r.pck = rec.at("pck").get<std::array<double, 3>>();
            }
        } else {
            r.failure_reason = rec.value("failure_reason", std::string());
        }
        report.records.push_back(std::move(r));
    }
    aggregate(report);
    return report;
}

std::string render_text_table(const BenchmarkReport& report) {
    std::string out;
    char line[256];

    std::snprintf(line, sizeof(line), "%-12s %6s %7s %8s %10s %10s %10s %10s\n",
                  "subset", "total", "scored", "failed%", "ssim-mean",
                  "ssim-med", "psnr-mean", "psnr-med");
    out += line;
    for (const auto& [name, s] : report.subsets) {
        std::snprintf(line, sizeof(line),
                      "%-12s %6zu %7zu %8.2f %10.4f %10.4f %10.2f %10.2f\n",
                      name.c_str(), s.total, s.scored, s.failure_pct(),
                      s.ssim_mean, s.ssim_median, s.psnr_mean, s.psnr_median);
        out += line;
    }

    bool any_pck = false;
    for (const auto& [name, s] : report.subsets) any_pck |= s.pck_mean.has_value();
    if (any_pck) {
        out += "\n";
        std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %10s\n", "subset",
                      "pck-1", "pck-3", "pck-5", "epe-mean");
        out += line;
        for (const auto& [name, s] : report.subsets) {
            if (!s.pck_mean) continue;
            std::snprintf(line, sizeof(line),
                          "%-12s %8.4f %8.4f %8.4f %10.4f\n", name.c_str(),
                          (*s.pck_mean)[0], (*s.pck_mean)[1], (*s.pck_mean)[2],
                          s.epe_mean.value_or(0.0));
            out += line;
        }
    }

    out += "\n";
    std::snprintf(line, sizeof(line), "%-12s %6s %7s %10s %10s\n", "subset",
                  "level", "scored", "ssim-mean", "psnr-mean");
    out += line;
    for (const auto& [name, s] : report.subsets) {
        for (const auto& lv : s.levels) {
            std::snprintf(line, sizeof(line), "%-12s %6d %7zu %10.4f %10.4f\n",
                          name.c_str(), lv.level, lv.scored, lv.ssim_mean,
                          lv.psnr_mean);
            out += line;
        }
    }
    return out;
}

namespace {

constexpr const char* kSeriesColors[6] = {"#3366cc", "#cc3333", "#33a02c",
                                          "#9467bd", "#e6a817", "#444444"};

void render_chart(std::string& svg, const BenchmarkReport& report, int y0,
                  bool use_psnr) {
    const int width = 720, height = 260;
    const int ml = 60, mr = 150, mt = 30, mb = 40;
    const int plot_w = width - ml - mr;
    const int plot_h = height - mt - mb;
    char buf[512];

    int max_level = 1;
    double max_y = use_psnr ? 1.0 : 1.0;
    for (const auto& [name, s] : report.subsets) {
        for (const auto& lv : s.levels) {
            max_level = std::max(max_level, lv.level);
            if (use_psnr) max_y = std::max(max_y, lv.psnr_mean);
        }
    }
    if (use_psnr) max_y = std::ceil(max_y / 10.0) * 10.0;

    auto sx = [&](double level) {
        return ml + (max_level > 1 ? (level - 1.0) / (max_level - 1) : 0.5) *
                        plot_w;
    };
    auto sy = [&](double v) { return y0 + mt + (1.0 - v / max_y) * plot_h; };

    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"14\">%s by difficulty "
                  "level</text>\n",
                  ml, y0 + 18, use_psnr ? "mean PSNR (dB)" : "mean SSIM");
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" "
                  "stroke=\"#333\"/>\n<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" "
                  "y2=\"%.1f\" stroke=\"#333\"/>\n",
                  ml, sy(0.0), ml + plot_w, sy(0.0), ml, sy(0.0), ml, sy(max_y));
    svg += buf;
    for (int l = 1; l <= max_level; ++l) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                      "text-anchor=\"middle\">%d</text>\n",
                      sx(l), sy(0.0) + 16, l);
        svg += buf;
    }
    for (int t = 0; t <= 4; ++t) {
        const double v = max_y * t / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" "
                      "text-anchor=\"end\">%.2f</text>\n",
                      ml - 6, sy(v) + 4, v);
        svg += buf;
    }

    int series = 0;
    for (const auto& [name, s] : report.subsets) {
        const char* color = kSeriesColors[series % 6];
        std::string points;
        for (const auto& lv : s.levels) {
            if (lv.scored == 0) continue;
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", sx(lv.level),
                          sy(use_psnr ? lv.psnr_mean : lv.ssim_mean));
            points += buf;
        }
        if (!points.empty()) {
            std::snprintf(buf, sizeof(buf),
                          "<polyline points=\"%s\" fill=\"none\" "
                          "stroke=\"%s\" stroke-width=\"2\"/>\n",
                          points.c_str(), color);
            svg += buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%d\" font-size=\"12\" "
                          "fill=\"%s\">%s</text>\n",
                          ml + plot_w + 12, y0 + mt + 16 + 18 * series, color,
                          name.c_str());
            svg += buf;
        }
        ++series;
    }
}

}  // namespace

std::string render_level_curves_svg(const BenchmarkReport& report) {
    const int width = 720, chart_h = 260;
    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                  "height=\"%d\" font-family=\"sans-serif\">\n",
                  width, 2 * chart_h);
    svg = buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    render_chart(svg, report, 0, false);
    render_chart(svg, report, chart_h, true);
    svg += "</svg>\n";
    return svg;
}

}  // namespace markerforge::benchmark
