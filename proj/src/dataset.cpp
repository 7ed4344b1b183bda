#include "markerforge/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include "markerforge/parallel.hpp"
#include "markerforge/serialize.hpp"
#include "markerforge/warp.hpp"

namespace markerforge::flyingmarkers {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Range range_from_json(const json& j, const char* key, Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto& r = j.at(key);
    if (!r.is_array() || r.size() != 2) {
        throw ConfigError(std::string(key) + " must be a [lo, hi] array");
    }
    return {r[0].get<double>(), r[1].get<double>()};
}

std::string sample_id(int64_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08lld", static_cast<long long>(index));
    return buf;
}

// Load-once cache keyed by path; images are normalized to RGB.
class ImageCache {
  public:
    const Image& get(const std::string& path) {
        std::lock_guard lock(mutex_);
        auto it = images_.find(path);
        if (it == images_.end()) {
            it = images_.emplace(path, imaging::to_rgb(imaging::read_png(path)))
                     .first;
        }
        return it->second;
    }

  private:
    std::mutex mutex_;
    std::map<std::string, Image> images_;
};

void write_sample_files(const fs::path& dir, const DatasetSample& s,
                        const Image& marker) {
    fs::create_directories(dir);
    imaging::write_png((dir / "marker.png").string(), marker);
    imaging::write_png((dir / "reference.png").string(), s.reference);
    imaging::write_flo((dir / "flow.flo").string(), s.flow);
    imaging::write_png((dir / "mask.png").string(),
                       imaging::region_to_image(s.region));
    geometry::save_transform((dir / "transform.json").string(), s.transform);
}

}  // namespace

json sampler_config_to_json(const SamplerConfig& c) {
    return json{
        {"rotation", {c.rotation.lo, c.rotation.hi}},
        {"shear", {c.shear.lo, c.shear.hi}},
        {"scale", {c.scale.lo, c.scale.hi}},
        {"tps_perturbation", {c.tps_perturbation.lo, c.tps_perturbation.hi}},
        {"kind_weights", c.kind_weights},
        {"canvas", {c.canvas.width, c.canvas.height}},
        {"master_seed", c.master_seed},
    };
}

SamplerConfig sampler_config_from_json(const json& j) {
    SamplerConfig c;
    c.rotation = range_from_json(j, "rotation", c.rotation);
    c.shear = range_from_json(j, "shear", c.shear);
    c.scale = range_from_json(j, "scale", c.scale);
    c.tps_perturbation =
        range_from_json(j, "tps_perturbation", c.tps_perturbation);
    if (j.contains("kind_weights")) {
        const auto& w = j.at("kind_weights");
        if (!w.is_array() || w.size() != 3) {
            throw ConfigError("kind_weights must hold 3 entries");
        }
        for (int i = 0; i < 3; ++i) c.kind_weights[i] = w[i].get<double>();
    }
    if (j.contains("canvas")) {
        const auto& s = j.at("canvas");
        if (!s.is_array() || s.size() != 2) {
            throw ConfigError("canvas must be [width, height]");
        }
        c.canvas = {s[0].get<int>(), s[1].get<int>()};
    }
    if (j.contains("master_seed")) {
        c.master_seed = j.at("master_seed").get<uint64_t>();
    }
    c.validate();
    return c;
}

DatasetSample synthesize_sample(const Image& marker, const Image& background,
                                const GeometricTransform& t) {
    const Image m = imaging::to_rgb(marker);
    const Image bg = imaging::to_rgb(background);
    if (m.width != t.marker_size.width || m.height != t.marker_size.height) {
        throw DimensionMismatchError("marker does not match transform");
    }
    if (bg.width != t.reference_size.width ||
        bg.height != t.reference_size.height) {
        throw DimensionMismatchError("background does not match the canvas");
    }

    DatasetSample s;
    s.transform = t;
    s.flow = imaging::flow_from_transform(t);

    auto [warped, region] =
        t.invertible() ? imaging::warp_by_transform(m, t)
                       : imaging::warp_by_flow(m, s.flow, t.reference_size);

    s.reference = bg;
    for (int y = 0; y < warped.height; ++y) {
        for (int x = 0; x < warped.width; ++x) {
            if (!region.contains(x, y)) continue;
            for (int c = 0; c < 3; ++c) {
                s.reference.at(x, y, c) = warped.at(x, y, c);
            }
        }
    }
    s.region = std::move(region);
    return s;
}

DatasetManifest generate_dataset(
    const GeneratorConfig& config, const std::vector<std::string>& marker_paths,
    const std::vector<std::string>& background_paths) {
    config.sampler.validate();
    if (config.count < 0) throw ConfigError("count must be nonnegative");
    if (marker_paths.empty() || background_paths.empty()) {
        throw ConfigError("marker and background lists must be nonempty");
    }
    if (config.output_dir.empty()) throw ConfigError("output directory required");
    if (config.workers < 1) throw ConfigError("workers must be >= 1");
    if (config.max_redraws < 0) throw ConfigError("max_redraws must be >= 0");

    const fs::path root(config.output_dir);
    fs::create_directories(root / "samples");

    ImageCache cache;
    std::vector<SampleRecord> records(static_cast<std::size_t>(config.count));

    parallel_for(config.count, config.workers, [&](int64_t index) {
        SampleRecord rec;
        rec.id = sample_id(index);
        rec.seed = derive_seed(config.sampler.master_seed,
                               static_cast<uint64_t>(index));

        for (int retry = 0;; ++retry) {
            if (retry > config.max_redraws) {
                throw SamplingError("sample " + rec.id +
                                    " exhausted its redraw budget (last: " +
                                    rec.redraw_errors.back() + ")");
            }
            Rng rng(derive_seed(rec.seed, static_cast<uint64_t>(retry)));
            try {
                const auto& marker_path =
                    marker_paths[rng.below(marker_paths.size())];
                const auto& background_path =
                    background_paths[rng.below(background_paths.size())];
                const Image& m = cache.get(marker_path);
                const Image& bg = cache.get(background_path);

                const GeometricTransform t = sample_transform(
                    rng, config.sampler, {m.width, m.height});
                DatasetSample s = synthesize_sample(m, bg, t);
                s.id = rec.id;
                s.seed = rec.seed;
                s.marker_source = marker_path;
                s.background_source = background_path;
                write_sample_files(root / "samples" / rec.id, s, m);

                rec.marker_source = marker_path;
                rec.background_source = background_path;
                rec.transform = geometry::transform_to_json(t);
                rec.redraws = retry;
                break;
            } catch (const IoError&) {
                throw;
            } catch (const Error& e) {
                rec.redraw_errors.push_back(e.what());
            }
        }
        records[static_cast<std::size_t>(index)] = std::move(rec);
    });

    DatasetManifest m;
    m.name = config.name;
    m.count = config.count;
    m.generator = json{{"sampler", sampler_config_to_json(config.sampler)},
                       {"count", config.count},
                       {"name", config.name},
                       {"max_redraws", config.max_redraws}};
    m.samples = std::move(records);

    std::ofstream out(root / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json");
    out << manifest_to_json(m).dump(2) << '\n';
    return m;
}

json manifest_to_json(const DatasetManifest& m) {
    json samples = json::array();
    for (const auto& r : m.samples) {
        const std::string base = "samples/" + r.id + "/";
        json rec{{"id", r.id},
                 {"seed", r.seed},
                 {"marker", base + "marker.png"},
                 {"reference", base + "reference.png"},
                 {"flow", base + "flow.flo"},
                 {"mask", base + "mask.png"},
                 {"transform", r.transform},
                 {"marker_source", r.marker_source},
                 {"background_source", r.background_source}};
        if (r.redraws > 0) {
            rec["redraws"] = r.redraws;
            rec["redraw_errors"] = r.redraw_errors;
        }
        samples.push_back(std::move(rec));
    }
    return json{{"format", DatasetManifest::kFormat},
                {"name", m.name},
                {"count", m.count},
                {"generator", m.generator},
                {"samples", std::move(samples)}};
}

DatasetManifest manifest_from_json(const json& j) {
    if (!j.contains("format") ||
        j.at("format").get<std::string>() != DatasetManifest::kFormat) {
        throw ConfigError("unsupported dataset manifest format");
    }
    DatasetManifest m;
    m.name = j.value("name", std::string());
    m.count = j.at("count").get<int64_t>();
    m.generator = j.value("generator", json::object());
    for (const auto& rec : j.at("samples")) {
        SampleRecord r;
        r.id = rec.at("id").get<std::string>();
        r.seed = rec.at("seed").get<uint64_t>();
        r.marker_source = rec.value("marker_source", std::string());
        r.background_source = rec.value("background_source", std::string());
        r.transform = rec.at("transform");
        r.redraws = rec.value("redraws", 0);
        if (rec.contains("redraw_errors")) {
            r.redraw_errors =
                rec.at("redraw_errors").get<std::vector<std::string>>();
        }
        m.samples.push_back(std::move(r));
    }
    if (static_cast<int64_t>(m.samples.size()) != m.count) {
        throw ConfigError("manifest sample count mismatch");
    }
    return m;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return manifest_from_json(j);
}

}  // namespace markerforge::flyingmarkers
