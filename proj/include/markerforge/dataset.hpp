#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "markerforge/flow.hpp"
#include "markerforge/image.hpp"
#include "markerforge/sampler.hpp"

namespace markerforge::flyingmarkers {

using imaging::FlowField;
using imaging::Image;
using imaging::ValidRegion;

struct DatasetSample {
    std::string id;
    std::string marker_source;
    std::string background_source;
    GeometricTransform transform;
    Image reference;
    FlowField flow;         // marker grid, targets in reference pixels
    ValidRegion region;     // reference-grid footprint of the pasted marker
    uint64_t seed = 0;
};

struct SampleRecord {
    std::string id;
    uint64_t seed = 0;
    std::string marker_source;
    std::string background_source;
    nlohmann::json transform;
    int redraws = 0;
    std::vector<std::string> redraw_errors;
};

struct DatasetManifest {
    std::string name;
    int64_t count = 0;
    nlohmann::json generator;  // config echo
    std::vector<SampleRecord> samples;

    static constexpr const char* kFormat = "fm-1";
};

struct GeneratorConfig {
    SamplerConfig sampler;
    int64_t count = 0;
    std::string output_dir;
    std::string name = "flyingmarkers";
    int workers = 1;
    int max_redraws = 16;
};

nlohmann::json sampler_config_to_json(const SamplerConfig& config);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

// Warps the marker by `t` and hard-pastes it over the background (which must
// match t.reference_size). Invertible maps are resampled through the inverse;
// TPS goes through the forward mesh warp. The flow holds apply_transform(t, x)
// for every marker pixel whose target lands in-canvas.
DatasetSample synthesize_sample(const Image& marker, const Image& background,
                                const GeometricTransform& t);

// Generates config.count samples under config.output_dir:
//   <root>/manifest.json
//   <root>/samples/<id>/{marker.png, reference.png, flow.flo, mask.png,
//                        transform.json}
// Marker and background files are picked per sample by its own RNG, seeded
// with derive_seed(master_seed, index), so output bytes depend only on the
// config and the input files, not on worker count or scheduling. Samples that
// hit a degenerate draw are redrawn with a fresh derived seed, up to
// config.max_redraws times per sample; the redraw trail lands in the manifest.
DatasetManifest generate_dataset(const GeneratorConfig& config,
                                 const std::vector<std::string>& marker_paths,
                                 const std::vector<std::string>& background_paths);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest load_manifest(const std::string& path);

}  // namespace markerforge::flyingmarkers
