#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "markerforge/common.hpp"
#include "markerforge/geometry.hpp"

namespace markerforge::imaging {

// Dense marker->reference correspondence: absolute target coordinates per
// marker pixel plus a validity mask.
struct FlowField {
    int width = 0;   // marker dimensions
    int height = 0;
    std::vector<double> target;  // (x, y) pairs, row-major
    std::vector<std::uint8_t> valid;

    static FlowField create(int width, int height);

    geometry::Point2 at(int x, int y) const {
        const std::size_t i = 2 * (static_cast<std::size_t>(y) * width + x);
        return {target[i], target[i + 1]};
    }
    void set(int x, int y, geometry::Point2 p, bool is_valid = true) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        target[2 * i] = p.x;
        target[2 * i + 1] = p.y;
        valid[i] = is_valid ? 1 : 0;
    }
    bool is_valid(int x, int y) const {
        return valid[static_cast<std::size_t>(y) * width + x] != 0;
    }

    std::size_t valid_count() const;
};

// Mask over reference-image pixels.
struct ValidRegion {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;
    std::size_t count = 0;  // number of set bits

    static ValidRegion create(int width, int height);

    bool contains(int x, int y) const {
        return mask[static_cast<std::size_t>(y) * width + x] != 0;
    }
    void set(int x, int y) {
        auto& m = mask[static_cast<std::size_t>(y) * width + x];
        if (!m) {
            m = 1;
            ++count;
        }
    }
};

// Middlebury-compatible .flo: float magic 202021.25 ("PIEH"), int32 width and
// height, then row-major float32 (dx, dy) displacement pairs. This toolkit
// stores displacements target - source; invalid pixels carry components of
// magnitude > 1e9. Absolute targets are reconstructed on load.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& flow);

// Single-channel 32-bit float image (PFM, grayscale "Pf", scale -1.0 for
// little-endian). Used to export per-pixel loss maps.
void write_pfm(const std::string& path, int width, int height,
               const std::vector<float>& values);

}  // namespace markerforge::imaging
