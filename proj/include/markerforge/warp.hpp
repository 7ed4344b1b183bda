#pragma once

#include <array>
#include <optional>
#include <utility>

#include "markerforge/flow.hpp"
#include "markerforge/geometry.hpp"
#include "markerforge/image.hpp"

namespace markerforge::imaging {

// Up to 3 channels; size matches the sampled image's channel count.
using Color = std::array<float, 3>;

// Bilinear interpolation of the four neighbors. Returns nullopt when the 2x2
// footprint is not fully inside the image (points exactly on the far edge
// count as inside).
std::optional<Color> bilinear_sample(const Image& img, geometry::Point2 p);

// Forward warp of the marker onto the reference canvas by rasterizing each
// 2x2 marker cell mapped through the flow (two triangles per cell, inverse
// barycentric resampling). Covered pixels form the ValidRegion; uncovered
// pixels stay (0,0,0).
std::pair<Image, ValidRegion> warp_by_flow(const Image& marker,
                                           const FlowField& flow,
                                           Size reference_size);

// Gold-path warp for invertible transforms: resamples the marker through the
// exact inverse map. Throws DegenerateTransformError for TPS transforms.
std::pair<Image, ValidRegion> warp_by_transform(
    const Image& marker, const geometry::GeometricTransform& t);

// Dense ground-truth flow of a transform over the marker grid. Targets
// outside the reference canvas are marked invalid.
FlowField flow_from_transform(const geometry::GeometricTransform& t);

// Grayscale mask image of a region (1 inside, 0 outside) and the reverse
// (any nonzero pixel counts as inside).
Image region_to_image(const ValidRegion& region);
ValidRegion region_from_image(const Image& mask);

}  // namespace markerforge::imaging
