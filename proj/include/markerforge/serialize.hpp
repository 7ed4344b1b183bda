#pragma once

#include <string>

#include <json.hpp>

#include "markerforge/geometry.hpp"

namespace markerforge::geometry {

// Transform wire format:
//   {"kind": "affine"|"homography"|"tps", "params": [...],
//    "marker_size": [w, h], "reference_size": [w, h]}
// params: affine -> [theta, phi, scale, tx, ty]; homography -> 9 row-major
// entries; tps -> 6 affine coefficients then 12 kernel weights in
// control-point order.
nlohmann::json transform_to_json(const GeometricTransform& t);
GeometricTransform transform_from_json(const nlohmann::json& j);

GeometricTransform load_transform(const std::string& path);
void save_transform(const std::string& path, const GeometricTransform& t);

// Pose interchange for the SED loss:
//   {"K_a": [fx, fy, cx, cy], "K_b": [fx, fy, cx, cy],
//    "R": 9 row-major, "t": [tx, ty, tz]}
struct PosedPair {
    CameraIntrinsics k_a;
    CameraIntrinsics k_b;
    RelativePose pose;
};

PosedPair posed_pair_from_json(const nlohmann::json& j);
nlohmann::json posed_pair_to_json(const PosedPair& p);
PosedPair load_posed_pair(const std::string& path);

}  // namespace markerforge::geometry
