#include "markerforge/serialize.hpp"

#include <fstream>

namespace markerforge::geometry {

using nlohmann::json;

namespace {

json size_to_json(Size s) { return json::array({s.width, s.height}); }

Size size_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw ConfigError("size must be a [width, height] array");
    }
    Size s{j[0].get<int>(), j[1].get<int>()};
    if (s.width <= 0 || s.height <= 0) {
        throw ConfigError("sizes must be positive");
    }
    return s;
}

}  // namespace

json transform_to_json(const GeometricTransform& t) {
    json params = json::array();
    std::visit(
        [&](const auto& map) {
            using T = std::decay_t<decltype(map)>;
            if constexpr (std::is_same_v<T, AffineTransform>) {
                params = {map.rotation_angle, map.shear_angle, map.scale,
                          map.translation.x, map.translation.y};
            } else if constexpr (std::is_same_v<T, Homography>) {
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) params.push_back(map.m(r, c));
            } else {
                for (double v : map.affine) params.push_back(v);
                for (double v : map.coefficients) params.push_back(v);
            }
        },
        t.map);

    return json{{"kind", kind_name(t.kind())},
                {"params", params},
                {"marker_size", size_to_json(t.marker_size)},
                {"reference_size", size_to_json(t.reference_size)}};
}

GeometricTransform transform_from_json(const json& j) {
    if (!j.contains("kind") || !j.contains("params") ||
        !j.contains("marker_size") || !j.contains("reference_size")) {
        throw ConfigError("transform JSON missing required keys");
    }
    GeometricTransform t;
    t.marker_size = size_from_json(j.at("marker_size"));
    t.reference_size = size_from_json(j.at("reference_size"));

    const std::string kind = j.at("kind").get<std::string>();
    const auto& p = j.at("params");
    if (kind == "affine") {
        if (p.size() != 5) throw ConfigError("affine expects 5 params");
        t.map = AffineTransform::from_params(
            p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
            {p[3].get<double>(), p[4].get<double>()});
    } else if (kind == "homography") {
        if (p.size() != 9) throw ConfigError("homography expects 9 params");
        Eigen::Matrix3d m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = p[3 * r + c].get<double>();
        t.map = Homography::from_matrix(m);
    } else if (kind == "tps") {
        if (p.size() != 18) throw ConfigError("tps expects 18 params");
        ThinPlateSpline tps;
        for (int i = 0; i < 6; ++i) tps.affine[i] = p[i].get<double>();
        for (int i = 0; i < 12; ++i) {
            tps.coefficients[i] = p[6 + i].get<double>();
        }
        t.map = tps;
    } else {
        throw ConfigError("unknown transform kind: " + kind);
    }
    return t;
}

GeometricTransform load_transform(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return transform_from_json(j);
}

void save_transform(const std::string& path, const GeometricTransform& t) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << transform_to_json(t).dump(2) << '\n';
}

PosedPair posed_pair_from_json(const json& j) {
    auto intrinsics = [&](const char* key) {
        const auto& k = j.at(key);
        if (!k.is_array() || k.size() != 4) {
            throw ConfigError(std::string(key) + " must be [fx, fy, cx, cy]");
        }
        return CameraIntrinsics::make(k[0].get<double>(), k[1].get<double>(),
                                      k[2].get<double>(), k[3].get<double>());
    };

    const auto& r = j.at("R");
    const auto& t = j.at("t");
    if (!r.is_array() || r.size() != 9 || !t.is_array() || t.size() != 3) {
        throw ConfigError("pose expects R with 9 entries and t with 3");
    }
    Eigen::Matrix3d rot;
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) rot(i, c) = r[3 * i + c].get<double>();
    const Eigen::Vector3d trans(t[0].get<double>(), t[1].get<double>(),
                                t[2].get<double>());

    try {
        return {intrinsics("K_a"), intrinsics("K_b"),
                RelativePose::make(rot, trans)};
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid pose: ") + e.what());
    }
}

json posed_pair_to_json(const PosedPair& p) {
    json r = json::array();
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) r.push_back(p.pose.rotation(i, c));
    return json{{"K_a", {p.k_a.fx, p.k_a.fy, p.k_a.cx, p.k_a.cy}},
                {"K_b", {p.k_b.fx, p.k_b.fy, p.k_b.cx, p.k_b.cy}},
                {"R", r},
                {"t", {p.pose.translation(0), p.pose.translation(1),
                       p.pose.translation(2)}}};
}

PosedPair load_posed_pair(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return posed_pair_from_json(j);
}

}  // namespace markerforge::geometry
