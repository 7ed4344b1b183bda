#include "markerforge/geometry.hpp"

#include <cmath>

namespace markerforge::geometry {

namespace {

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

Point2 require_finite(Point2 p, const char* what) {
    if (!finite(p)) {
        throw DegenerateTransformError(std::string(what) +
                                       " produced a non-finite point");
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Affine

AffineTransform AffineTransform::from_params(double rotation_angle,
                                             double shear_angle, double scale,
                                             Point2 translation) {
    AffineTransform t;
    t.rotation_angle = rotation_angle;
    t.shear_angle = shear_angle;
    t.scale = scale;
    t.translation = translation;

    const double c = std::cos(rotation_angle);
    const double s = std::sin(rotation_angle);
    // R(theta) * K(phi), columns (cos t, sin t) and (-sin(t+phi), cos(t+phi)).
    t.matrix = {scale * c, -scale * std::sin(rotation_angle + shear_angle),
                translation.x,
                scale * s, scale * std::cos(rotation_angle + shear_angle),
                translation.y};

    const double det =
        t.matrix[0] * t.matrix[4] - t.matrix[1] * t.matrix[3];
    if (!std::isfinite(det) || det == 0.0) {
        throw DegenerateTransformError("affine linear part is singular");
    }
    return t;
}

Point2 AffineTransform::apply(Point2 p) const {
    return require_finite({matrix[0] * p.x + matrix[1] * p.y + matrix[2],
                           matrix[3] * p.x + matrix[4] * p.y + matrix[5]},
                          "affine transform");
}

Point2 AffineTransform::apply_inverse(Point2 p) const {
    const double det = matrix[0] * matrix[4] - matrix[1] * matrix[3];
    if (det == 0.0) {
        throw DegenerateTransformError("affine transform is not invertible");
    }
    const double dx = p.x - matrix[2];
    const double dy = p.y - matrix[5];
    return require_finite({(matrix[4] * dx - matrix[1] * dy) / det,
                           (-matrix[3] * dx + matrix[0] * dy) / det},
                          "affine inverse");
}

// ---------------------------------------------------------------------------
// Homography

Homography Homography::from_matrix(const Eigen::Matrix3d& m,
                                   double condition_bound) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
    const auto& sv = svd.singularValues();
    if (!(sv(2) > 0.0) || sv(0) / sv(2) > condition_bound) {
        throw ConditioningError("homography condition number exceeds bound");
    }

    Homography h;
    const double fro = m.norm();
    // h33 normalization, unless h33 is small relative to the matrix scale
    // (quad close to the line at infinity).
    if (std::abs(m(2, 2)) > 1e-8 * fro) {
        h.m = m / m(2, 2);
    } else {
        h.m = m / fro;
    }
    return h;
}

Point2 Homography::apply(Point2 p) const {
    const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
    if (w == 0.0) {
        throw DegenerateTransformError("homography maps point to infinity");
    }
    return require_finite({(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
                           (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w},
                          "homography");
}

Point2 Homography::apply_inverse(Point2 p) const {
    Homography inv;
    inv.m = m.inverse();
    return inv.apply(p);
}

// ---------------------------------------------------------------------------
// Thin-plate spline

std::array<Point2, 6> ThinPlateSpline::default_sites() {
    return {Point2{-0.6, -0.5}, Point2{0.0, -0.5}, Point2{0.6, -0.5},
            Point2{-0.6, 0.5},  Point2{0.0, 0.5},  Point2{0.6, 0.5}};
}

namespace {

// U(r) = r^2 log(r^2) written in terms of r^2; U(0) = 0 by the limit.
double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

}  // namespace

Point2 tps_evaluate(const ThinPlateSpline& tps, Point2 p) {
    double fx = tps.affine[0] * p.x + tps.affine[1] * p.y + tps.affine[2];
    double fy = tps.affine[3] * p.x + tps.affine[4] * p.y + tps.affine[5];
    for (std::size_t k = 0; k < tps.control_points.size(); ++k) {
        const Point2 d = p - tps.control_points[k];
        const double u = tps_kernel(d.x * d.x + d.y * d.y);
        fx += tps.coefficients[2 * k] * u;
        fy += tps.coefficients[2 * k + 1] * u;
    }
    return require_finite({fx, fy}, "thin-plate spline");
}

std::array<double, 4> ThinPlateSpline::jacobian(Point2 p) const {
    // d/dp U(|p-c|) = 2 (log r^2 + 1) (p - c), limit 0 at p = c.
    double j00 = affine[0], j01 = affine[1];
    double j10 = affine[3], j11 = affine[4];
    for (std::size_t k = 0; k < control_points.size(); ++k) {
        const Point2 d = p - control_points[k];
        const double r2 = d.x * d.x + d.y * d.y;
        if (r2 == 0.0) continue;
        const double g = 2.0 * (std::log(r2) + 1.0);
        const double wx = coefficients[2 * k];
        const double wy = coefficients[2 * k + 1];
        j00 += wx * g * d.x;
        j01 += wx * g * d.y;
        j10 += wy * g * d.x;
        j11 += wy * g * d.y;
    }
    return {j00, j01, j10, j11};
}

// ---------------------------------------------------------------------------
// Tagged transform

const char* kind_name(GeometricTransform::Kind k) {
    switch (k) {
        case GeometricTransform::Kind::Affine: return "affine";
        case GeometricTransform::Kind::Homography: return "homography";
        case GeometricTransform::Kind::Tps: return "tps";
    }
    return "?";
}

Point2 normalize_coord(Point2 p, Size size) {
    return {size.width > 1 ? 2.0 * p.x / (size.width - 1) - 1.0 : 0.0,
            size.height > 1 ? 2.0 * p.y / (size.height - 1) - 1.0 : 0.0};
}

Point2 denormalize_coord(Point2 p, Size size) {
    return {(p.x + 1.0) * 0.5 * (size.width - 1),
            (p.y + 1.0) * 0.5 * (size.height - 1)};
}

Point2 apply_transform(const GeometricTransform& t, Point2 p) {
    return std::visit(
        [&](const auto& map) -> Point2 {
            using T = std::decay_t<decltype(map)>;
            if constexpr (std::is_same_v<T, ThinPlateSpline>) {
                const Point2 n = normalize_coord(p, t.marker_size);
                return denormalize_coord(tps_evaluate(map, n),
                                         t.reference_size);
            } else {
                return map.apply(p);
            }
        },
        t.map);
}

Point2 apply_transform_inverse(const GeometricTransform& t, Point2 p) {
    return std::visit(
        [&](const auto& map) -> Point2 {
            using T = std::decay_t<decltype(map)>;
            if constexpr (std::is_same_v<T, ThinPlateSpline>) {
                throw DegenerateTransformError(
                    "thin-plate splines have no closed-form inverse");
            } else {
                return map.apply_inverse(p);
            }
        },
        t.map);
}

// ---------------------------------------------------------------------------
// Homography estimation

namespace {

bool three_collinear(Point2 a, Point2 b, Point2 c, double span) {
    const double cross =
        (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return std::abs(cross) <= 1e-12 * std::max(span * span, 1.0);
}

struct NormalizeResult {
    Eigen::Matrix3d t;  // similarity sending the points near the unit circle
    std::vector<Point2> pts;
};

NormalizeResult hartley_normalize(const std::vector<Point2>& pts) {
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= pts.size();
    my /= pts.size();
    double mean_dist = 0;
    for (const auto& p : pts) {
        mean_dist += std::hypot(p.x - mx, p.y - my);
    }
    mean_dist /= pts.size();
    const double s = mean_dist > 0 ? std::sqrt(2.0) / mean_dist : 1.0;

    NormalizeResult r;
    r.t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
    r.pts.reserve(pts.size());
    for (const auto& p : pts) {
        r.pts.push_back({s * (p.x - mx), s * (p.y - my)});
    }
    return r;
}

}  // namespace

Homography homography_dlt(const std::vector<Point2>& src,
                          const std::vector<Point2>& dst) {
    if (src.size() != dst.size() || src.size() < 4) {
        throw DegenerateConfigurationError(
            "homography needs at least 4 correspondences");
    }

    const auto ns = hartley_normalize(src);
    const auto nd = hartley_normalize(dst);

    Eigen::MatrixXd a(2 * src.size(), 9);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& s = ns.pts[i];
        const auto& d = nd.pts[i];
        a.row(2 * i) << -s.x, -s.y, -1, 0, 0, 0, d.x * s.x, d.x * s.y, d.x;
        a.row(2 * i + 1) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // For an exact 4-point solve the nullspace must be one-dimensional.
    if (!(sv(7) > 1e-9 * sv(0))) {
        throw ConditioningError("homography system is near-singular");
    }

    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

    const Eigen::Matrix3d m = nd.t.inverse() * hn * ns.t;
    return Homography::from_matrix(m);
}

Homography homography_from_four_points(const std::array<Point2, 4>& src,
                                       const std::array<Point2, 4>& dst) {
    auto span_of = [](const std::array<Point2, 4>& q) {
        double lo_x = q[0].x, hi_x = q[0].x, lo_y = q[0].y, hi_y = q[0].y;
        for (const auto& p : q) {
            lo_x = std::min(lo_x, p.x);
            hi_x = std::max(hi_x, p.x);
            lo_y = std::min(lo_y, p.y);
            hi_y = std::max(hi_y, p.y);
        }
        return std::max(hi_x - lo_x, hi_y - lo_y);
    };
    static constexpr int kTriples[4][3] = {
        {0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& q : {src, dst}) {
        const double span = span_of(q);
        for (const auto& t : kTriples) {
            if (three_collinear(q[t[0]], q[t[1]], q[t[2]], span)) {
                throw DegenerateConfigurationError(
                    "three of the four points are collinear");
            }
        }
    }
    return homography_dlt({src.begin(), src.end()}, {dst.begin(), dst.end()});
}

// ---------------------------------------------------------------------------
// Epipolar geometry

CameraIntrinsics CameraIntrinsics::make(double fx, double fy, double cx,
                                        double cy) {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw Error("camera focal lengths must be positive");
    }
    return {fx, fy, cx, cy};
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
}

RelativePose RelativePose::make(const Eigen::Matrix3d& rotation,
                                const Eigen::Vector3d& translation) {
    if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff() > 1e-9) {
        throw Error("rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw Error("rotation determinant is not +1");
    }
    const double n = translation.norm();
    if (n == 0.0) {
        throw Error("translation must be nonzero");
    }
    RelativePose p;
    p.rotation = rotation;
    p.translation = translation / n;
    if (std::abs(p.translation.norm() - 1.0) > 1e-9) {
        throw Error("translation could not be normalized");
    }
    return p;
}

FundamentalMatrix FundamentalMatrix::from_matrix(const Eigen::Matrix3d& m) {
    const double fro = m.norm();
    if (!(fro > 0.0) || !m.allFinite()) {
        throw Error("fundamental matrix must be finite and nonzero");
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
    const auto& sv = svd.singularValues();
    if (sv(2) >= 1e-6 * sv(0)) {
        throw Error("fundamental matrix is not rank 2");
    }
    FundamentalMatrix f;
    f.m = m / fro;
    return f;
}

FundamentalMatrix FundamentalMatrix::transpose() const {
    FundamentalMatrix f;
    f.m = m.transpose();
    return f;
}

FundamentalMatrix fundamental_from_pose(const CameraIntrinsics& k_a,
                                        const CameraIntrinsics& k_b,
                                        const RelativePose& pose) {
    const Eigen::Vector3d& t = pose.translation;
    Eigen::Matrix3d tx;
    tx << 0, -t(2), t(1), t(2), 0, -t(0), -t(1), t(0), 0;
    const Eigen::Matrix3d f = k_b.matrix().transpose().inverse() * tx *
                              pose.rotation * k_a.matrix().inverse();
    return FundamentalMatrix::from_matrix(f);
}

EpipolarLine epipolar_line(const FundamentalMatrix& f, Point2 x) {
    const Eigen::Vector3d l = f.m * Eigen::Vector3d(x.x, x.y, 1.0);
    if (l(0) == 0.0 && l(1) == 0.0) {
        throw EpipoleDegenerateError("point maps to a degenerate epipolar line");
    }
    return {l(0), l(1), l(2)};
}

double epipolar_distance(Point2 x, Point2 x_prime,
                         const FundamentalMatrix& f) {
    const EpipolarLine l = epipolar_line(f, x);
    const double residual = l.a * x_prime.x + l.b * x_prime.y + l.c;
    return std::abs(residual) / std::sqrt(l.a * l.a + l.b * l.b);
}

double sed(Point2 x, Point2 x_prime, const FundamentalMatrix& f) {
    return epipolar_distance(x, x_prime, f) +
           epipolar_distance(x_prime, x, f.transpose());
}

}  // namespace markerforge::geometry
