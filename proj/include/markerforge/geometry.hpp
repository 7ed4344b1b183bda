#pragma once

#include <array>
#include <cmath>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "markerforge/common.hpp"

namespace markerforge::geometry {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point2&) const = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double norm(Point2 p);

// Affine map decomposed as scale -> shear -> rotation -> translation:
//   A(p) = s * R(theta) * K(phi) * p + t,   K(phi) = [1 -sin(phi); 0 cos(phi)].
// K tilts the y axis by the shear angle while keeping unit column length, so
// every angle in (-pi/2, pi/2) stays bounded and invertible (det K = cos phi).
struct AffineTransform {
    double rotation_angle = 0.0;  // radians
    double shear_angle = 0.0;     // radians
    double scale = 1.0;
    Point2 translation;
    std::array<double, 6> matrix{1, 0, 0, 0, 1, 0};  // row-major 2x3 cache

    // Builds the matrix cache from the decomposed parameters.
    // Throws DegenerateTransformError when the linear part is singular.
    static AffineTransform from_params(double rotation_angle, double shear_angle,
                                       double scale, Point2 translation);

    Point2 apply(Point2 p) const;
    Point2 apply_inverse(Point2 p) const;
};

struct Homography {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

    // Normalizes (h33 = 1 when safely away from zero, unit Frobenius norm
    // otherwise) and rejects matrices whose condition number exceeds
    // `condition_bound`.
    static Homography from_matrix(const Eigen::Matrix3d& m,
                                  double condition_bound = 1e12);

    Point2 apply(Point2 p) const;
    Point2 apply_inverse(Point2 p) const;
};

// f(p) = affine(p) + sum_k w_k U(|p - c_k|), U(r) = r^2 log(r^2), U(0) = 0.
// Everything lives in normalized [-1,1]^2 coordinates.
struct ThinPlateSpline {
    std::array<double, 6> affine{1, 0, 0, 0, 1, 0};  // row-major 2x3 on (x,y,1)
    std::array<Point2, 6> control_points = default_sites();
    std::array<double, 12> coefficients{};  // (wx, wy) per site, site-major

    // Fixed 3x2 site grid: x in {-0.6, 0, 0.6}, y in {-0.5, 0.5}, row-major
    // over y then x.
    static std::array<Point2, 6> default_sites();

    static ThinPlateSpline identity() { return {}; }

    // 2x2 Jacobian at a normalized point, row-major (dfx/dx dfx/dy dfy/dx dfy/dy).
    std::array<double, 4> jacobian(Point2 p) const;
};

struct GeometricTransform {
    std::variant<AffineTransform, Homography, ThinPlateSpline> map;
    Size marker_size;
    Size reference_size;

    enum class Kind { Affine, Homography, Tps };
    Kind kind() const { return static_cast<Kind>(map.index()); }

    bool invertible() const { return kind() != Kind::Tps; }
};

const char* kind_name(GeometricTransform::Kind k);

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    // Throws Error unless fx > 0 and fy > 0.
    static CameraIntrinsics make(double fx, double fy, double cx, double cy);

    Eigen::Matrix3d matrix() const;
};

// Camera-B-from-camera-A pose: x_b = R x_a + t, with t scaled to unit norm.
struct RelativePose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::UnitX();

    // Validates R^T R = I, det R = +1 and |t| = 1, all within 1e-9.
    static RelativePose make(const Eigen::Matrix3d& rotation,
                             const Eigen::Vector3d& translation);
};

struct FundamentalMatrix {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

    // Scales to unit Frobenius norm and checks the rank-2 invariant
    // (smallest singular value < 1e-6 x largest).
    static FundamentalMatrix from_matrix(const Eigen::Matrix3d& m);

    FundamentalMatrix transpose() const;
};

struct EpipolarLine {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

// T(p) in reference-image pixels. TPS maps go through the normalized
// coordinate convention fixed by marker_size/reference_size (corner-aligned:
// pixel x in [0, w-1] maps linearly onto [-1, 1]).
Point2 apply_transform(const GeometricTransform& t, Point2 p);

// Inverse map for affine/homography transforms; throws
// DegenerateTransformError for TPS (no closed form).
Point2 apply_transform_inverse(const GeometricTransform& t, Point2 p);

Point2 normalize_coord(Point2 p, Size size);
Point2 denormalize_coord(Point2 p, Size size);

// Exact four-point solve via normalized DLT. Throws
// DegenerateConfigurationError when any three source or destination points
// are collinear, ConditioningError when the system is near-singular.
Homography homography_from_four_points(const std::array<Point2, 4>& src,
                                       const std::array<Point2, 4>& dst);

// Least-squares DLT over n >= 4 correspondences (Hartley-normalized).
Homography homography_dlt(const std::vector<Point2>& src,
                          const std::vector<Point2>& dst);

Point2 tps_evaluate(const ThinPlateSpline& tps, Point2 p);

// F = K_b^-T [t]x R K_a^-1, Frobenius-normalized.
FundamentalMatrix fundamental_from_pose(const CameraIntrinsics& k_a,
                                        const CameraIntrinsics& k_b,
                                        const RelativePose& pose);

// l' = F x~. Throws EpipoleDegenerateError when (a, b) = (0, 0).
EpipolarLine epipolar_line(const FundamentalMatrix& f, Point2 x);

// Perpendicular distance |x'^T F x~| / sqrt(a^2 + b^2) in pixels.
double epipolar_distance(Point2 x, Point2 x_prime, const FundamentalMatrix& f);

// SED(x, x', F) = ED(x, x', F) + ED(x', x, F^T).
double sed(Point2 x, Point2 x_prime, const FundamentalMatrix& f);

inline double norm(Point2 p) { return std::sqrt(p.x * p.x + p.y * p.y); }

}  // namespace markerforge::geometry
