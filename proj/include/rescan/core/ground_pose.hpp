#pragma once

#include "rescan/core/point_cloud.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace rescan {

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
  if (w >= std::numbers::pi) w -= two_pi;
  if (w < -std::numbers::pi) w += two_pi;
  return w;
}

/// Absolute difference of two angles on the circle, in [0, pi].
inline double angle_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Rigid motion restricted to the ground plane: translation plus a rotation
/// about the gravity (+z) axis. Applied as p -> Rz(yaw) p + t.
struct GroundPose {
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double yaw = 0.0;

  GroundPose() = default;
  GroundPose(double x, double y, double z, double heading)
      : tx(x), ty(y), tz(z), yaw(wrap_angle(heading)) {}

  static GroundPose identity() { return {}; }

  [[nodiscard]] Vec3 translation() const { return {tx, ty, tz}; }

  [[nodiscard]] Mat3 rotation() const {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
  }

  [[nodiscard]] Vec3 apply(const Vec3& p) const {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * p.x() - s * p.y() + tx, s * p.x() + c * p.y() + ty, p.z() + tz};
  }

  [[nodiscard]] Vec3 rotate(const Vec3& v) const {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
  }

  [[nodiscard]] GroundPose inverse() const {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    // R^T * (-t)
    return {-(c * tx + s * ty), -(-s * tx + c * ty), -tz, -yaw};
  }

  /// (*this) applied after `inner`.
  [[nodiscard]] GroundPose compose(const GroundPose& inner) const {
    const Vec3 t = apply(inner.translation());
    return {t.x(), t.y(), t.z(), yaw + inner.yaw};
  }

  [[nodiscard]] Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation();
    m.topRightCorner<3, 1>() = translation();
    return m;
  }

  /// Inverse of matrix(); rejects transforms whose rotation axis is not gravity.
  static GroundPose from_matrix(const Eigen::Matrix4d& m, double tol = 1e-9) {
    const Mat3 r = m.topLeftCorner<3, 3>();
    if (std::abs(r(2, 2) - 1.0) > tol || std::abs(r(0, 2)) > tol || std::abs(r(1, 2)) > tol ||
        std::abs(r(2, 0)) > tol || std::abs(r(2, 1)) > tol) {
      throw Error("ground pose: rotation axis is not the gravity direction");
    }
    return {m(0, 3), m(1, 3), m(2, 3), std::atan2(r(1, 0), r(0, 0))};
  }

  PointCloud transform(const PointCloud& cloud) const {
    PointCloud out = cloud;
    for (Vec3& p : out.points) p = apply(p);
    for (Vec3& n : out.normals) n = rotate(n);
    return out;
  }
};

}  // namespace rescan
