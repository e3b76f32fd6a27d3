#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rescan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or malformed input files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Reserved semantic class of walls, floor and ceiling.
inline constexpr int kStaticClass = 0;
/// Semantic class of points no object explains ("background").
inline constexpr int kUnlabeledClass = -1;
/// Instance id of points not assigned to any object.
inline constexpr int kUnassignedInstance = 0;

inline Vec3 gravity_up() { return Vec3::UnitZ(); }

/// Positions, optional unit normals and optional per-point labels.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> semantic;
  std::vector<int> instance;

  [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
  [[nodiscard]] bool empty() const noexcept { return points.empty(); }
  [[nodiscard]] bool has_normals() const noexcept {
    return !points.empty() && normals.size() == points.size();
  }
  [[nodiscard]] bool has_labels() const noexcept {
    return !points.empty() && semantic.size() == points.size() &&
           instance.size() == points.size();
  }

  void reserve(std::size_t n) {
    points.reserve(n);
    normals.reserve(n);
  }

  /// Copies the listed points together with whatever attributes exist.
  [[nodiscard]] PointCloud select(std::span<const std::size_t> ids) const {
    PointCloud out;
    out.points.reserve(ids.size());
    const bool with_normals = normals.size() == points.size() && !normals.empty();
    const bool with_sem = semantic.size() == points.size() && !semantic.empty();
    const bool with_inst = instance.size() == points.size() && !instance.empty();
    for (std::size_t i : ids) {
      out.points.push_back(points[i]);
      if (with_normals) out.normals.push_back(normals[i]);
      if (with_sem) out.semantic.push_back(semantic[i]);
      if (with_inst) out.instance.push_back(instance[i]);
    }
    return out;
  }

  /// Appends another cloud; attributes survive only if both sides carry them.
  void append(const PointCloud& other) {
    const bool keep_normals = (empty() || has_normals()) && other.has_normals();
    const bool keep_labels = (empty() || has_labels()) && other.has_labels();
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (keep_normals) {
      normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    } else {
      normals.clear();
    }
    if (keep_labels) {
      semantic.insert(semantic.end(), other.semantic.begin(), other.semantic.end());
      instance.insert(instance.end(), other.instance.begin(), other.instance.end());
    } else {
      semantic.clear();
      instance.clear();
    }
  }

  void clear_labels() {
    semantic.clear();
    instance.clear();
  }

  /// Throws when a structural invariant is broken.
  void validate() const {
    for (const Vec3& p : points) {
      if (!p.allFinite()) throw Error("point cloud: non-finite position");
    }
    if (!normals.empty()) {
      if (normals.size() != points.size()) throw Error("point cloud: normal count mismatch");
      for (const Vec3& n : normals) {
        if (std::abs(n.norm() - 1.0) > 1e-6) throw Error("point cloud: normal not unit length");
      }
    }
    if (!semantic.empty() && semantic.size() != points.size()) {
      throw Error("point cloud: semantic label count mismatch");
    }
    if (!instance.empty() && instance.size() != points.size()) {
      throw Error("point cloud: instance label count mismatch");
    }
  }
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  [[nodiscard]] bool valid() const { return (min.array() <= max.array()).all(); }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  [[nodiscard]] Vec3 extent() const { return valid() ? Vec3(max - min) : Vec3::Zero(); }
};

inline Aabb bounds_of(std::span<const Vec3> pts) {
  Aabb box;
  for (const Vec3& p : pts) box.extend(p);
  return box;
}

}  // namespace rescan
