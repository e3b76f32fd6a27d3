#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/point_cloud.hpp"
#include "rescan/core/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace rescan {

enum class PlaneKind { Floor, Ceiling, Wall };

/// Plane n.p + offset = 0 with unit normal n.
struct PlaneModel {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::vector<std::size_t> inliers;
  PlaneKind kind = PlaneKind::Floor;

  [[nodiscard]] double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
  [[nodiscard]] double distance(const Vec3& p) const { return std::abs(signed_distance(p)); }

  /// Height of a (near-)horizontal plane above the point (x, y).
  [[nodiscard]] double height_at(double x, double y) const {
    return -(offset + normal.x() * x + normal.y() * y) / normal.z();
  }
};

struct StaticDetectionOptions {
  double inlier_threshold = 0.015;
  double min_inlier_fraction = 0.05;
  int iterations = 300;
  /// Orientation gate for floors/ceilings (normal vs gravity) and walls
  /// (normal vs horizontal).
  double max_tilt_deg = 10.0;
  /// A structural plane must bound the scene: at most this fraction of all
  /// points may lie beyond it.
  double support_tolerance = 0.02;
  /// A ceiling must hold at least this fraction of the floor's inliers.
  double min_ceiling_ratio = 0.5;
  std::size_t max_planes = 16;
  /// Hypotheses are scored on a random sample of this many points.
  std::size_t score_sample = 4000;
  std::uint64_t seed = 17;
};

struct StaticDetection {
  std::vector<std::uint8_t> mask;  // 1 = static
  std::vector<PlaneModel> planes;

  [[nodiscard]] std::size_t static_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }

  /// The lowest accepted floor plane, if any.
  [[nodiscard]] const PlaneModel* floor() const {
    const PlaneModel* best = nullptr;
    for (const PlaneModel& p : planes) {
      if (p.kind != PlaneKind::Floor) continue;
      if (best == nullptr || p.height_at(0, 0) < best->height_at(0, 0)) best = &p;
    }
    return best;
  }
};

namespace detail {

inline std::optional<PlaneModel> plane_through(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len < 1e-12) return std::nullopt;
  n /= len;
  PlaneModel m;
  m.normal = n;
  m.offset = -n.dot(a);
  return m;
}

inline PlaneModel fit_plane(const std::vector<Vec3>& pts, std::span<const std::size_t> ids) {
  Vec3 mean = Vec3::Zero();
  for (std::size_t i : ids) mean += pts[i];
  mean /= static_cast<double>(ids.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t i : ids) {
    const Vec3 d = pts[i] - mean;
    cov.noalias() += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  PlaneModel m;
  m.normal = solver.eigenvectors().col(0).normalized();
  m.offset = -m.normal.dot(mean);
  return m;
}

}  // namespace detail

/// Extracts planes largest-first with RANSAC while each holds at least
/// `min_inlier_fraction` of the remaining points, and keeps as static the
/// ones that look like floor, ceiling or walls: orientation within the tilt
/// gate and bounding the scene (almost no points beyond the plane).
inline StaticDetection detect_static(const PointCloud& cloud, const StaticDetectionOptions& opt) {
  if (cloud.empty()) throw Error("detect_static: empty cloud");
  if (!(opt.min_inlier_fraction > 0.0 && opt.min_inlier_fraction < 1.0)) {
    throw Error("detect_static: min_inlier_fraction must lie in (0, 1)");
  }
  const std::vector<Vec3>& pts = cloud.points;
  const std::size_t n = pts.size();
  StaticDetection out;
  out.mask.assign(n, 0);

  std::vector<std::size_t> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = i;

  const double cos_tilt = std::cos(deg2rad(opt.max_tilt_deg));
  const double sin_tilt = std::sin(deg2rad(opt.max_tilt_deg));
  Rng rng(opt.seed);

  std::vector<PlaneModel> candidates;
  while (remaining.size() >= 3 && candidates.size() < opt.max_planes) {
    // Score hypotheses on a subsample of the remaining points.
    std::vector<std::size_t> sample;
    if (remaining.size() <= opt.score_sample) {
      sample = remaining;
    } else {
      sample.reserve(opt.score_sample);
      for (std::size_t s = 0; s < opt.score_sample; ++s) {
        sample.push_back(remaining[rng.index(remaining.size())]);
      }
    }

    std::optional<PlaneModel> best;
    std::size_t best_count = 0;
    for (int it = 0; it < opt.iterations; ++it) {
      const std::size_t a = remaining[rng.index(remaining.size())];
      const std::size_t b = remaining[rng.index(remaining.size())];
      const std::size_t c = remaining[rng.index(remaining.size())];
      if (a == b || b == c || a == c) continue;
      auto hyp = detail::plane_through(pts[a], pts[b], pts[c]);
      if (!hyp) continue;
      std::size_t count = 0;
      for (std::size_t i : sample) {
        if (hyp->distance(pts[i]) <= opt.inlier_threshold) ++count;
      }
      if (count > best_count) {
        best_count = count;
        best = hyp;
      }
    }
    if (!best) break;

    auto collect = [&](const PlaneModel& m) {
      std::vector<std::size_t> ids;
      for (std::size_t i : remaining) {
        if (m.distance(pts[i]) <= opt.inlier_threshold) ids.push_back(i);
      }
      return ids;
    };
    std::vector<std::size_t> inliers = collect(*best);
    if (inliers.size() >= 3) {
      PlaneModel refined = detail::fit_plane(pts, inliers);
      std::vector<std::size_t> refit = collect(refined);
      if (refit.size() >= inliers.size()) {
        *best = refined;
        inliers = std::move(refit);
      }
    }
    if (static_cast<double>(inliers.size()) <
        opt.min_inlier_fraction * static_cast<double>(remaining.size())) {
      break;
    }

    PlaneModel plane = *best;
    plane.inliers = inliers;

    std::vector<std::size_t> rest;
    rest.reserve(remaining.size() - inliers.size());
    std::set_difference(remaining.begin(), remaining.end(), inliers.begin(), inliers.end(),
                        std::back_inserter(rest));
    remaining = std::move(rest);

    const double nz = std::abs(plane.normal.z());
    const bool horizontal = nz >= cos_tilt;
    const bool vertical = nz <= sin_tilt;
    if (!horizontal && !vertical) continue;

    // Count points strictly on either side, beyond the inlier band.
    std::size_t pos = 0, neg = 0;
    for (const Vec3& p : pts) {
      const double d = plane.signed_distance(p);
      if (d > opt.inlier_threshold) ++pos;
      if (d < -opt.inlier_threshold) ++neg;
    }
    const double tol = opt.support_tolerance * static_cast<double>(n);
    if (static_cast<double>(pos) > tol && static_cast<double>(neg) > tol) continue;
    // Orient the normal toward the scene content.
    if (pos < neg) {
      plane.normal = -plane.normal;
      plane.offset = -plane.offset;
    }
    if (horizontal) {
      plane.kind = plane.normal.z() > 0.0 ? PlaneKind::Floor : PlaneKind::Ceiling;
      // Report floors and ceilings with an upward normal.
      if (plane.normal.z() < 0.0) {
        plane.normal = -plane.normal;
        plane.offset = -plane.offset;
      }
    } else {
      plane.kind = PlaneKind::Wall;
    }
    candidates.push_back(std::move(plane));
  }

  std::size_t floor_inliers = 0;
  for (const PlaneModel& p : candidates) {
    if (p.kind == PlaneKind::Floor) floor_inliers = std::max(floor_inliers, p.inliers.size());
  }
  for (PlaneModel& p : candidates) {
    if (p.kind == PlaneKind::Ceiling &&
        static_cast<double>(p.inliers.size()) <
            opt.min_ceiling_ratio * static_cast<double>(floor_inliers)) {
      continue;
    }
    for (std::size_t i : p.inliers) out.mask[i] = 1;
    out.planes.push_back(std::move(p));
  }
  return out;
}

inline StaticDetection detect_static(const PointCloud& cloud, double inlier_thresh,
                                     double min_inlier_frac) {
  StaticDetectionOptions opt;
  opt.inlier_threshold = inlier_thresh;
  opt.min_inlier_fraction = min_inlier_frac;
  return detect_static(cloud, opt);
}

}  // namespace rescan
