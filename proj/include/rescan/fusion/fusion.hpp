#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/sampling.hpp"
#include "rescan/core/spatial_index.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <vector>

namespace rescan {

struct FusionOptions {
  double bin = 0.01;
  double spacing = 0.01;
  /// Neighborhood of the mean-surface projection; 0 disables it.
  double smooth_radius = 0.03;
};

struct FusionResult {
  PointCloud geometry;
  /// The segment was empty and the geometry was returned unchanged.
  bool no_observation = false;
};

/// Averages all points sharing a cubic bin. Normals are flipped to agree
/// with the bin's running sum before averaging, then renormalized. Bins are
/// emitted in lexicographic cell order.
inline PointCloud bin_average(const PointCloud& cloud, double bin) {
  if (!(bin > 0.0)) throw Error("bin_average: bin must be positive");
  struct Acc {
    Vec3 pos = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    std::size_t count = 0;
  };
  const bool normals = cloud.has_normals();
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Acc> bins;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const detail::CellKey c = detail::cell_of(cloud.points[i], bin);
    Acc& a = bins[{c.x, c.y, c.z}];
    a.pos += cloud.points[i];
    if (normals) {
      const Vec3& n = cloud.normals[i];
      a.normal += (a.count > 0 && a.normal.dot(n) < 0.0) ? Vec3(-n) : n;
    }
    ++a.count;
  }
  PointCloud out;
  out.reserve(bins.size());
  for (const auto& [key, a] : bins) {
    out.points.push_back(a.pos / static_cast<double>(a.count));
    if (normals) {
      const double len = a.normal.norm();
      out.normals.push_back(len > 1e-12 ? Vec3(a.normal / len) : gravity_up());
    }
  }
  return out;
}

namespace detail {

/// Moves each point along the mean normal of its same-facing neighbors
/// (within `radius`, normals within about 45 degrees, either orientation)
/// onto their centroid plane. Faces meeting at an edge do not mix, so edges
/// stay sharp. Points with fewer than six such neighbors stay put.
inline PointCloud project_to_mean_surface(const PointCloud& cloud, double radius) {
  constexpr double kMinCos = 0.7;
  constexpr std::size_t kMinNeighbors = 6;
  if (radius <= 0.0 || !cloud.has_normals() || cloud.empty()) return cloud;
  const SpatialIndex index(cloud.points);
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& ni = cloud.normals[i];
    Vec3 centroid = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    std::size_t count = 0;
    for (const Neighbor& nb : index.radius(cloud.points[i], radius)) {
      const Vec3& nj = cloud.normals[nb.index];
      const double d = nj.dot(ni);
      if (std::abs(d) < kMinCos) continue;
      centroid += cloud.points[nb.index];
      normal += d < 0.0 ? Vec3(-nj) : nj;
      ++count;
    }
    if (count < kMinNeighbors) continue;
    centroid /= static_cast<double>(count);
    normal.normalize();
    out.points[i] -= normal * normal.dot(cloud.points[i] - centroid);
  }
  return out;
}

}  // namespace detail

/// Merges a scan segment into an object's geometry: the segment is carried
/// into the object frame by pose^-1 and concatenated with G. The union is
/// projected onto a local mean surface, bin-averaged and resampled with a
/// Poisson-disk pass in bin order.
inline FusionResult fuse_object(const PointCloud& geometry, const PointCloud& segment,
                                const GroundPose& pose, const FusionOptions& opt = {}) {
  FusionResult res;
  if (segment.empty()) {
    res.geometry = geometry;
    res.no_observation = true;
    return res;
  }
  PointCloud merged = geometry;
  merged.clear_labels();
  PointCloud local = pose.inverse().transform(segment);
  local.clear_labels();
  merged.append(local);
  res.geometry =
      poisson_disk_subsample(bin_average(detail::project_to_mean_surface(merged, opt.smooth_radius),
                                         opt.bin),
                             opt.spacing, PoissonOrder::Input);
  return res;
}

}  // namespace rescan
