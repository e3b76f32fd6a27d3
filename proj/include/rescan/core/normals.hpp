#pragma once

#include "rescan/core/point_cloud.hpp"
#include "rescan/core/spatial_index.hpp"

#include <Eigen/Eigenvalues>

#include <vector>

namespace rescan {

struct NormalEstimate {
  PointCloud cloud;
  /// Points whose neighborhood collapsed to a single location; their normal
  /// falls back to the gravity axis.
  std::vector<std::size_t> degenerate;
};

/// Flips a normal into the canonical hemisphere: n.z >= 0, ties broken by
/// n.x >= 0 and then n.y >= 0.
inline Vec3 orient_normal(Vec3 n, double eps = 1e-9) {
  bool flip = false;
  if (std::abs(n.z()) > eps) {
    flip = n.z() < 0.0;
  } else if (std::abs(n.x()) > eps) {
    flip = n.x() < 0.0;
  } else {
    flip = n.y() < 0.0;
  }
  return flip ? Vec3(-n) : n;
}

/// Unit normals from the smallest-eigenvalue eigenvector of each point's
/// k-nearest-neighbor covariance (the point itself included).
inline NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (k < 3) throw Error("estimate_normals: k must be at least 3");
  if (cloud.size() < k + 1) throw Error("insufficient points");

  NormalEstimate out;
  out.cloud = cloud;
  out.cloud.normals.assign(cloud.size(), gravity_up());
  const SpatialIndex index(cloud.points);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = index.knn(cloud.points[i], k + 1);
    Vec3 mean = Vec3::Zero();
    for (const Neighbor& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const Neighbor& nb : nbrs) {
      const Vec3 d = cloud.points[nb.index] - mean;
      cov.noalias() += d * d.transpose();
    }
    if (cov.trace() <= 1e-24) {
      out.degenerate.push_back(i);
      continue;
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    out.cloud.normals[i] = orient_normal(solver.eigenvectors().col(0).normalized());
  }
  return out;
}

}  // namespace rescan
