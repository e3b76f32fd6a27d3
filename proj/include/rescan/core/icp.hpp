#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/spatial_index.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace rescan {

struct IcpOptions {
  int max_iterations = 30;
  /// Correspondences farther apart than this are rejected.
  double correspondence_distance = 0.1;
  /// Stop once every parameter update is below this (meters / radians).
  double convergence = 1e-6;
  /// Keep the per-iteration error trace in the result.
  bool record_trace = false;
};

/// Mean squared point-to-plane error before and after one accepted update,
/// both measured over that iteration's correspondences.
struct IcpStep {
  double error_before = 0.0;
  double error_after = 0.0;
  std::size_t correspondences = 0;
};

struct IcpResult {
  GroundPose pose;
  double rmse = 0.0;
  std::size_t correspondences = 0;
  int iterations = 0;
  /// The normal equations were rank deficient at some iteration; the update
  /// was taken in the least-norm sense.
  bool underconstrained = false;
  std::vector<IcpStep> trace;
};

namespace detail {

struct Correspondence {
  Vec3 source;  // source point in its own frame
  Vec3 target;
  Vec3 normal;
};

inline std::vector<Correspondence> find_correspondences(std::span<const Vec3> source,
                                                        const IndexedCloud& target,
                                                        const GroundPose& pose, double max_dist) {
  std::vector<Correspondence> out;
  out.reserve(source.size());
  for (const Vec3& p : source) {
    const Vec3 moved = pose.apply(p);
    if (auto nb = target.index.nearest(moved, max_dist)) {
      out.push_back({p, target.cloud.points[nb->index], target.cloud.normals[nb->index]});
    }
  }
  return out;
}

inline double mean_sq_error(const std::vector<Correspondence>& corr, const GroundPose& pose) {
  double sum = 0.0;
  for (const Correspondence& c : corr) {
    const double r = (pose.apply(c.source) - c.target).dot(c.normal);
    sum += r * r;
  }
  return sum / static_cast<double>(corr.size());
}

}  // namespace detail

/// Aligns `source` to an indexed target with normals by minimizing the
/// point-to-plane error over (tx, ty, yaw); tz stays at its initial value.
///
/// Each iteration solves the linearized 3x3 normal equations with the
/// rotation taken about the centroid of the matched source points, then
/// backtracks the step until the error over the current correspondences does
/// not increase.
inline IcpResult icp_point_to_plane(std::span<const Vec3> source, const IndexedCloud& target,
                                    const GroundPose& init, const IcpOptions& opt = {}) {
  if (source.empty() || target.cloud.empty()) throw Error("icp: empty input");
  if (!target.cloud.has_normals()) throw Error("icp: target normals required");
  if (!(opt.correspondence_distance > 0.0)) throw Error("icp: corr_dist must be positive");

  IcpResult res;
  res.pose = init;
  auto corr = detail::find_correspondences(source, target, res.pose, opt.correspondence_distance);
  if (corr.empty()) throw Error("no overlap");

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (corr.empty()) break;
    res.iterations = it + 1;

    Vec3 center = Vec3::Zero();
    for (const auto& c : corr) center += res.pose.apply(c.source);
    center /= static_cast<double>(corr.size());

    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (const auto& c : corr) {
      const Vec3 moved = res.pose.apply(c.source);
      const Vec3 arm = moved - center;
      const Eigen::Vector3d j(-arm.y() * c.normal.x() + arm.x() * c.normal.y(), c.normal.x(),
                              c.normal.y());
      const double r = (moved - c.target).dot(c.normal);
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(jtj);
    const Eigen::Vector3d evals = solver.eigenvalues();
    const double cutoff = std::max(evals.maxCoeff(), 1e-300) * 1e-10;
    Eigen::Vector3d delta = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      if (evals[k] <= cutoff) {
        res.underconstrained = true;
        continue;
      }
      const Eigen::Vector3d v = solver.eigenvectors().col(k);
      delta -= v * (v.dot(jtr) / evals[k]);
    }

    const double before = detail::mean_sq_error(corr, res.pose);
    GroundPose candidate = res.pose;
    double after = before;
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 8; ++ls, step *= 0.5) {
      const double theta = step * delta[0];
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      // p -> Rz(theta) (p - center) + center + d, composed with the current pose.
      const Vec3 t = res.pose.translation() - center;
      candidate = GroundPose(c * t.x() - s * t.y() + center.x() + step * delta[1],
                             s * t.x() + c * t.y() + center.y() + step * delta[2], res.pose.tz,
                             res.pose.yaw + theta);
      after = detail::mean_sq_error(corr, candidate);
      if (after <= before) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    if (opt.record_trace) res.trace.push_back({before, after, corr.size()});
    const double change = (step * delta).cwiseAbs().maxCoeff();
    res.pose = candidate;
    if (change < opt.convergence) break;
    corr = detail::find_correspondences(source, target, res.pose, opt.correspondence_distance);
  }

  corr = detail::find_correspondences(source, target, res.pose, opt.correspondence_distance);
  res.correspondences = corr.size();
  res.rmse = corr.empty() ? std::numeric_limits<double>::infinity()
                          : std::sqrt(detail::mean_sq_error(corr, res.pose));
  return res;
}

}  // namespace rescan
