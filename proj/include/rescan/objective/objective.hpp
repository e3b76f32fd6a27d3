#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/point_cloud.hpp"
#include "rescan/model/temporal_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rescan {

struct ObjectiveWeights {
  double w_c = 2.0;
  double w_g = 0.3;
  double w_i = 1.0;
  double w_h = 1.8;
  /// Hysteresis score of an object never placed before.
  double h = 0.4;
  double sigma_r = 0.25;
  double sigma_h = 0.5;
  double voxel_size = 0.05;
  /// Use the squared displacement in the hysteresis exponent instead of the
  /// plain distance.
  bool squared_hysteresis = false;

  void validate() const {
    if (w_c < 0.0 || w_g < 0.0 || w_i < 0.0 || w_h < 0.0) {
      throw Error("objective weights must be non-negative");
    }
    if (!(h > 0.0 && h < 1.0)) throw Error("objective: h must lie in (0, 1)");
    if (!(sigma_r > 0.0) || !(sigma_h > 0.0) || !(voxel_size > 0.0)) {
      throw Error("objective: sigmas and voxel size must be positive");
    }
  }
};

/// Occupancy of the scan's dynamic content on a regular lattice whose origin
/// is the scan's bounding-box min corner.
struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.05;
  std::array<std::int64_t, 3> dims{0, 0, 0};
  std::vector<std::uint8_t> occupied;  // holds >= 1 dynamic point
  std::vector<std::uint8_t> active;    // not static-only

  [[nodiscard]] std::size_t cell_count() const { return occupied.size(); }

  [[nodiscard]] std::optional<std::size_t> cell_index(const Vec3& p) const {
    if (occupied.empty()) return std::nullopt;
    std::array<std::int64_t, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<std::int64_t>(std::floor((p[a] - origin[a]) / voxel_size));
      if (c[a] < 0 || c[a] >= dims[a]) return std::nullopt;
    }
    return static_cast<std::size_t>((c[0] * dims[1] + c[1]) * dims[2] + c[2]);
  }

  [[nodiscard]] bool counts(std::size_t cell) const { return occupied[cell] && active[cell]; }

  /// Number of occupied active cells, |V_S|.
  [[nodiscard]] std::size_t occupied_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < occupied.size(); ++i) n += counts(i) ? 1 : 0;
    return n;
  }
};

inline VoxelGrid voxelize_scene(const PointCloud& scene, std::span<const std::uint8_t> static_mask,
                                double voxel_size) {
  if (!(voxel_size > 0.0)) throw Error("voxelize_scene: voxel size must be positive");
  if (static_mask.size() != scene.size()) throw Error("voxelize_scene: static mask size mismatch");
  VoxelGrid g;
  g.voxel_size = voxel_size;
  if (scene.empty()) return g;
  const Aabb box = bounds_of(scene.points);
  g.origin = box.min;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<std::int64_t>(std::floor(box.extent()[a] / voxel_size)) + 1;
  }
  const auto n = static_cast<std::size_t>(g.dims[0] * g.dims[1] * g.dims[2]);
  g.occupied.assign(n, 0);
  g.active.assign(n, 1);
  std::vector<std::uint8_t> has_static(n, 0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto c = g.cell_index(scene.points[i]);
    if (!c) continue;  // cannot happen for points inside the box
    if (static_mask[i]) {
      has_static[*c] = 1;
    } else {
      g.occupied[*c] = 1;
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (has_static[c] && !g.occupied[c]) g.active[c] = 0;
  }
  return g;
}

/// Sorted, unique scene-occupied cells hit by the posed points.
inline std::vector<std::uint32_t> covered_cells(const VoxelGrid& grid, std::span<const Vec3> points,
                                                const GroundPose& pose) {
  std::vector<std::uint32_t> cells;
  for (const Vec3& p : points) {
    const auto c = grid.cell_index(pose.apply(p));
    if (c && grid.counts(*c)) cells.push_back(static_cast<std::uint32_t>(*c));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

struct TermValues {
  double coverage = 0.0;
  double geometry = 0.0;
  double intersection = 1.0;
  double hysteresis = 0.0;
  /// The scan had no occupied dynamic cell, so coverage was defined as 0.
  bool no_dynamic_content = false;
};

struct ObjectiveValue {
  double total = 0.0;
  TermValues terms;
};

inline double combine_terms(const TermValues& t, const ObjectiveWeights& w) {
  return w.w_c * t.coverage + w.w_g * t.geometry + w.w_i * t.intersection + w.w_h * t.hysteresis;
}

inline double coverage_term(const VoxelGrid& grid, const Arrangement& arrangement,
                            const TemporalModel& model, bool* no_dynamic_content = nullptr) {
  const std::size_t total = grid.occupied_count();
  if (no_dynamic_content) *no_dynamic_content = total == 0;
  if (total == 0) return 0.0;
  std::vector<std::uint8_t> hit(grid.cell_count(), 0);
  std::size_t both = 0;
  for (const PosedObject& p : arrangement.placements) {
    for (std::uint32_t c : covered_cells(grid, model.resolve(p.id).geometry().points, p.pose)) {
      if (!hit[c]) {
        hit[c] = 1;
        ++both;
      }
    }
  }
  return static_cast<double>(both) / static_cast<double>(total);
}

inline double geometry_term(const Arrangement& arrangement) {
  if (arrangement.placements.empty()) return 0.0;
  double sum = 0.0;
  for (const PosedObject& p : arrangement.placements) sum += p.score;
  return sum / static_cast<double>(arrangement.placements.size());
}

/// Object statistics carried into the scene frame by a pose.
struct PosedStats {
  Vec3 centroid = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();
};

inline constexpr double kCovarianceEpsilon = 1e-6;

inline PosedStats posed_stats(const ObjectStats& s, const GroundPose& pose) {
  const Mat3 r = pose.rotation();
  return {pose.apply(s.centroid), r * s.covariance * r.transpose()};
}

namespace detail {

inline double mahalanobis(const Vec3& x, const Vec3& mean, const Mat3& cov) {
  const Mat3 reg = cov + kCovarianceEpsilon * Mat3::Identity();
  const Eigen::LLT<Mat3> llt(reg);
  if (llt.info() != Eigen::Success) throw Error("degenerate object");
  const Vec3 d = x - mean;
  return std::sqrt(std::max(0.0, d.dot(llt.solve(d))));
}

}  // namespace detail

/// 0.5 (D_M(m, c_a, S_a) + D_M(m, c_b, S_b)) with m the centroid midpoint.
inline double symmetric_mahalanobis(const PosedStats& a, const PosedStats& b) {
  const Vec3 m = 0.5 * (a.centroid + b.centroid);
  return 0.5 * (detail::mahalanobis(m, a.centroid, a.covariance) +
                detail::mahalanobis(m, b.centroid, b.covariance));
}

inline double pair_overlap(const PosedStats& a, const PosedStats& b, double sigma_r) {
  const double sd = symmetric_mahalanobis(a, b);
  return std::exp(-sd * sd / (2.0 * sigma_r * sigma_r));
}

inline double intersection_term(std::span<const PosedStats> posed, double sigma_r) {
  double worst = 0.0;
  for (std::size_t i = 0; i < posed.size(); ++i) {
    for (std::size_t j = i + 1; j < posed.size(); ++j) {
      worst = std::max(worst, pair_overlap(posed[i], posed[j], sigma_r));
    }
  }
  return 1.0 - worst;
}

inline double intersection_term(const Arrangement& arrangement, const TemporalModel& model,
                                double sigma_r) {
  std::vector<PosedStats> posed;
  for (const PosedObject& p : arrangement.placements) {
    posed.push_back(posed_stats(model.resolve(p.id).stats(), p.pose));
  }
  return intersection_term(posed, sigma_r);
}

inline double hysteresis_from_distance(double dist, double h, double sigma_h, bool squared) {
  const double x = squared ? dist * dist : dist;
  return h + (1.0 - h) * std::exp(-x / (2.0 * sigma_h * sigma_h));
}

inline double hysteresis_score(const PosedObject& placement, const TemporalModel& model,
                               double h, double sigma_h, bool squared = false) {
  const auto previous = model.last_placement(placement.id);
  if (!previous) return h;
  const Vec3& c = model.resolve(placement.id).stats().centroid;
  const double dist = (placement.pose.apply(c) - previous->pose.apply(c)).norm();
  return hysteresis_from_distance(dist, h, sigma_h, squared);
}

inline double hysteresis_term(const Arrangement& arrangement, const TemporalModel& model,
                              double h, double sigma_h, bool squared = false) {
  if (arrangement.placements.empty()) return 0.0;
  double sum = 0.0;
  for (const PosedObject& p : arrangement.placements) {
    sum += hysteresis_score(p, model, h, sigma_h, squared);
  }
  return sum / static_cast<double>(arrangement.placements.size());
}

/// w_c O_c + w_g O_g + w_i O_r + w_h O_h for a candidate arrangement of the
/// scan, with `model` holding the history it is compared against.
inline ObjectiveValue objective(const VoxelGrid& grid, const Arrangement& arrangement,
                                const TemporalModel& model, const ObjectiveWeights& w) {
  ObjectiveValue v;
  v.terms.coverage = coverage_term(grid, arrangement, model, &v.terms.no_dynamic_content);
  v.terms.geometry = geometry_term(arrangement);
  v.terms.intersection = intersection_term(arrangement, model, w.sigma_r);
  v.terms.hysteresis = hysteresis_term(arrangement, model, w.h, w.sigma_h, w.squared_hysteresis);
  v.total = combine_terms(v.terms, w);
  return v;
}

}  // namespace rescan
