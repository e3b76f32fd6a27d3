#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/icp.hpp"
#include "rescan/core/plane_detection.hpp"
#include "rescan/core/sampling.hpp"
#include "rescan/core/spatial_index.hpp"
#include "rescan/model/temporal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rescan {

struct ScoredPose {
  GroundPose pose;
  double score = 0.0;
};

struct ProposalConfig {
  double translation_step = 0.10;
  int yaw_count = 16;
  double promote_fraction = 0.5;
  std::size_t max_poses_per_level = 50;
  double nms_dist = 0.2;
  double nms_yaw_deg = 15.0;
  /// Score tolerance; 0 means the spacing of the level being scored.
  double score_tau = 0.0;
  /// Grid poses whose coarse points mostly fall outside the occupied part of
  /// the scene are skipped before ICP.
  double min_overlap = 0.9;
  double overlap_cell = 0.1;
  int coarse_icp_iterations = 8;
  int fine_icp_iterations = 10;
  /// ICP correspondence gate as a multiple of the level spacing.
  double corr_dist_factor = 2.0;

  void validate() const {
    if (!(translation_step > 0.0) || yaw_count <= 0 || max_poses_per_level == 0 ||
        !(nms_dist > 0.0) || !(nms_yaw_deg > 0.0) || score_tau < 0.0 || !(overlap_cell > 0.0) ||
        !(corr_dist_factor > 0.0)) {
      throw Error("proposal config: parameters must be positive");
    }
    if (!(promote_fraction > 0.0 && promote_fraction <= 1.0)) {
      throw Error("proposal config: promote_fraction must lie in (0, 1]");
    }
    if (min_overlap < 0.0 || min_overlap > 1.0) {
      throw Error("proposal config: min_overlap must lie in [0, 1]");
    }
  }
};

/// Everything proposal needs from one scan, prepared once and shared by all
/// objects: the non-static points (full resolution and per hierarchy
/// spacing), the floor, and a dilated occupancy set for the overlap gate.
struct ProposalScene {
  IndexedCloud dynamic;
  std::array<IndexedCloud, SamplingHierarchy::kLevels> levels;
  std::optional<PlaneModel> floor;
  Aabb bounds;  // of the dynamic points
  double overlap_cell = 0.1;
  std::unordered_set<detail::CellKey, detail::CellKeyHash> occupied;

  [[nodiscard]] bool occupied_at(const Vec3& p) const {
    return occupied.contains(detail::cell_of(p, overlap_cell));
  }
};

inline ProposalScene prepare_proposal_scene(const PointCloud& scan,
                                            const StaticDetection& statics,
                                            double overlap_cell = 0.1) {
  if (!scan.has_normals()) throw Error("proposal: scene normals required");
  if (statics.mask.size() != scan.size()) throw Error("proposal: static mask size mismatch");
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (statics.mask[i] == 0) ids.push_back(i);
  }
  ProposalScene s;
  PointCloud dyn = scan.select(ids);
  dyn.clear_labels();
  s.bounds = bounds_of(dyn.points);
  s.overlap_cell = overlap_cell;
  for (const Vec3& p : dyn.points) {
    const detail::CellKey c = detail::cell_of(p, overlap_cell);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) s.occupied.insert({c.x + dx, c.y + dy, c.z + dz});
      }
    }
  }
  for (std::size_t l = 0; l < SamplingHierarchy::kLevels; ++l) {
    s.levels[l] = IndexedCloud(poisson_disk_subsample(dyn, SamplingHierarchy::spacing(l)));
  }
  s.dynamic = IndexedCloud(std::move(dyn));
  if (const PlaneModel* f = statics.floor()) s.floor = *f;
  return s;
}

/// Mean clamped point-to-plane agreement of the posed points with the
/// scene: each point contributes max(0, 1 - |residual| / tau) against its
/// nearest scene point, or 0 if that neighbor is farther than 2 tau.
inline double score_pose(std::span<const Vec3> points, const IndexedCloud& scene,
                         const GroundPose& pose, double tau) {
  if (points.empty()) throw Error("score_pose: empty level");
  if (!(tau > 0.0)) throw Error("score_pose: tau must be positive");
  if (!scene.cloud.has_normals()) {
    if (scene.cloud.empty()) return 0.0;
    throw Error("score_pose: scene normals required");
  }
  double sum = 0.0;
  for (const Vec3& p : points) {
    const Vec3 q = pose.apply(p);
    const auto nb = scene.index.nearest(q, 2.0 * tau);
    if (!nb) continue;
    const double r = std::abs((q - scene.cloud.points[nb->index]).dot(scene.cloud.normals[nb->index]));
    sum += std::max(0.0, 1.0 - r / tau);
  }
  return std::clamp(sum / static_cast<double>(points.size()), 0.0, 1.0);
}

inline double score_pose(const ObjectInstance& object, std::size_t level, const IndexedCloud& scene,
                         const GroundPose& pose, double tau) {
  return score_pose(object.hierarchy().level(level).points, scene, pose, tau);
}

/// True when b lies within both NMS radii of a.
inline bool nms_close(const GroundPose& a, const GroundPose& b, double dist, double yaw_rad) {
  return std::hypot(a.tx - b.tx, a.ty - b.ty) < dist && angle_distance(a.yaw, b.yaw) < yaw_rad;
}

/// Greedy non-maximum suppression; input need not be sorted. Output is
/// sorted by descending score (ties: lower tx, ty, yaw first).
inline std::vector<ScoredPose> non_maximum_suppression(std::vector<ScoredPose> poses, double dist,
                                                       double yaw_rad) {
  std::stable_sort(poses.begin(), poses.end(), [](const ScoredPose& a, const ScoredPose& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pose.tx != b.pose.tx) return a.pose.tx < b.pose.tx;
    if (a.pose.ty != b.pose.ty) return a.pose.ty < b.pose.ty;
    return a.pose.yaw < b.pose.yaw;
  });
  std::vector<ScoredPose> kept;
  for (const ScoredPose& p : poses) {
    bool suppressed = false;
    for (const ScoredPose& k : kept) {
      if (nms_close(k.pose, p.pose, dist, yaw_rad)) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

struct ProposalStats {
  std::size_t grid_poses = 0;
  std::size_t icp_runs = 0;
  std::vector<std::size_t> kept_per_level;
  std::string warning;
};

namespace detail {

/// Keeps the best pose per (1 cm, 1 degree) cell; sorted by descending score.
inline std::vector<ScoredPose> dedupe_poses(const std::vector<ScoredPose>& in) {
  std::unordered_map<CellKey, ScoredPose, CellKeyHash> best;
  std::vector<CellKey> order;
  for (const ScoredPose& p : in) {
    const CellKey k{std::llround(p.pose.tx / 0.01), std::llround(p.pose.ty / 0.01),
                    std::llround(rad2deg(p.pose.yaw))};
    auto it = best.find(k);
    if (it == best.end()) {
      best.emplace(k, p);
      order.push_back(k);
    } else if (p.score > it->second.score) {
      it->second = p;
    }
  }
  std::vector<ScoredPose> out;
  out.reserve(order.size());
  for (const CellKey& k : order) out.push_back(best.at(k));
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredPose& a, const ScoredPose& b) { return a.score > b.score; });
  return out;
}

inline void promote(std::vector<ScoredPose>& poses, double fraction, std::size_t cap) {
  if (poses.empty()) return;
  const double cut = fraction * poses.front().score;
  std::size_t n = 0;
  while (n < poses.size() && n < cap && poses[n].score >= cut) ++n;
  poses.resize(n);
}

}  // namespace detail

/// Height offset that puts the object's origin at rest on the floor at
/// (x, y). With a previous placement the object's clearance above the floor
/// is carried over; otherwise its lowest points are set on the floor.
inline double resting_height(const ObjectInstance& object, const PlaneModel& floor, double x,
                             double y, const std::optional<GroundPose>& previous) {
  if (previous) {
    return floor.height_at(x, y) + previous->tz - floor.height_at(previous->tx, previous->ty);
  }
  std::vector<double> z;
  z.reserve(object.geometry().size());
  for (const Vec3& p : object.geometry().points) z.push_back(p.z());
  const std::size_t k = z.size() / 200;
  std::nth_element(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(k), z.end());
  return floor.height_at(x, y) - z[k];
}

/// Coarse-to-fine grid search: ICP from every grid pose at the coarsest
/// level, then promotion and re-refinement level by level, then NMS.
inline std::vector<ScoredPose> propose_poses(const ObjectInstance& object,
                                             const ProposalScene& scene,
                                             const ProposalConfig& cfg,
                                             const std::optional<GroundPose>& previous = {},
                                             ProposalStats* stats = nullptr) {
  cfg.validate();
  if (!scene.floor) throw Error("no ground plane");
  ProposalStats local;
  ProposalStats& st = stats ? *stats : local;
  st = {};
  if (scene.dynamic.cloud.empty()) {
    st.warning = "scene has no dynamic points";
    return {};
  }

  // Objects that cannot fit inside the scanned region are not searched.
  const Aabb obj_box = bounds_of(object.geometry().points);
  const Vec3 obj_ext = obj_box.extent();
  const Vec3 scene_ext = scene.bounds.extent();
  const double slack = cfg.translation_step;
  if (std::min(obj_ext.x(), obj_ext.y()) > std::max(scene_ext.x(), scene_ext.y()) + slack) {
    st.warning = "object " + std::to_string(object.id()) + " is larger than the scene";
    return {};
  }

  const std::size_t coarse = SamplingHierarchy::kCoarsest;
  const auto& coarse_pts = object.hierarchy().level(coarse).points;
  const double two_pi = 2.0 * std::numbers::pi;
  const auto nx = static_cast<long>(std::floor(scene_ext.x() / cfg.translation_step)) + 1;
  const auto ny = static_cast<long>(std::floor(scene_ext.y() / cfg.translation_step)) + 1;

  auto tau_for = [&](std::size_t level) {
    return cfg.score_tau > 0.0 ? cfg.score_tau : SamplingHierarchy::spacing(level);
  };
  auto icp_target = [&](std::size_t level) -> const IndexedCloud& {
    return scene.levels[level == 0 ? 0 : level - 1];
  };

  std::vector<ScoredPose> current;
  IcpOptions coarse_opt;
  coarse_opt.max_iterations = cfg.coarse_icp_iterations;
  coarse_opt.correspondence_distance = cfg.corr_dist_factor * SamplingHierarchy::spacing(coarse);
  for (long ix = 0; ix < nx; ++ix) {
    for (long iy = 0; iy < ny; ++iy) {
      const double x = scene.bounds.min.x() + static_cast<double>(ix) * cfg.translation_step;
      const double y = scene.bounds.min.y() + static_cast<double>(iy) * cfg.translation_step;
      const double z = resting_height(object, *scene.floor, x, y, previous);
      for (int k = 0; k < cfg.yaw_count; ++k) {
        const GroundPose start(x, y, z, -std::numbers::pi + two_pi * k / cfg.yaw_count);
        ++st.grid_poses;
        if (cfg.min_overlap > 0.0) {
          std::size_t inside = 0;
          for (const Vec3& p : coarse_pts) inside += scene.occupied_at(start.apply(p)) ? 1 : 0;
          if (static_cast<double>(inside) < cfg.min_overlap * static_cast<double>(coarse_pts.size())) {
            continue;
          }
        }
        try {
          ++st.icp_runs;
          const IcpResult r = icp_point_to_plane(coarse_pts, icp_target(coarse), start, coarse_opt);
          current.push_back({r.pose, score_pose(coarse_pts, scene.dynamic, r.pose, tau_for(coarse))});
        } catch (const Error&) {
          // no overlap from this start
        }
      }
    }
  }
  current = detail::dedupe_poses(current);
  detail::promote(current, cfg.promote_fraction, cfg.max_poses_per_level);
  st.kept_per_level.push_back(current.size());

  for (std::size_t level = coarse; level-- > 0;) {
    const auto& pts = object.hierarchy().level(level).points;
    IcpOptions opt;
    opt.max_iterations = cfg.fine_icp_iterations;
    opt.correspondence_distance = cfg.corr_dist_factor * SamplingHierarchy::spacing(level);
    std::vector<ScoredPose> next;
    next.reserve(current.size());
    for (const ScoredPose& c : current) {
      GroundPose pose = c.pose;
      try {
        ++st.icp_runs;
        pose = icp_point_to_plane(pts, icp_target(level), c.pose, opt).pose;
      } catch (const Error&) {
        // keep the coarser estimate
      }
      next.push_back({pose, score_pose(pts, scene.dynamic, pose, tau_for(level))});
    }
    current = detail::dedupe_poses(next);
    detail::promote(current, cfg.promote_fraction, cfg.max_poses_per_level);
    st.kept_per_level.push_back(current.size());
  }

  return non_maximum_suppression(std::move(current), cfg.nms_dist, deg2rad(cfg.nms_yaw_deg));
}

}  // namespace rescan
