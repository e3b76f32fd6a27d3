#pragma once

// Small random arrangement problems with an exhaustive-enumeration oracle.

#include "rescan/objective/objective.hpp"
#include "rescan/optimizer/annealing.hpp"

#include <vector>

namespace rescan::testing {

struct OptimizerInstance {
  TemporalModel model;
  VoxelGrid grid;
  std::vector<PoseSet> sets;
};

inline PointCloud random_box_points(Rng& rng, const Vec3& half, std::size_t n) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-half.x(), half.x()), rng.uniform(-half.y(), half.y()),
                          rng.uniform(0.0, 2 * half.z()));
    c.normals.emplace_back(0, 0, 1);
  }
  return c;
}

/// Up to `max_objects` objects with up to `max_poses` candidate poses each,
/// over a scene of a few blobs on a floor. Candidates sit on blobs or in free
/// space, with random yaw and score; classes are drawn from {1, 2} so that
/// swaps are possible.
inline OptimizerInstance random_instance(std::uint64_t seed, std::size_t max_objects = 3,
                                         std::size_t max_poses = 3) {
  Rng rng(mix_seed(seed, 0x0b7));
  OptimizerInstance inst;
  const std::size_t blobs = 1 + rng.index(3);
  std::vector<Vec3> centers;
  PointCloud scene;
  std::vector<std::uint8_t> mask;
  for (int i = 0; i <= 40; ++i) {
    for (int j = 0; j <= 40; ++j) {
      scene.points.emplace_back(0.05 * i, 0.05 * j, 0.0);
      mask.push_back(1);
    }
  }
  for (std::size_t b = 0; b < blobs; ++b) {
    const Vec3 c(rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7), 0.0);
    centers.push_back(c);
    const PointCloud pts = random_box_points(rng, Vec3(0.15, 0.15, 0.2), 300);
    for (const Vec3& p : pts.points) {
      scene.points.push_back(p + c);
      mask.push_back(0);
    }
  }
  inst.grid = voxelize_scene(scene, mask, 0.05);

  const std::size_t n = 1 + rng.index(max_objects);
  Arrangement history;
  for (std::size_t k = 0; k < n; ++k) {
    const int id = static_cast<int>(k) + 1;
    const Vec3 half(rng.uniform(0.1, 0.2), rng.uniform(0.1, 0.2), rng.uniform(0.1, 0.25));
    PointCloud g = random_box_points(rng, half, 150);
    inst.model.insert_object(ObjectInstance(id, 1 + static_cast<int>(rng.index(2)), g));
    if (rng.uniform() < 0.8) {
      history.placements.push_back(
          {id, GroundPose(rng.uniform(0, 2), rng.uniform(0, 2), 0.0, rng.uniform(-3, 3)), 1.0});
    }
  }
  inst.model.append_arrangement(history);

  for (std::size_t k = 0; k < n; ++k) {
    PoseSet s;
    s.id = static_cast<int>(k) + 1;
    const std::size_t m = rng.index(max_poses + 1);
    for (std::size_t l = 0; l < m; ++l) {
      Vec3 at;
      if (rng.uniform() < 0.7) {
        at = centers[rng.index(centers.size())] +
             Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0);
      } else {
        at = Vec3(rng.uniform(0, 2), rng.uniform(0, 2), 0.0);
      }
      s.poses.push_back({GroundPose(at.x(), at.y(), 0.0, rng.uniform(-3, 3)), rng.uniform()});
    }
    inst.sets.push_back(std::move(s));
  }
  return inst;
}

inline Arrangement arrangement_of(const std::vector<PoseSet>& sets, const std::vector<int>& choice,
                                  std::size_t timestep) {
  Arrangement a;
  a.timestep = timestep;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    if (choice[k] < 0) continue;
    const ScoredPose& p = sets[k].poses[static_cast<std::size_t>(choice[k])];
    a.placements.push_back({sets[k].id, p.pose, p.score});
  }
  return a;
}

/// Maximum objective over all prod(|P_k| + 1) arrangements, evaluated with
/// the plain (uncached) objective.
inline double exhaustive_optimum(const OptimizerInstance& inst, const ObjectiveWeights& w) {
  const std::size_t n = inst.sets.size();
  std::vector<int> choice(n, -1);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    const Arrangement a = arrangement_of(inst.sets, choice, inst.model.history().size());
    best = std::max(best, objective(inst.grid, a, inst.model, w).total);
    std::size_t k = 0;
    while (k < n) {
      if (choice[k] + 1 < static_cast<int>(inst.sets[k].poses.size())) {
        ++choice[k];
        break;
      }
      choice[k] = -1;
      ++k;
    }
    if (k == n) break;
  }
  return best;
}

}  // namespace rescan::testing
