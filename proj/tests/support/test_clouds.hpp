#pragma once

// Small cloud builders shared by the unit tests.

#include "rescan/core/point_cloud.hpp"
#include "rescan/core/random.hpp"
#include "rescan/core/spatial_index.hpp"
#include "rescan/synth/scene_script.hpp"
#include "rescan/synth/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rescan::testing {

/// Regular n x m grid on the plane z = height, spacing `step`.
inline PointCloud grid_plane(int n, int m, double step, double height = 0.0) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      c.points.emplace_back(i * step, j * step, height);
      c.normals.emplace_back(0, 0, 1);
    }
  }
  return c;
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double extent) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                          rng.uniform(-extent, extent));
    c.normals.emplace_back(0, 0, 1);
  }
  return c;
}

/// Chair-like asymmetric prototype that constrains all ground-plane dofs.
inline synth::Prototype chair_prototype() {
  return {"chair", synth::ShapeKind::LShape, 1, {0.45, 0.5, 0.45, 0.9, 0.06}};
}

inline synth::Prototype box_prototype(double w = 0.6, double d = 0.4, double h = 0.5) {
  return {"box", synth::ShapeKind::Box, 2, {w, d, h}};
}

/// Dense noiseless surface samples of a prototype.
inline PointCloud sample(const synth::Prototype& p, double density, std::uint64_t seed = 3) {
  Rng rng(seed);
  return synth::sample_prototype(p, density, rng);
}

/// A 3 m x 3 m room script without noise holding the given objects at t0.
inline synth::SceneScript room_script(std::vector<synth::ObjectSpec> objects, double noise = 0.0) {
  synth::SceneScript s;
  s.name = "test";
  s.seed = 11;
  s.room = {3.0, 3.0, 1.0};
  s.noise = noise;
  s.prototypes = {chair_prototype(), box_prototype(),
                  {"stool", synth::ShapeKind::Cylinder, 5, {0.2, 0.45}}};
  s.objects = std::move(objects);
  return s;
}

inline double min_pairwise_distance(const PointCloud& c) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      best = std::min(best, (c.points[i] - c.points[j]).norm());
    }
  }
  return best;
}

/// Fraction of `reference` points with a point of `cloud` within `radius`.
inline double coverage_fraction(const PointCloud& reference, const PointCloud& cloud,
                                double radius) {
  if (reference.empty()) return 0.0;
  const SpatialIndex index(cloud.points);
  std::size_t hit = 0;
  for (const Vec3& p : reference.points) hit += index.nearest(p, radius) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(reference.size());
}

/// Symmetric Hausdorff distance.
inline double hausdorff(const PointCloud& a, const PointCloud& b) {
  auto one_way = [](const PointCloud& x, const PointCloud& y) {
    const SpatialIndex index(y.points);
    double worst = 0.0;
    for (const Vec3& p : x.points) worst = std::max(worst, std::sqrt(index.nearest(p)->dist2));
    return worst;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

}  // namespace rescan::testing
