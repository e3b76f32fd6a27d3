#pragma once

#include "rescan/core/point_cloud.hpp"
#include "rescan/core/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace rescan {

namespace detail {

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

inline CellKey cell_of(const Vec3& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
          static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

}  // namespace detail

/// Fixed seed of the dart-throwing order; keeps subsampling reproducible.
inline constexpr std::uint64_t kPoissonSeed = 0x5eedb1e5ULL;

/// Candidate visiting order of the dart-throwing pass. Shuffled gives blue
/// noise; Input follows the caller's order, which on a lexicographically
/// ordered lattice packs tighter and covers the surface more evenly.
enum class PoissonOrder { Shuffled, Input };

/// Indices of a maximal Poisson-disk subset: kept points are pairwise at
/// least `radius` apart and every input point lies within `radius` of a kept
/// one. The result is sorted by source index.
inline std::vector<std::size_t> poisson_disk_indices(std::span<const Vec3> points, double radius,
                                                     std::uint64_t seed = kPoissonSeed,
                                                     PoissonOrder order = PoissonOrder::Shuffled) {
  if (!(radius > 0.0)) throw Error("poisson_disk_subsample: radius must be positive");
  std::vector<std::size_t> kept;
  if (points.empty()) return kept;

  const double r2 = radius * radius;
  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellKeyHash> grid;
  grid.reserve(points.size());
  std::vector<std::size_t> visit;
  if (order == PoissonOrder::Shuffled) {
    Rng rng(seed);
    visit = rng.permutation(points.size());
  } else {
    visit.resize(points.size());
    std::iota(visit.begin(), visit.end(), std::size_t{0});
  }
  for (std::size_t i : visit) {
    const Vec3& p = points[i];
    const detail::CellKey c = detail::cell_of(p, radius);
    bool blocked = false;
    for (std::int64_t dx = -1; dx <= 1 && !blocked; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && !blocked; ++dy) {
        for (std::int64_t dz = -1; dz <= 1 && !blocked; ++dz) {
          auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if ((points[j] - p).squaredNorm() < r2) {
              blocked = true;
              break;
            }
          }
        }
      }
    }
    if (!blocked) {
      grid[c].push_back(i);
      kept.push_back(i);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline PointCloud poisson_disk_subsample(const PointCloud& cloud, double radius,
                                         PoissonOrder order = PoissonOrder::Shuffled) {
  return cloud.select(poisson_disk_indices(cloud.points, radius, kPoissonSeed, order));
}

/// Minimum point spacings of the four hierarchy levels, finest first.
inline constexpr std::array<double, 4> kHierarchySpacings{0.01, 0.02, 0.04, 0.08};

struct SamplingHierarchy {
  std::array<PointCloud, 4> levels;

  static constexpr std::size_t kLevels = 4;
  static constexpr std::size_t kCoarsest = 3;

  [[nodiscard]] const PointCloud& level(std::size_t i) const { return levels.at(i); }
  [[nodiscard]] static double spacing(std::size_t i) { return kHierarchySpacings.at(i); }
};

inline SamplingHierarchy build_hierarchy(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("build_hierarchy: empty cloud");
  if (!cloud.has_normals()) throw Error("normals required");
  SamplingHierarchy h;
  for (std::size_t i = 0; i < SamplingHierarchy::kLevels; ++i) {
    h.levels[i] = poisson_disk_subsample(cloud, kHierarchySpacings[i]);
  }
  return h;
}

}  // namespace rescan
