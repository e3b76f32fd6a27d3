#pragma once

#include "rescan/core/point_cloud.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

namespace rescan {

struct Neighbor {
  std::size_t index = 0;
  double dist2 = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor& a, const Neighbor& b) = default;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Immutable kd-tree over a fixed point set.
///
/// Every query is exact: results match a brute-force scan, with equal
/// distances ordered by point index.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size = 10)
      : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
    packed_.reserve(order_.size());
    for (std::uint32_t i : order_) packed_.push_back(points_[i]);
  }

  [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
  [[nodiscard]] bool empty() const noexcept { return points_.empty(); }
  [[nodiscard]] const Vec3& point(std::size_t i) const { return points_[i]; }
  [[nodiscard]] const std::vector<Vec3>& points() const noexcept { return points_; }

  /// Closest point with distance <= max_dist, if any.
  [[nodiscard]] std::optional<Neighbor> nearest(
      const Vec3& q, double max_dist = std::numeric_limits<double>::infinity()) const {
    if (points_.empty()) return std::nullopt;
    Neighbor best{std::numeric_limits<std::size_t>::max(),
                  std::isinf(max_dist) ? max_dist : max_dist * max_dist};
    nearest_impl(0, q, best);
    if (best.index == std::numeric_limits<std::size_t>::max()) return std::nullopt;
    return best;
  }

  /// The k closest points, sorted by (distance, index).
  [[nodiscard]] std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (points_.empty() || k == 0) return heap;
    heap.reserve(k + 1);
    knn_impl(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  /// All points with distance <= r, sorted by (distance, index).
  [[nodiscard]] std::vector<Neighbor> radius(const Vec3& q, double r) const {
    std::vector<Neighbor> out;
    if (points_.empty()) return out;
    radius_impl(0, q, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double split = 0.0;
    int axis = -1;  // -1 marks a leaf
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = points_[order_[begin]];
    Vec3 hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as one leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    Node& node = nodes_[static_cast<std::size_t>(id)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void nearest_impl(std::int32_t id, const Vec3& q, Neighbor& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{order_[i], squared_distance(q, packed_[i])};
        if (cand.dist2 < best.dist2 || (cand.dist2 == best.dist2 && cand.index < best.index)) {
          best = cand;
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    nearest_impl(near, q, best);
    if (diff * diff <= best.dist2) nearest_impl(far, q, best);
  }

  void knn_impl(std::int32_t id, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{order_[i], squared_distance(q, packed_[i])};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    knn_impl(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().dist2) knn_impl(far, q, k, heap);
  }

  void radius_impl(std::int32_t id, const Vec3& q, double r2, std::vector<Neighbor>& out) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(q, packed_[i]);
        if (d2 <= r2) out.push_back({order_[i], d2});
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    radius_impl(near, q, r2, out);
    if (diff * diff <= r2) radius_impl(far, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<Vec3> packed_;  // points in leaf order
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 10;
};

/// A cloud together with an index over its positions.
struct IndexedCloud {
  PointCloud cloud;
  SpatialIndex index;

  IndexedCloud() = default;
  explicit IndexedCloud(PointCloud c) : cloud(std::move(c)), index(cloud.points) {}
};

}  // namespace rescan
