#pragma once

#include "rescan/core/spatial_index.hpp"
#include "rescan/model/temporal_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace rescan {

/// Copies (class, instance) from the nearest posed object point within `d`
/// onto every non-static scan point. Static points get the static class;
/// points with no object point in range get (kUnlabeledClass, 0). Distance
/// ties within 1e-9 go to the lower instance id.
inline PointCloud transfer_labels(const PointCloud& scene, std::span<const std::uint8_t> static_mask,
                                  const Arrangement& arrangement, const TemporalModel& model,
                                  double d = 0.05) {
  if (static_mask.size() != scene.size()) throw Error("transfer: static mask size mismatch");
  if (!(d > 0.0)) throw Error("transfer: distance must be positive");
  PointCloud out = scene;
  out.semantic.assign(scene.size(), kUnlabeledClass);
  out.instance.assign(scene.size(), kUnassignedInstance);

  std::vector<Vec3> pts;
  std::vector<int> owner_inst, owner_class;
  for (const PosedObject& p : arrangement.placements) {
    const ObjectInstance& obj = model.resolve(p.id);
    for (const Vec3& q : obj.geometry().points) {
      pts.push_back(p.pose.apply(q));
      owner_inst.push_back(p.id);
      owner_class.push_back(obj.semantic_class());
    }
  }
  const SpatialIndex index(pts);

  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (static_mask[i]) {
      out.semantic[i] = kStaticClass;
      continue;
    }
    if (pts.empty()) continue;
    const auto nb = index.nearest(scene.points[i], d);
    if (!nb) continue;
    std::size_t pick = nb->index;
    const double reach = std::sqrt(nb->dist2) + 1e-9;
    for (const Neighbor& c : index.radius(scene.points[i], reach)) {
      if (owner_inst[c.index] < owner_inst[pick]) pick = c.index;
    }
    out.semantic[i] = owner_class[pick];
    out.instance[i] = owner_inst[pick];
  }
  return out;
}

struct SmoothingOptions {
  std::size_t k = 12;
  double lambda = 1.0;
  int sweeps = 5;
  /// Transfer distance d; edge weights use a Gaussian of width d / 2.
  double distance = 0.05;
};

struct SmoothingResult {
  PointCloud cloud;
  /// Energy before the first sweep followed by the energy after each sweep.
  std::vector<double> energy;
  std::size_t changed = 0;
  /// Fraction of non-static points left as background.
  double background_fraction = 0.0;
};

/// Sparse symmetric kNN graph over a subset of points.
struct LabelGraph {
  std::vector<std::size_t> nodes;  // scan point index per node
  std::vector<std::vector<std::pair<std::size_t, double>>> edges;
};

inline LabelGraph build_label_graph(const PointCloud& cloud, std::span<const std::size_t> nodes,
                                    std::size_t k, double sigma) {
  LabelGraph g;
  g.nodes.assign(nodes.begin(), nodes.end());
  g.edges.resize(nodes.size());
  if (nodes.size() < 2) return g;
  std::vector<Vec3> pts;
  pts.reserve(nodes.size());
  for (std::size_t i : nodes) pts.push_back(cloud.points[i]);
  const SpatialIndex index(pts);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<std::vector<std::size_t>> adj(nodes.size());
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (const Neighbor& nb : index.knn(pts[a], k + 1)) {
      if (nb.index == a) continue;
      adj[a].push_back(nb.index);
      adj[nb.index].push_back(a);
    }
  }
  for (std::size_t a = 0; a < pts.size(); ++a) {
    std::sort(adj[a].begin(), adj[a].end());
    adj[a].erase(std::unique(adj[a].begin(), adj[a].end()), adj[a].end());
    for (std::size_t b : adj[a]) {
      g.edges[a].emplace_back(b, std::exp(-(pts[a] - pts[b]).squaredNorm() * inv));
    }
  }
  return g;
}

namespace detail {

using LabelPair = std::pair<int, int>;  // (instance, class)

inline double unary(bool assigned, const LabelPair& original, const LabelPair& label) {
  if (!assigned) return 0.5;
  return label == original ? 0.0 : 1.0;
}

}  // namespace detail

/// Iterated conditional modes on E = sum U_p(l_p) + lambda sum w_pq [l_p != l_q]
/// over the non-static points, visited in index order. Labels are
/// (class, instance) pairs; unassigned points start as background and keep
/// it unless a neighbor's label is cheaper.
inline SmoothingResult smooth_labels(const PointCloud& labeled,
                                     std::span<const std::uint8_t> static_mask,
                                     const SmoothingOptions& opt = {}) {
  using detail::LabelPair;
  if (!labeled.has_labels() && !labeled.empty()) throw Error("smooth_labels: labels required");
  if (static_mask.size() != labeled.size()) throw Error("smooth: static mask size mismatch");
  if (opt.k == 0 || opt.sweeps < 0 || opt.lambda < 0.0 || !(opt.distance > 0.0)) {
    throw Error("smooth_labels: invalid options");
  }
  SmoothingResult res;
  res.cloud = labeled;
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!static_mask[i]) nodes.push_back(i);
  }
  const LabelGraph g = build_label_graph(labeled, nodes, opt.k, 0.5 * opt.distance);

  const std::size_t n = nodes.size();
  std::vector<LabelPair> original(n), label(n);
  std::vector<std::uint8_t> assigned(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = nodes[a];
    assigned[a] = labeled.instance[i] != kUnassignedInstance ? 1 : 0;
    original[a] = assigned[a] ? LabelPair{labeled.instance[i], labeled.semantic[i]}
                              : LabelPair{kUnassignedInstance, kUnlabeledClass};
    label[a] = original[a];
  }

  auto energy = [&]() {
    double e = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      e += detail::unary(assigned[a], original[a], label[a]);
      for (const auto& [b, w] : g.edges[a]) {
        if (b > a && label[a] != label[b]) e += opt.lambda * w;
      }
    }
    return e;
  };

  res.energy.push_back(energy());
  std::vector<LabelPair> candidates;
  for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
    std::size_t changed = 0;
    for (std::size_t a = 0; a < n; ++a) {
      candidates.clear();
      candidates.push_back(label[a]);
      if (assigned[a]) candidates.push_back(original[a]);
      for (const auto& [b, w] : g.edges[a]) candidates.push_back(label[b]);
      std::sort(candidates.begin(), candidates.end());
      candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

      auto local = [&](const LabelPair& l) {
        double e = detail::unary(assigned[a], original[a], l);
        for (const auto& [b, w] : g.edges[a]) {
          if (label[b] != l) e += opt.lambda * w;
        }
        return e;
      };
      LabelPair best = label[a];
      double best_e = local(best);
      for (const LabelPair& l : candidates) {
        const double e = local(l);
        if (e < best_e) {
          best_e = e;
          best = l;
        }
      }
      if (best != label[a]) {
        label[a] = best;
        ++changed;
      }
    }
    res.changed += changed;
    res.energy.push_back(energy());
    if (changed == 0) break;
  }

  std::size_t background = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = nodes[a];
    res.cloud.instance[i] = label[a].first;
    res.cloud.semantic[i] = label[a].second;
    if (label[a].first == kUnassignedInstance) ++background;
  }
  res.background_fraction = n == 0 ? 0.0 : static_cast<double>(background) / static_cast<double>(n);
  return res;
}

}  // namespace rescan
