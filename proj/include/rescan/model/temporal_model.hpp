#pragma once

#include "rescan/core/ground_pose.hpp"
#include "rescan/core/point_cloud.hpp"
#include "rescan/core/sampling.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rescan {

struct ObjectStats {
  Vec3 centroid = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
};

inline ObjectStats compute_stats(const PointCloud& g) {
  ObjectStats s;
  if (g.empty()) return s;
  for (const Vec3& p : g.points) s.centroid += p;
  s.centroid /= static_cast<double>(g.size());
  for (const Vec3& p : g.points) {
    const Vec3 d = p - s.centroid;
    s.covariance.noalias() += d * d.transpose();
  }
  s.covariance /= static_cast<double>(g.size());
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

/// One physical object: id, geometry in its own frame, semantic class, and
/// statistics that always track the geometry.
class ObjectInstance {
 public:
  ObjectInstance(int id, int semantic_class, PointCloud geometry)
      : id_(id), class_(semantic_class) {
    set_geometry(std::move(geometry));
  }

  [[nodiscard]] int id() const noexcept { return id_; }
  [[nodiscard]] int semantic_class() const noexcept { return class_; }
  [[nodiscard]] const PointCloud& geometry() const noexcept { return geometry_; }
  [[nodiscard]] const ObjectStats& stats() const noexcept { return stats_; }
  [[nodiscard]] const SamplingHierarchy& hierarchy() const noexcept { return hierarchy_; }

  void set_geometry(PointCloud geometry) {
    if (geometry.empty()) throw Error("object geometry must not be empty");
    geometry.clear_labels();
    geometry_ = std::move(geometry);
    stats_ = compute_stats(geometry_);
    hierarchy_ = build_hierarchy(geometry_);
  }

 private:
  int id_;
  int class_;
  PointCloud geometry_;
  ObjectStats stats_;
  SamplingHierarchy hierarchy_;
};

/// A placement of one object at one timestep.
struct PosedObject {
  int id = 0;
  GroundPose pose;
  double score = 0.0;
};

struct Arrangement {
  std::size_t timestep = 0;
  std::vector<PosedObject> placements;

  [[nodiscard]] const PosedObject* find(int id) const {
    for (const PosedObject& p : placements) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }

  void validate() const {
    std::vector<int> ids;
    for (const PosedObject& p : placements) {
      if (!(p.score >= 0.0 && p.score <= 1.0)) throw Error("arrangement: score outside [0, 1]");
      ids.push_back(p.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw Error("arrangement: duplicate instance id");
    }
  }
};

/// The object set plus one arrangement per processed timestep.
class TemporalModel {
 public:
  [[nodiscard]] const std::vector<ObjectInstance>& objects() const noexcept { return objects_; }
  [[nodiscard]] const std::vector<Arrangement>& history() const noexcept { return history_; }
  [[nodiscard]] int next_id() const noexcept { return next_id_; }

  [[nodiscard]] const ObjectInstance& resolve(int id) const {
    auto it = std::lower_bound(objects_.begin(), objects_.end(), id,
                               [](const ObjectInstance& o, int v) { return o.id() < v; });
    if (it == objects_.end() || it->id() != id) {
      throw Error("unknown instance " + std::to_string(id));
    }
    return *it;
  }

  [[nodiscard]] bool contains(int id) const {
    auto it = std::lower_bound(objects_.begin(), objects_.end(), id,
                               [](const ObjectInstance& o, int v) { return o.id() < v; });
    return it != objects_.end() && it->id() == id;
  }

  /// Adds an object with a freshly allocated id.
  int add_object(int semantic_class, PointCloud geometry) {
    const int id = next_id_++;
    objects_.emplace_back(id, semantic_class, std::move(geometry));
    return id;
  }

  /// Adds an object under a caller-chosen id (bootstrap, deserialization).
  void insert_object(ObjectInstance obj) {
    if (obj.id() <= 0) throw Error("instance ids must be positive");
    if (contains(obj.id())) throw Error("duplicate instance " + std::to_string(obj.id()));
    const int id = obj.id();
    auto it = std::lower_bound(objects_.begin(), objects_.end(), id,
                               [](const ObjectInstance& o, int v) { return o.id() < v; });
    objects_.insert(it, std::move(obj));
    next_id_ = std::max(next_id_, id + 1);
  }

  void set_next_id(int id) { next_id_ = std::max(next_id_, id); }

  void replace_geometry(int id, PointCloud geometry) {
    auto it = std::lower_bound(objects_.begin(), objects_.end(), id,
                               [](const ObjectInstance& o, int v) { return o.id() < v; });
    if (it == objects_.end() || it->id() != id) {
      throw Error("unknown instance " + std::to_string(id));
    }
    it->set_geometry(std::move(geometry));
  }

  void append_arrangement(Arrangement a) {
    if (a.timestep != history_.size()) {
      throw Error("timestep mismatch: expected " + std::to_string(history_.size()) + ", got " +
                  std::to_string(a.timestep));
    }
    a.validate();
    for (const PosedObject& p : a.placements) {
      if (!contains(p.id)) throw Error("unknown instance " + std::to_string(p.id));
    }
    history_.push_back(std::move(a));
  }

  /// The placement of `id` in the most recent arrangement that contains it.
  [[nodiscard]] std::optional<PosedObject> last_placement(int id) const {
    for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
      if (const PosedObject* p = it->find(id)) return *p;
    }
    return std::nullopt;
  }

 private:
  std::vector<ObjectInstance> objects_;  // sorted by id
  std::vector<Arrangement> history_;
  int next_id_ = 1;
};

/// Builds the model at t0 from a scan carrying ground-truth labels. Every
/// distinct non-static instance becomes an object whose geometry is its
/// points recentered on their centroid; arrangement 0 places each object back
/// at that centroid with score 1.
inline TemporalModel bootstrap(const PointCloud& scan) {
  if (!scan.has_labels()) throw Error("labels required");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const int u = scan.instance[i];
    if (u == kUnassignedInstance || scan.semantic[i] == kStaticClass) continue;
    members[u].push_back(i);
  }

  TemporalModel model;
  Arrangement first;
  first.timestep = 0;
  for (const auto& [u, ids] : members) {
    PointCloud g = scan.select(ids);
    std::map<int, std::size_t> votes;
    for (int c : g.semantic) ++votes[c];
    const int cls = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                      return a.second < b.second;
                    })->first;
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : g.points) centroid += p;
    centroid /= static_cast<double>(g.size());
    for (Vec3& p : g.points) p -= centroid;
    model.insert_object(ObjectInstance(u, cls, std::move(g)));
    first.placements.push_back({u, GroundPose(centroid.x(), centroid.y(), centroid.z(), 0.0), 1.0});
  }
  model.append_arrangement(std::move(first));
  return model;
}

/// Appends the arrangement for the next timestep and swaps in fused
/// geometry for the listed objects.
inline TemporalModel update_model(TemporalModel model, Arrangement arrangement,
                                  const std::vector<std::pair<int, PointCloud>>& fused) {
  if (arrangement.timestep != model.history().size()) {
    throw Error("timestep mismatch");
  }
  for (const auto& [id, g] : fused) {
    if (!model.contains(id)) throw Error("unknown instance " + std::to_string(id));
  }
  model.append_arrangement(std::move(arrangement));
  for (const auto& [id, g] : fused) model.replace_geometry(id, g);
  return model;
}

}  // namespace rescan
