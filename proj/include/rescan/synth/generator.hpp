#pragma once

#include "rescan/core/random.hpp"
#include "rescan/eval/metrics.hpp"
#include "rescan/io/ply.hpp"
#include "rescan/synth/scene_script.hpp"
#include "rescan/synth/shapes.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace rescan::synth {

/// Ground-plane outline of a posed prototype: a disk or an oriented rectangle.
struct Footprint {
  bool circle = false;
  Vec3 center = Vec3::Zero();
  double radius = 0.0;      // circle
  double half_w = 0.0;      // rectangle, along the rotated x axis
  double half_d = 0.0;
  double yaw = 0.0;

  [[nodiscard]] bool contains(double x, double y, double margin = 0.0) const {
    const double dx = x - center.x(), dy = y - center.y();
    if (circle) return std::hypot(dx, dy) <= radius + margin;
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= half_w + margin && std::abs(ly) <= half_d + margin;
  }

  [[nodiscard]] std::vector<Vec3> corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    std::vector<Vec3> out;
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        const double lx = sx * half_w, ly = sx * sy * half_d;
        out.emplace_back(center.x() + c * lx - s * ly, center.y() + s * lx + c * ly, 0.0);
      }
    }
    return out;
  }

  /// Axis-aligned extent in the ground plane.
  [[nodiscard]] Aabb bounds() const {
    Aabb b;
    if (circle) {
      b.extend(center - Vec3(radius, radius, 0));
      b.extend(center + Vec3(radius, radius, 0));
    } else {
      for (const Vec3& p : corners()) b.extend(p);
    }
    return b;
  }
};

inline Footprint footprint_of(const Prototype& p, const GroundPose& pose) {
  Footprint f;
  f.center = Vec3(pose.tx, pose.ty, 0.0);
  f.yaw = pose.yaw;
  if (p.shape == ShapeKind::Cylinder) {
    f.circle = true;
    f.radius = p.dims[0];
  } else {
    f.half_w = 0.5 * p.dims[0];
    f.half_d = 0.5 * p.dims[1];
  }
  return f;
}

namespace detail {

/// Separating-axis test on rectangles, exact circle tests otherwise; both
/// shapes are grown by `margin / 2`.
inline bool footprints_overlap(const Footprint& a, const Footprint& b, double margin) {
  if (a.circle && b.circle) {
    return (a.center - b.center).norm() < a.radius + b.radius + margin;
  }
  if (a.circle != b.circle) {
    const Footprint& c = a.circle ? a : b;
    const Footprint& r = a.circle ? b : a;
    const double dx = c.center.x() - r.center.x(), dy = c.center.y() - r.center.y();
    const double cs = std::cos(r.yaw), sn = std::sin(r.yaw);
    const double lx = cs * dx + sn * dy, ly = -sn * dx + cs * dy;
    const double qx = std::clamp(lx, -r.half_w, r.half_w);
    const double qy = std::clamp(ly, -r.half_d, r.half_d);
    return std::hypot(lx - qx, ly - qy) < c.radius + margin;
  }
  const auto ca = a.corners(), cb = b.corners();
  for (const Footprint* f : {&a, &b}) {
    for (int k = 0; k < 2; ++k) {
      const double ang = f->yaw + k * std::numbers::pi / 2;
      const Vec3 axis(std::cos(ang), std::sin(ang), 0.0);
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const Vec3& p : ca) {
        amin = std::min(amin, p.dot(axis));
        amax = std::max(amax, p.dot(axis));
      }
      for (const Vec3& p : cb) {
        bmin = std::min(bmin, p.dot(axis));
        bmax = std::max(bmax, p.dot(axis));
      }
      if (amax + margin <= bmin || bmax + margin <= amin) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Which objects are present, and where, at every timestep.
using Layout = std::map<int, GroundPose>;

struct GroundTruth {
  std::vector<Layout> poses;  // per timestep
  std::map<int, int> classes;
  std::map<int, std::string> prototypes;
  /// Identity first, then every relabeling within groups of identical
  /// prototypes.
  std::vector<InstancePermutation> permutations;
};

struct Sequence {
  std::vector<PointCloud> scans;  // labeled, one per timestep
  GroundTruth gt;
};

/// Checks that a layout keeps objects inside the room and apart.
inline void check_layout(const SceneScript& s, const Layout& layout, std::size_t t,
                         double wall_margin = 0.02, double gap = 0.0) {
  const std::string at = "timestep " + std::to_string(t) + ": ";
  std::vector<std::pair<int, Footprint>> fps;
  for (const auto& [id, pose] : layout) {
    const Footprint f = footprint_of(s.prototype(s.object(id).prototype), pose);
    const Aabb b = f.bounds();
    if (b.min.x() < wall_margin || b.min.y() < wall_margin ||
        b.max.x() > s.room.width - wall_margin || b.max.y() > s.room.depth - wall_margin) {
      throw Error(at + "object " + std::to_string(id) + " leaves the room");
    }
    for (const auto& [other, g] : fps) {
      if (detail::footprints_overlap(f, g, gap)) {
        throw Error(at + "objects " + std::to_string(other) + " and " + std::to_string(id) +
                    " intersect");
      }
    }
    fps.emplace_back(id, f);
  }
}

/// Object layouts of every timestep; validates the script.
inline std::vector<Layout> script_layouts(const SceneScript& s) {
  if (!(s.room.width > 0.0 && s.room.depth > 0.0 && s.room.wall_height > 0.0)) {
    throw Error("scene script: room dimensions must be positive");
  }
  if (!(s.density > 0.0) || s.noise < 0.0) throw Error("scene script: bad density or noise");
  std::map<int, int> seen;
  for (const ObjectSpec& o : s.objects) {
    if (o.id <= 0) throw Error("scene script: object ids must be positive");
    if (seen[o.id]++) throw Error("scene script: duplicate object id " + std::to_string(o.id));
    (void)s.prototype(o.prototype);
  }
  std::vector<Layout> layouts;
  Layout cur;
  for (const ObjectSpec& o : s.objects) cur[o.id] = o.pose;
  check_layout(s, cur, 0);
  layouts.push_back(cur);
  for (std::size_t t = 1; t <= s.steps.size(); ++t) {
    const std::string at = "timestep " + std::to_string(t) + ": ";
    for (const Event& e : s.steps[t - 1].events) {
      if (!seen.contains(e.object)) {
        throw Error(at + "event references unknown object " + std::to_string(e.object));
      }
      const bool present = cur.contains(e.object);
      switch (e.kind) {
        case EventKind::Move:
          if (!present) throw Error(at + "cannot move absent object " + std::to_string(e.object));
          cur[e.object] = e.pose;
          break;
        case EventKind::Remove:
          if (!present) throw Error(at + "cannot remove absent object " + std::to_string(e.object));
          cur.erase(e.object);
          break;
        case EventKind::Add:
          if (present) throw Error(at + "object " + std::to_string(e.object) + " already present");
          cur[e.object] = e.pose;
          break;
      }
    }
    check_layout(s, cur, t);
    layouts.push_back(cur);
  }
  return layouts;
}

inline std::vector<InstancePermutation> identical_prototype_permutations(const SceneScript& s) {
  std::map<std::string, std::vector<int>> groups;
  for (const ObjectSpec& o : s.objects) groups[o.prototype].push_back(o.id);
  std::vector<InstancePermutation> perms{InstancePermutation{}};
  for (auto& [name, ids] : groups) {
    if (ids.size() < 2) continue;
    std::sort(ids.begin(), ids.end());
    std::vector<int> image = ids;
    std::vector<InstancePermutation> next;
    do {
      for (const InstancePermutation& base : perms) {
        InstancePermutation p = base;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (ids[i] != image[i]) p[ids[i]] = image[i];
        }
        next.push_back(std::move(p));
      }
    } while (std::next_permutation(image.begin(), image.end()));
    perms = std::move(next);
  }
  return perms;
}

namespace detail {

inline bool visible(const Vec3& p, const Vec3& n, const std::vector<Vec3>& viewpoints) {
  for (const Vec3& v : viewpoints) {
    if (n.dot(v - p) > 0.0) return true;
  }
  return false;
}

inline void sample_rect(PointCloud& out, const Vec3& origin, const Vec3& u, const Vec3& v,
                        const Vec3& normal, double density, Rng& rng) {
  const std::size_t n = sample_count(u.cross(v).norm(), density, rng);
  for (std::size_t i = 0; i < n; ++i) {
    out.points.push_back(origin + rng.uniform() * u + rng.uniform() * v);
    out.normals.push_back(normal);
  }
}

}  // namespace detail

/// Noise-free room shell: floor plus four walls with inward normals.
inline PointCloud sample_room(const Room& r, double density, Rng& rng) {
  PointCloud c;
  const double w = r.width, d = r.depth, h = r.wall_height;
  detail::sample_rect(c, Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, d, 0), Vec3::UnitZ(), density, rng);
  detail::sample_rect(c, Vec3(0, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h), Vec3::UnitX(), density, rng);
  detail::sample_rect(c, Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h), -Vec3::UnitX(), density, rng);
  detail::sample_rect(c, Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, 0, h), Vec3::UnitY(), density, rng);
  detail::sample_rect(c, Vec3(0, d, 0), Vec3(w, 0, 0), Vec3(0, 0, h), -Vec3::UnitY(), density, rng);
  return c;
}

/// Renders one timestep: room shell without the floor under objects, then
/// every present object in id order (resting faces dropped), culled to
/// surfaces facing some viewpoint, then perturbed by Gaussian noise.
inline PointCloud render_scan(const SceneScript& s, const Layout& layout, std::size_t t) {
  Rng rng(mix_seed(s.seed, t));
  const std::vector<Vec3> views = s.viewpoints_at(t);
  std::vector<Footprint> fps;
  for (const auto& [id, pose] : layout) {
    fps.push_back(footprint_of(s.prototype(s.object(id).prototype), pose));
  }

  PointCloud scan;
  const PointCloud shell = sample_room(s.room, s.density, rng);
  for (std::size_t i = 0; i < shell.size(); ++i) {
    const Vec3& p = shell.points[i];
    if (!detail::visible(p, shell.normals[i], views)) continue;
    if (shell.normals[i].z() > 0.5) {
      bool covered = false;
      for (const Footprint& f : fps) covered = covered || f.contains(p.x(), p.y());
      if (covered) continue;
    }
    scan.points.push_back(p);
    scan.normals.push_back(shell.normals[i]);
    scan.semantic.push_back(kStaticClass);
    scan.instance.push_back(kUnassignedInstance);
  }
  for (const auto& [id, pose] : layout) {
    const Prototype& proto = s.prototype(s.object(id).prototype);
    Rng orng(mix_seed(mix_seed(s.seed, t), static_cast<std::uint64_t>(id)));
    const PointCloud local = sample_prototype(proto, s.density, orng);
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (local.normals[i].z() < -0.5) continue;  // resting on the floor
      const Vec3 p = pose.apply(local.points[i]);
      const Vec3 n = pose.rotate(local.normals[i]);
      if (!detail::visible(p, n, views)) continue;
      scan.points.push_back(p);
      scan.normals.push_back(n);
      scan.semantic.push_back(proto.semantic_class);
      scan.instance.push_back(id);
    }
  }
  if (s.noise > 0.0) {
    for (Vec3& p : scan.points) p += s.noise * Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  return scan;
}

inline Sequence generate_sequence(const SceneScript& s) {
  Sequence seq;
  const std::vector<Layout> layouts = script_layouts(s);
  for (std::size_t t = 0; t < layouts.size(); ++t) seq.scans.push_back(render_scan(s, layouts[t], t));
  seq.gt.poses = layouts;
  for (const ObjectSpec& o : s.objects) {
    seq.gt.classes[o.id] = s.prototype(o.prototype).semantic_class;
    seq.gt.prototypes[o.id] = o.prototype;
  }
  seq.gt.permutations = identical_prototype_permutations(s);
  return seq;
}

/// Prototype catalog of the default benchmark.
inline std::vector<Prototype> benchmark_prototypes() {
  return {
      {"chair", ShapeKind::LShape, 1, {0.45, 0.5, 0.45, 0.9, 0.06}},
      {"table", ShapeKind::Box, 2, {0.9, 0.6, 0.55}},
      {"cabinet", ShapeKind::Box, 3, {0.5, 0.4, 0.8}},
      {"bin", ShapeKind::Cylinder, 4, {0.15, 0.4}},
      {"stool", ShapeKind::Cylinder, 5, {0.2, 0.45}},
      {"crate", ShapeKind::Box, 6, {0.4, 0.4, 0.4}},
  };
}

struct BenchmarkOptions {
  std::size_t scenes = 10;
  std::size_t timesteps = 4;
  std::uint64_t seed = 2024;
  double density = 2000.0;
  double noise = 0.005;
  std::size_t min_objects = 5;
  std::size_t max_objects = 8;
  double max_move = 2.0;
};

namespace detail {

inline std::optional<GroundPose> random_pose(const SceneScript& s, const Layout& layout, int id,
                                             Rng& rng, const GroundPose* near = nullptr,
                                             double max_move = 2.0, double min_move = 0.0) {
  const Prototype& proto = s.prototype(s.object(id).prototype);
  for (int attempt = 0; attempt < 500; ++attempt) {
    GroundPose p;
    if (near) {
      const double r = rng.uniform(min_move, max_move);
      const double a = rng.uniform(0.0, 2 * std::numbers::pi);
      p = GroundPose(near->tx + r * std::cos(a), near->ty + r * std::sin(a), 0.0,
                     near->yaw + rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2));
    } else {
      p = GroundPose(rng.uniform(0.0, s.room.width), rng.uniform(0.0, s.room.depth), 0.0,
                     rng.uniform(-std::numbers::pi, std::numbers::pi));
    }
    const Footprint f = footprint_of(proto, p);
    const Aabb b = f.bounds();
    if (b.min.x() < 0.15 || b.min.y() < 0.15 || b.max.x() > s.room.width - 0.15 ||
        b.max.y() > s.room.depth - 0.15) {
      continue;
    }
    bool clash = false;
    for (const auto& [other, q] : layout) {
      if (other == id) continue;
      clash = footprints_overlap(f, footprint_of(s.prototype(s.object(other).prototype), q), 0.15);
      if (clash) break;
    }
    if (!clash) return p;
  }
  return std::nullopt;
}

}  // namespace detail

/// Scripted benchmark scenes: several identical chairs plus a random mix of
/// other furniture; each later step moves one or two objects by at most
/// `max_move` and may remove one object and bring back one removed earlier.
inline std::vector<SceneScript> benchmark_suite(const BenchmarkOptions& opt = {}) {
  std::vector<SceneScript> out;
  const std::vector<Prototype> catalog = benchmark_prototypes();
  for (std::size_t k = 0; k < opt.scenes; ++k) {
    Rng rng(mix_seed(opt.seed, k));
    for (int restart = 0;; ++restart) {
      SceneScript s;
      char name[32];
      std::snprintf(name, sizeof name, "scene_%02zu", k);
      s.name = name;
      s.seed = mix_seed(opt.seed + 1, k);
      s.room = {rng.uniform(3.2, 4.0), rng.uniform(3.2, 4.0), 1.0};
      s.density = opt.density;
      s.noise = opt.noise;
      s.prototypes = catalog;
      const std::size_t n = opt.min_objects + rng.index(opt.max_objects - opt.min_objects + 1);
      const std::size_t chairs = 2 + rng.index(2);
      std::vector<std::string> names(chairs, "chair");
      // Another identical pair in half of the scenes.
      if (rng.uniform() < 0.5) {
        const char* pair = rng.uniform() < 0.5 ? "stool" : "crate";
        names.insert(names.end(), {pair, pair});
      }
      while (names.size() < n) names.push_back(catalog[1 + rng.index(catalog.size() - 1)].name);
      names.resize(n);

      Layout layout;
      bool ok = true;
      for (std::size_t i = 0; i < names.size() && ok; ++i) {
        const int id = static_cast<int>(i) + 1;
        s.objects.push_back({id, names[i], GroundPose()});
        const auto p = detail::random_pose(s, layout, id, rng);
        if (!p) {
          ok = false;
          break;
        }
        s.objects.back().pose = *p;
        layout[id] = *p;
      }
      std::vector<int> removed;
      for (std::size_t t = 1; t < opt.timesteps && ok; ++t) {
        Step step;
        // Bring one removed object back, then possibly remove another.
        if (!removed.empty() && rng.uniform() < 0.5) {
          const int id = removed.front();
          if (const auto p = detail::random_pose(s, layout, id, rng)) {
            step.events.push_back({EventKind::Add, id, *p});
            layout[id] = *p;
            removed.erase(removed.begin());
          }
        }
        std::vector<int> present;
        for (const auto& [id, pose] : layout) present.push_back(id);
        const std::size_t moves = 1 + rng.index(2);
        std::vector<int> moved;
        for (std::size_t m = 0; m < moves; ++m) {
          const int id = present[rng.index(present.size())];
          if (std::find(moved.begin(), moved.end(), id) != moved.end()) continue;
          if (std::any_of(step.events.begin(), step.events.end(),
                          [&](const Event& e) { return e.object == id; })) {
            continue;
          }
          const GroundPose from = layout[id];
          if (const auto p = detail::random_pose(s, layout, id, rng, &from, opt.max_move, 0.3)) {
            step.events.push_back({EventKind::Move, id, *p});
            layout[id] = *p;
            moved.push_back(id);
          }
        }
        if (layout.size() > 4 && removed.empty() && rng.uniform() < 0.3) {
          std::vector<int> candidates;
          for (const auto& [id, pose] : layout) {
            if (std::find(moved.begin(), moved.end(), id) == moved.end()) candidates.push_back(id);
          }
          if (!candidates.empty()) {
            const int id = candidates[rng.index(candidates.size())];
            step.events.push_back({EventKind::Remove, id, GroundPose()});
            layout.erase(id);
            removed.push_back(id);
          }
        }
        s.steps.push_back(std::move(step));
      }
      if (ok) {
        (void)script_layouts(s);
        out.push_back(std::move(s));
        break;
      }
      if (restart > 50) throw Error("benchmark: could not lay out scene " + s.name);
    }
  }
  return out;
}

/// Writes a generated sequence as a scene directory:
///   scan_000.ply         labeled t0 scan (bootstrap input)
///   scan_001.ply ...     unlabeled later scans
///   gt/scan_XXX.ply      labeled scans of every timestep
///   gt/ground_truth.json objects, poses per timestep, permutations
///   script.json          the generating script
inline void write_scene_dir(const SceneScript& s, const Sequence& seq,
                            const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "gt");
  save_script(s, dir / "script.json");
  for (std::size_t t = 0; t < seq.scans.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "scan_%03zu.ply", t);
    ply::write(dir / "gt" / name, seq.scans[t]);
    ply::WriteOptions opt;
    opt.with_labels = t == 0;
    ply::write(dir / name, seq.scans[t], opt);
  }
  nlohmann::ordered_json j;
  auto objs = nlohmann::ordered_json::array();
  for (const auto& [id, cls] : seq.gt.classes) {
    objs.push_back({{"id", id}, {"class", cls}, {"prototype", seq.gt.prototypes.at(id)}});
  }
  j["objects"] = objs;
  auto poses = nlohmann::ordered_json::array();
  for (const Layout& l : seq.gt.poses) {
    auto step = nlohmann::ordered_json::array();
    for (const auto& [id, p] : l) {
      step.push_back({{"id", id}, {"tx", p.tx}, {"ty", p.ty}, {"tz", p.tz}, {"yaw", p.yaw}});
    }
    poses.push_back(step);
  }
  j["poses"] = poses;
  auto perms = nlohmann::ordered_json::array();
  for (const InstancePermutation& p : seq.gt.permutations) {
    auto m = nlohmann::ordered_json::array();
    for (const auto& [from, to] : p) m.push_back({from, to});
    perms.push_back(m);
  }
  j["permutations"] = perms;
  std::ofstream out(dir / "gt" / "ground_truth.json");
  if (!out) throw IoError("cannot write ground truth in " + dir.string());
  out << j.dump(2) << '\n';
}

struct GroundTruthFile {
  std::map<int, int> classes;
  std::vector<Layout> poses;
  std::vector<InstancePermutation> permutations;
};

inline GroundTruthFile load_ground_truth(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  GroundTruthFile g;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& o : j.at("objects")) g.classes[o.at("id").get<int>()] = o.at("class").get<int>();
    for (const auto& step : j.at("poses")) {
      Layout l;
      for (const auto& p : step) {
        l[p.at("id").get<int>()] = GroundPose(p.at("tx").get<double>(), p.at("ty").get<double>(),
                                              p.at("tz").get<double>(), p.at("yaw").get<double>());
      }
      g.poses.push_back(std::move(l));
    }
    for (const auto& perm : j.at("permutations")) {
      InstancePermutation p;
      for (const auto& e : perm) p[e.at(0).get<int>()] = e.at(1).get<int>();
      g.permutations.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("parse error: " + file.string() + ": " + e.what());
  }
  return g;
}

}  // namespace rescan::synth
