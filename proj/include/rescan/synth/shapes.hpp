#pragma once

// Parametric object prototypes and their surface samplers.
//
// Prototype frame: footprint centered on the origin, bottom at z = 0.
//   box       dims = [width_x, depth_y, height]
//   cylinder  dims = [radius, height]
//   l_shape   dims = [width_x, depth_y, seat_height, back_height, back_thickness]
//             a seat block plus a backrest slab along +y (chair-like)

#include "rescan/core/point_cloud.hpp"
#include "rescan/core/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace rescan::synth {

enum class ShapeKind { Box, Cylinder, LShape };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::LShape: return "l_shape";
  }
  return "box";
}

inline ShapeKind shape_from_string(const std::string& s) {
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  if (s == "l_shape") return ShapeKind::LShape;
  throw Error("unknown shape '" + s + "'");
}

struct Prototype {
  std::string name;
  ShapeKind shape = ShapeKind::Box;
  int semantic_class = 1;
  std::vector<double> dims;

  void validate() const {
    const std::size_t need = shape == ShapeKind::Box ? 3 : shape == ShapeKind::Cylinder ? 2 : 5;
    if (dims.size() != need) throw Error("prototype '" + name + "': wrong number of dims");
    for (double d : dims) {
      if (!(d > 0.0)) throw Error("prototype '" + name + "': dims must be positive");
    }
    if (shape == ShapeKind::LShape && (dims[3] <= dims[2] || dims[4] >= dims[1])) {
      throw Error("prototype '" + name + "': backrest must rise above the seat");
    }
    if (semantic_class <= kStaticClass) throw Error("prototype classes must be positive");
  }

  /// Radius of the footprint around the origin.
  [[nodiscard]] double footprint_radius() const {
    if (shape == ShapeKind::Cylinder) return dims[0];
    return 0.5 * std::hypot(dims[0], dims[1]);
  }

  [[nodiscard]] double height() const {
    switch (shape) {
      case ShapeKind::Box: return dims[2];
      case ShapeKind::Cylinder: return dims[1];
      case ShapeKind::LShape: return dims[3];
    }
    return 0.0;
  }

  /// Center of the bounding box in the prototype frame.
  [[nodiscard]] Vec3 center() const { return {0.0, 0.0, 0.5 * height()}; }

  /// Order of the rotational symmetry about z (0 = continuous).
  [[nodiscard]] int yaw_symmetry() const {
    switch (shape) {
      case ShapeKind::Cylinder: return 0;
      case ShapeKind::Box: return std::abs(dims[0] - dims[1]) < 1e-9 ? 4 : 2;
      case ShapeKind::LShape: return 1;
    }
    return 1;
  }
};

/// Axis-aligned rectangle face with a fixed outward normal.
struct RectFace {
  Vec3 origin;
  Vec3 u;  // edge vectors
  Vec3 v;
  Vec3 normal;
  [[nodiscard]] double area() const { return u.cross(v).norm(); }
};

struct Box3 {
  Vec3 lo;
  Vec3 hi;
  [[nodiscard]] bool contains_strict(const Vec3& p, double eps = 1e-12) const {
    return (p.array() > lo.array() + eps).all() && (p.array() < hi.array() - eps).all();
  }
  [[nodiscard]] bool contains_closed(const Vec3& p, double eps = 1e-12) const {
    return (p.array() >= lo.array() - eps).all() && (p.array() <= hi.array() + eps).all();
  }
  [[nodiscard]] std::vector<RectFace> faces() const {
    const Vec3 d = hi - lo;
    const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
    return {
        {lo, ey, ez, -Vec3::UnitX()},
        {lo + ex, ey, ez, Vec3::UnitX()},
        {lo, ex, ez, -Vec3::UnitY()},
        {lo + ey, ex, ez, Vec3::UnitY()},
        {lo, ex, ey, -Vec3::UnitZ()},
        {lo + ez, ex, ey, Vec3::UnitZ()},
    };
  }
};

inline std::vector<Box3> blocks_of(const Prototype& p) {
  const double w = p.dims[0];
  const double d = p.dims[1];
  if (p.shape == ShapeKind::Box) {
    return {{Vec3(-w / 2, -d / 2, 0), Vec3(w / 2, d / 2, p.dims[2])}};
  }
  // l_shape: seat then backrest
  const double t = p.dims[4];
  return {{Vec3(-w / 2, -d / 2, 0), Vec3(w / 2, d / 2, p.dims[2])},
          {Vec3(-w / 2, d / 2 - t, 0), Vec3(w / 2, d / 2, p.dims[3])}};
}

namespace detail {

inline std::size_t sample_count(double area, double density, Rng& rng) {
  const double expected = area * density;
  auto n = static_cast<std::size_t>(std::floor(expected));
  if (rng.uniform() < expected - static_cast<double>(n)) ++n;
  return n;
}

}  // namespace detail

/// Uniform random samples (with analytic outward normals) over the outer
/// surface of a prototype, at `density` points per square meter.
inline PointCloud sample_prototype(const Prototype& proto, double density, Rng& rng) {
  PointCloud out;
  if (proto.shape == ShapeKind::Cylinder) {
    const double r = proto.dims[0];
    const double h = proto.dims[1];
    const std::size_t n_side = detail::sample_count(2 * std::numbers::pi * r * h, density, rng);
    for (std::size_t i = 0; i < n_side; ++i) {
      const double a = rng.uniform(0.0, 2 * std::numbers::pi);
      const double z = rng.uniform(0.0, h);
      out.points.emplace_back(r * std::cos(a), r * std::sin(a), z);
      out.normals.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
    for (int cap = 0; cap < 2; ++cap) {
      const std::size_t n_cap = detail::sample_count(std::numbers::pi * r * r, density, rng);
      for (std::size_t i = 0; i < n_cap; ++i) {
        const double rr = r * std::sqrt(rng.uniform());
        const double a = rng.uniform(0.0, 2 * std::numbers::pi);
        out.points.emplace_back(rr * std::cos(a), rr * std::sin(a), cap == 0 ? 0.0 : h);
        out.normals.emplace_back(0.0, 0.0, cap == 0 ? -1.0 : 1.0);
      }
    }
    return out;
  }

  const std::vector<Box3> blocks = blocks_of(proto);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (const RectFace& f : blocks[b].faces()) {
      const std::size_t n = detail::sample_count(f.area(), density, rng);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = f.origin + rng.uniform() * f.u + rng.uniform() * f.v;
        bool hidden = false;
        for (std::size_t o = 0; o < blocks.size(); ++o) {
          if (o == b) continue;
          // Later blocks yield shared boundary surface to earlier ones.
          hidden = b > o ? blocks[o].contains_closed(p) : blocks[o].contains_strict(p);
          if (hidden) break;
        }
        if (hidden) continue;
        out.points.push_back(p);
        out.normals.push_back(f.normal);
      }
    }
  }
  return out;
}

/// Total outer surface area of a prototype (for sizing tests).
inline double surface_area(const Prototype& proto) {
  if (proto.shape == ShapeKind::Cylinder) {
    const double r = proto.dims[0];
    return 2 * std::numbers::pi * r * proto.dims[1] + 2 * std::numbers::pi * r * r;
  }
  const double w = proto.dims[0], d = proto.dims[1];
  if (proto.shape == ShapeKind::Box) {
    const double h = proto.dims[2];
    return 2 * (w * d + w * h + d * h);
  }
  const double sh = proto.dims[2], bh = proto.dims[3], t = proto.dims[4];
  // seat box + backrest minus hidden overlaps
  return 2 * (w * d + w * sh + d * sh) + 2 * (w * t + w * bh + t * bh) - 2 * (w * t + w * sh + t * sh);
}

/// Distance from a point (prototype frame) to the prototype's surface.
inline double surface_distance(const Prototype& proto, const Vec3& p) {
  if (proto.shape == ShapeKind::Cylinder) {
    const double r = proto.dims[0], h = proto.dims[1];
    const double radial = std::hypot(p.x(), p.y());
    // distance to side
    const double dz_side = p.z() < 0 ? -p.z() : (p.z() > h ? p.z() - h : 0.0);
    const double d_side = std::hypot(radial - r, dz_side);
    // distance to caps
    const double dr_cap = std::max(0.0, radial - r);
    const double d_bottom = std::hypot(dr_cap, p.z());
    const double d_top = std::hypot(dr_cap, p.z() - h);
    return std::min({d_side, d_bottom, d_top});
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Box3& b : blocks_of(proto)) {
    for (const RectFace& f : b.faces()) {
      const Vec3 rel = p - f.origin;
      const double a = std::clamp(rel.dot(f.u) / f.u.squaredNorm(), 0.0, 1.0);
      const double c = std::clamp(rel.dot(f.v) / f.v.squaredNorm(), 0.0, 1.0);
      best = std::min(best, (rel - a * f.u - c * f.v).norm());
    }
  }
  return best;
}

}  // namespace rescan::synth
