#pragma once

#include "rescan/core/random.hpp"
#include "rescan/io/ply.hpp"
#include "rescan/model/temporal_model.hpp"

#include <string>

namespace rescan {

enum class VizMode { Instance, Semantic };

inline VizMode viz_mode_from_string(const std::string& s) {
  if (s == "instance") return VizMode::Instance;
  if (s == "semantic") return VizMode::Semantic;
  throw Error("unknown viz mode '" + s + "' (expected instance or semantic)");
}

inline constexpr ply::Rgb kStaticGray{128, 128, 128};

/// Bright color derived from a hash of the label; the same label always gets
/// the same color.
inline ply::Rgb label_color(int label, std::uint64_t salt = 0) {
  const std::uint64_t h = mix_seed(static_cast<std::uint64_t>(label) + 0x9e37, salt);
  const double hue = static_cast<double>(h % 360);
  const double s = 0.65 + 0.35 * static_cast<double>((h >> 16) % 100) / 100.0;
  const double v = 0.75 + 0.25 * static_cast<double>((h >> 32) % 100) / 100.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(hue / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hue / 60.0)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround(255.0 * (u + m))); };
  ply::Rgb out{q(r), q(g), q(b)};
  if (out == kStaticGray) out[0] = 129;
  return out;
}

/// Per-point colors: static and unassigned points gray, everything else by
/// instance id or by semantic class.
inline std::vector<ply::Rgb> colorize(const PointCloud& cloud, VizMode mode) {
  if (!cloud.has_labels()) throw Error("export-viz: labels required");
  std::vector<ply::Rgb> colors(cloud.size(), kStaticGray);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.semantic[i] == kStaticClass || cloud.instance[i] == kUnassignedInstance) continue;
    colors[i] = mode == VizMode::Instance ? label_color(cloud.instance[i])
                                          : label_color(cloud.semantic[i], 1);
  }
  return colors;
}

/// Model completion view: every object of an arrangement posed into the
/// scene with its fused geometry, labeled by id and class.
inline PointCloud compose_arrangement(const TemporalModel& model, std::size_t timestep) {
  if (timestep >= model.history().size()) {
    throw Error("model has no arrangement " + std::to_string(timestep));
  }
  PointCloud out;
  for (const PosedObject& p : model.history()[timestep].placements) {
    const ObjectInstance& obj = model.resolve(p.id);
    PointCloud g = p.pose.transform(obj.geometry());
    g.semantic.assign(g.size(), obj.semantic_class());
    g.instance.assign(g.size(), p.id);
    out.append(g);
  }
  return out;
}

inline void export_viz(const PointCloud& labeled, const std::filesystem::path& out, VizMode mode) {
  ply::WriteOptions opt;
  opt.colors = colorize(labeled, mode);
  ply::write(out, labeled, opt);
}

}  // namespace rescan
