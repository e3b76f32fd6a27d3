#pragma once

// Model directory layout (format version 1):
//
//   <dir>/model.json            manifest
//   <dir>/objects/object_<id>.ply  geometry in the object frame
//                                  (binary little-endian, float64 x/y/z/nx/ny/nz)
//
// Manifest fields:
//   format     "rescan-model"
//   version    1
//   next_id    id allocator state
//   timesteps  number of arrangements in the history
//   objects[]  id, class, geometry (relative path), num_points,
//              centroid [3], covariance [9, row-major],
//              poses[] {timestep, tx, ty, tz, yaw, score}, one entry per
//              timestep at which the object was placed
//
// Floats are written with round-trip precision.

#include "rescan/io/ply.hpp"
#include "rescan/model/temporal_model.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace rescan {

inline constexpr int kModelFormatVersion = 1;

inline void save_model(const TemporalModel& model, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "objects");
  nlohmann::ordered_json doc;
  doc["format"] = "rescan-model";
  doc["version"] = kModelFormatVersion;
  doc["next_id"] = model.next_id();
  doc["timesteps"] = model.history().size();
  auto objects = nlohmann::ordered_json::array();
  for (const ObjectInstance& obj : model.objects()) {
    const std::string rel = "objects/object_" + std::to_string(obj.id()) + ".ply";
    ply::write(dir / rel, obj.geometry());
    nlohmann::ordered_json o;
    o["id"] = obj.id();
    o["class"] = obj.semantic_class();
    o["geometry"] = rel;
    o["num_points"] = obj.geometry().size();
    const Vec3& c = obj.stats().centroid;
    o["centroid"] = {c.x(), c.y(), c.z()};
    auto cov = nlohmann::ordered_json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) cov.push_back(obj.stats().covariance(r, k));
    }
    o["covariance"] = cov;
    auto poses = nlohmann::ordered_json::array();
    for (const Arrangement& a : model.history()) {
      if (const PosedObject* p = a.find(obj.id())) {
        poses.push_back({{"timestep", a.timestep},
                         {"tx", p->pose.tx},
                         {"ty", p->pose.ty},
                         {"tz", p->pose.tz},
                         {"yaw", p->pose.yaw},
                         {"score", p->score}});
      }
    }
    o["poses"] = poses;
    objects.push_back(std::move(o));
  }
  doc["objects"] = objects;
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << doc.dump(2) << '\n';
}

inline TemporalModel load_model(const std::filesystem::path& dir) {
  const auto manifest = dir / "model.json";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("format").get<std::string>() != "rescan-model") {
      throw IoError("parse error: not a rescan model manifest");
    }
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw IoError("parse error: unsupported model version");
    }
    TemporalModel model;
    const auto timesteps = doc.at("timesteps").get<std::size_t>();
    std::vector<Arrangement> history(timesteps);
    for (std::size_t t = 0; t < timesteps; ++t) history[t].timestep = t;
    for (const auto& o : doc.at("objects")) {
      const int id = o.at("id").get<int>();
      PointCloud g = ply::read(dir / o.at("geometry").get<std::string>());
      model.insert_object(ObjectInstance(id, o.at("class").get<int>(), std::move(g)));
      for (const auto& p : o.at("poses")) {
        const auto t = p.at("timestep").get<std::size_t>();
        if (t >= timesteps) throw IoError("parse error: pose timestep out of range");
        history[t].placements.push_back(
            {id,
             GroundPose(p.at("tx").get<double>(), p.at("ty").get<double>(),
                        p.at("tz").get<double>(), p.at("yaw").get<double>()),
             p.at("score").get<double>()});
      }
    }
    for (Arrangement& a : history) model.append_arrangement(std::move(a));
    model.set_next_id(doc.at("next_id").get<int>());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("parse error: " + manifest.string() + ": " + e.what());
  }
}

}  // namespace rescan
