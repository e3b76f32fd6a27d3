#pragma once

// Scene scripts: a room, object prototypes, the t0 layout and per-step
// events. Stored as JSON:
//
//   {
//     "name": "office", "seed": 7,
//     "room": {"width": 3.6, "depth": 3.4, "wall_height": 1.0},
//     "density": 2000,            // surface samples per square meter
//     "noise": 0.005,             // Gaussian position noise sigma (m)
//     "viewpoints": [[x, y, z]],  // optional; default: four upper corners
//     "prototypes": [{"name": "chair", "shape": "l_shape", "class": 1,
//                     "dims": [0.45, 0.5, 0.45, 0.9, 0.06]}],
//     "objects": [{"id": 1, "prototype": "chair",
//                  "pose": {"x": 1.0, "y": 1.2, "yaw_deg": 90}}],
//     "steps": [                  // one entry per timestep after t0
//       {"viewpoints": [[...]],   // optional override
//        "events": [{"type": "move", "object": 1, "pose": {...}},
//                   {"type": "remove", "object": 2},
//                   {"type": "add", "object": 2, "pose": {...}}]}
//     ]
//   }
//
// The room spans [0, width] x [0, depth] with the floor at z = 0. Object
// ids must be positive. "add" brings back an object removed earlier.

#include "rescan/core/ground_pose.hpp"
#include "rescan/synth/shapes.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rescan::synth {

struct Room {
  double width = 3.6;
  double depth = 3.6;
  double wall_height = 1.0;
};

struct ObjectSpec {
  int id = 0;
  std::string prototype;
  GroundPose pose;  // tz ignored; objects rest on the floor
};

enum class EventKind { Move, Add, Remove };

struct Event {
  EventKind kind = EventKind::Move;
  int object = 0;
  GroundPose pose;
};

struct Step {
  std::vector<Event> events;
  std::vector<Vec3> viewpoints;  // empty: scene default
};

struct SceneScript {
  std::string name = "scene";
  std::uint64_t seed = 1;
  Room room;
  double density = 2000.0;
  double noise = 0.005;
  std::vector<Vec3> viewpoints;
  std::vector<Prototype> prototypes;
  std::vector<ObjectSpec> objects;
  std::vector<Step> steps;

  [[nodiscard]] std::size_t timesteps() const { return steps.size() + 1; }

  [[nodiscard]] const Prototype& prototype(const std::string& name) const {
    for (const Prototype& p : prototypes) {
      if (p.name == name) return p;
    }
    throw Error("unknown prototype '" + name + "'");
  }

  [[nodiscard]] const ObjectSpec& object(int id) const {
    for (const ObjectSpec& o : objects) {
      if (o.id == id) return o;
    }
    throw Error("unknown object " + std::to_string(id));
  }

  [[nodiscard]] std::vector<Vec3> default_viewpoints() const {
    const double m = 0.2, z = 1.6;
    return {{m, m, z}, {room.width - m, m, z}, {room.width - m, room.depth - m, z},
            {m, room.depth - m, z}};
  }

  [[nodiscard]] std::vector<Vec3> viewpoints_at(std::size_t t) const {
    if (t > 0 && !steps[t - 1].viewpoints.empty()) return steps[t - 1].viewpoints;
    return viewpoints.empty() ? default_viewpoints() : viewpoints;
  }
};

namespace detail {

using nlohmann::json;

inline json pose_to_json(const GroundPose& p) {
  return json{{"x", p.tx}, {"y", p.ty}, {"yaw_deg", rad2deg(p.yaw)}};
}

inline GroundPose pose_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), 0.0,
          deg2rad(j.value("yaw_deg", 0.0))};
}

inline json points_to_json(const std::vector<Vec3>& pts) {
  json a = json::array();
  for (const Vec3& p : pts) a.push_back({p.x(), p.y(), p.z()});
  return a;
}

inline std::vector<Vec3> points_from_json(const json& j) {
  std::vector<Vec3> out;
  for (const auto& p : j) {
    if (p.size() != 3) throw Error("viewpoints must be [x, y, z] triples");
    out.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  return out;
}

inline const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::Move: return "move";
    case EventKind::Add: return "add";
    case EventKind::Remove: return "remove";
  }
  return "move";
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SceneScript& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["room"] = {{"width", s.room.width}, {"depth", s.room.depth},
               {"wall_height", s.room.wall_height}};
  j["density"] = s.density;
  j["noise"] = s.noise;
  if (!s.viewpoints.empty()) j["viewpoints"] = detail::points_to_json(s.viewpoints);
  auto protos = ordered_json::array();
  for (const Prototype& p : s.prototypes) {
    protos.push_back(ordered_json{{"name", p.name},
                                  {"shape", to_string(p.shape)},
                                  {"class", p.semantic_class},
                                  {"dims", p.dims}});
  }
  j["prototypes"] = protos;
  auto objs = ordered_json::array();
  for (const ObjectSpec& o : s.objects) {
    objs.push_back(ordered_json{
        {"id", o.id}, {"prototype", o.prototype}, {"pose", detail::pose_to_json(o.pose)}});
  }
  j["objects"] = objs;
  auto steps = ordered_json::array();
  for (const Step& st : s.steps) {
    ordered_json sj;
    if (!st.viewpoints.empty()) sj["viewpoints"] = detail::points_to_json(st.viewpoints);
    auto evs = ordered_json::array();
    for (const Event& e : st.events) {
      ordered_json ej{{"type", detail::event_name(e.kind)}, {"object", e.object}};
      if (e.kind != EventKind::Remove) ej["pose"] = detail::pose_to_json(e.pose);
      evs.push_back(ej);
    }
    sj["events"] = evs;
    steps.push_back(sj);
  }
  j["steps"] = steps;
  return j;
}

inline SceneScript script_from_json(const nlohmann::json& j) {
  SceneScript s;
  try {
    s.name = j.value("name", std::string("scene"));
    s.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("room")) {
      const auto& r = j.at("room");
      s.room.width = r.at("width").get<double>();
      s.room.depth = r.at("depth").get<double>();
      s.room.wall_height = r.value("wall_height", 1.0);
    }
    s.density = j.value("density", 2000.0);
    s.noise = j.value("noise", 0.005);
    if (j.contains("viewpoints")) s.viewpoints = detail::points_from_json(j.at("viewpoints"));
    for (const auto& p : j.at("prototypes")) {
      Prototype proto{p.at("name").get<std::string>(),
                      shape_from_string(p.at("shape").get<std::string>()),
                      p.at("class").get<int>(), p.at("dims").get<std::vector<double>>()};
      proto.validate();
      s.prototypes.push_back(std::move(proto));
    }
    for (const auto& o : j.at("objects")) {
      s.objects.push_back({o.at("id").get<int>(), o.at("prototype").get<std::string>(),
                           detail::pose_from_json(o.at("pose"))});
    }
    if (j.contains("steps")) {
      for (const auto& st : j.at("steps")) {
        Step step;
        if (st.contains("viewpoints")) step.viewpoints = detail::points_from_json(st.at("viewpoints"));
        for (const auto& e : st.value("events", nlohmann::json::array())) {
          Event ev;
          const std::string type = e.at("type").get<std::string>();
          if (type == "move") ev.kind = EventKind::Move;
          else if (type == "add") ev.kind = EventKind::Add;
          else if (type == "remove") ev.kind = EventKind::Remove;
          else throw Error("unknown event type '" + type + "'");
          ev.object = e.at("object").get<int>();
          if (ev.kind != EventKind::Remove) ev.pose = detail::pose_from_json(e.at("pose"));
          step.events.push_back(ev);
        }
        s.steps.push_back(std::move(step));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("scene script: ") + e.what());
  }
  return s;
}

inline SceneScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("parse error: " + path.string() + ": " + e.what());
  }
  return script_from_json(j);
}

inline void save_script(const SceneScript& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(s).dump(2) << '\n';
}

}  // namespace rescan::synth
