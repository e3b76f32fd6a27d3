#pragma once

// Pipeline configuration file (JSON). Every field is optional; missing
// fields keep the defaults below. Unknown keys are rejected.
//
//   {
//     "seed": 1,
//     "normals":   {"k": 16},
//     "static":    {"inlier_threshold": 0.015, "min_inlier_fraction": 0.05,
//                   "iterations": 300, "max_tilt_deg": 10, "support_tolerance": 0.02,
//                   "min_ceiling_ratio": 0.5, "max_planes": 16, "score_sample": 4000},
//     "proposal":  {"translation_step": 0.1, "yaw_count": 16, "promote_fraction": 0.5,
//                   "max_poses_per_level": 50, "nms_dist": 0.2, "nms_yaw_deg": 15,
//                   "score_tau": 0, "min_overlap": 0.9, "overlap_cell": 0.1,
//                   "coarse_icp_iterations": 8, "fine_icp_iterations": 10,
//                   "corr_dist_factor": 2},
//     "objective": {"w_c": 2.0, "w_g": 0.3, "w_i": 1.0, "w_h": 1.8, "h": 0.4,
//                   "sigma_r": 0.25, "sigma_h": 0.5, "voxel_size": 0.05,
//                   "squared_hysteresis": false},
//     "anneal":    {"iterations": 25000, "restart_prob": 0.005, "t_start": 0.05,
//                   "t_end": 0, "move_weights": [1, 1, 1, 1], "swap_radius": 0.2},
//     "transfer":  {"distance": 0.05, "smooth": true, "k": 12, "lambda": 1.0, "sweeps": 5},
//     "fusion":    {"bin": 0.01, "spacing": 0.01, "smooth_radius": 0.03}
//   }
//
// The anneal seed is derived from "seed" and the timestep.

#include "rescan/core/plane_detection.hpp"
#include "rescan/fusion/fusion.hpp"
#include "rescan/objective/objective.hpp"
#include "rescan/optimizer/annealing.hpp"
#include "rescan/proposal/pose_proposal.hpp"
#include "rescan/transfer/label_transfer.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace rescan {

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t normal_k = 16;
  StaticDetectionOptions statics;
  ProposalConfig proposal;
  ObjectiveWeights objective;
  AnnealConfig anneal;
  double transfer_distance = 0.05;
  bool smooth = true;
  SmoothingOptions smoothing;
  FusionOptions fusion;

  void validate() const {
    if (normal_k < 3) throw Error("config: normals.k must be at least 3");
    proposal.validate();
    objective.validate();
    anneal.validate();
    if (!(transfer_distance > 0.0)) throw Error("config: transfer.distance must be positive");
    if (!(fusion.bin > 0.0) || !(fusion.spacing > 0.0)) {
      throw Error("config: fusion bin and spacing must be positive");
    }
    if (fusion.smooth_radius < 0.0) throw Error("config: fusion.smooth_radius must be non-negative");
  }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw Error("config: '" + section_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error("config: bad value for " + section_ + "." + key);
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw Error("config: unknown key " + section_ + "." + key);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (!j.is_object()) throw Error("config: top level must be an object");
  const nlohmann::json empty = nlohmann::json::object();
  if (j.contains("seed")) {
    try {
      c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception&) {
      throw Error("config: bad value for seed");
    }
  }
  auto sub = [&](const char* name) {
    return detail::ConfigReader(j.contains(name) ? j.at(name) : empty, name);
  };
  std::set<std::string> sections{"seed", "normals", "static", "proposal", "objective",
                                 "anneal", "transfer", "fusion"};
  for (const auto& [key, value] : j.items()) {
    if (!sections.contains(key)) throw Error("config: unknown key " + key);
  }

  {
    auto r = sub("normals");
    r.read("k", c.normal_k);
    r.finish();
  }
  {
    auto r = sub("static");
    StaticDetectionOptions& s = c.statics;
    r.read("inlier_threshold", s.inlier_threshold);
    r.read("min_inlier_fraction", s.min_inlier_fraction);
    r.read("iterations", s.iterations);
    r.read("max_tilt_deg", s.max_tilt_deg);
    r.read("support_tolerance", s.support_tolerance);
    r.read("min_ceiling_ratio", s.min_ceiling_ratio);
    r.read("max_planes", s.max_planes);
    r.read("score_sample", s.score_sample);
    r.read("seed", s.seed);
    r.finish();
  }
  {
    auto r = sub("proposal");
    ProposalConfig& p = c.proposal;
    r.read("translation_step", p.translation_step);
    r.read("yaw_count", p.yaw_count);
    r.read("promote_fraction", p.promote_fraction);
    r.read("max_poses_per_level", p.max_poses_per_level);
    r.read("nms_dist", p.nms_dist);
    r.read("nms_yaw_deg", p.nms_yaw_deg);
    r.read("score_tau", p.score_tau);
    r.read("min_overlap", p.min_overlap);
    r.read("overlap_cell", p.overlap_cell);
    r.read("coarse_icp_iterations", p.coarse_icp_iterations);
    r.read("fine_icp_iterations", p.fine_icp_iterations);
    r.read("corr_dist_factor", p.corr_dist_factor);
    r.finish();
  }
  {
    auto r = sub("objective");
    ObjectiveWeights& w = c.objective;
    r.read("w_c", w.w_c);
    r.read("w_g", w.w_g);
    r.read("w_i", w.w_i);
    r.read("w_h", w.w_h);
    r.read("h", w.h);
    r.read("sigma_r", w.sigma_r);
    r.read("sigma_h", w.sigma_h);
    r.read("voxel_size", w.voxel_size);
    r.read("squared_hysteresis", w.squared_hysteresis);
    r.finish();
  }
  {
    auto r = sub("anneal");
    AnnealConfig& a = c.anneal;
    r.read("iterations", a.iterations);
    r.read("restart_prob", a.restart_prob);
    r.read("t_start", a.t_start);
    r.read("t_end", a.t_end);
    r.read("move_weights", a.move_weights);
    r.read("swap_radius", a.swap_radius);
    r.finish();
  }
  {
    auto r = sub("transfer");
    r.read("distance", c.transfer_distance);
    r.read("smooth", c.smooth);
    r.read("k", c.smoothing.k);
    r.read("lambda", c.smoothing.lambda);
    r.read("sweeps", c.smoothing.sweeps);
    r.finish();
  }
  {
    auto r = sub("fusion");
    r.read("bin", c.fusion.bin);
    r.read("spacing", c.fusion.spacing);
    r.read("smooth_radius", c.fusion.smooth_radius);
    r.finish();
  }
  c.smoothing.distance = c.transfer_distance;
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  const auto& s = c.statics;
  const auto& p = c.proposal;
  const auto& w = c.objective;
  const auto& a = c.anneal;
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["normals"] = {{"k", c.normal_k}};
  j["static"] = {{"inlier_threshold", s.inlier_threshold},
                 {"min_inlier_fraction", s.min_inlier_fraction},
                 {"iterations", s.iterations},
                 {"max_tilt_deg", s.max_tilt_deg},
                 {"support_tolerance", s.support_tolerance},
                 {"min_ceiling_ratio", s.min_ceiling_ratio},
                 {"max_planes", s.max_planes},
                 {"score_sample", s.score_sample},
                 {"seed", s.seed}};
  j["proposal"] = {{"translation_step", p.translation_step},
                   {"yaw_count", p.yaw_count},
                   {"promote_fraction", p.promote_fraction},
                   {"max_poses_per_level", p.max_poses_per_level},
                   {"nms_dist", p.nms_dist},
                   {"nms_yaw_deg", p.nms_yaw_deg},
                   {"score_tau", p.score_tau},
                   {"min_overlap", p.min_overlap},
                   {"overlap_cell", p.overlap_cell},
                   {"coarse_icp_iterations", p.coarse_icp_iterations},
                   {"fine_icp_iterations", p.fine_icp_iterations},
                   {"corr_dist_factor", p.corr_dist_factor}};
  j["objective"] = {{"w_c", w.w_c},         {"w_g", w.w_g},
                    {"w_i", w.w_i},         {"w_h", w.w_h},
                    {"h", w.h},             {"sigma_r", w.sigma_r},
                    {"sigma_h", w.sigma_h}, {"voxel_size", w.voxel_size},
                    {"squared_hysteresis", w.squared_hysteresis}};
  j["anneal"] = {{"iterations", a.iterations}, {"restart_prob", a.restart_prob},
                 {"t_start", a.t_start},       {"t_end", a.t_end},
                 {"move_weights", a.move_weights}, {"swap_radius", a.swap_radius}};
  j["transfer"] = {{"distance", c.transfer_distance},
                   {"smooth", c.smooth},
                   {"k", c.smoothing.k},
                   {"lambda", c.smoothing.lambda},
                   {"sweeps", c.smoothing.sweeps}};
  j["fusion"] = {{"bin", c.fusion.bin},
                 {"spacing", c.fusion.spacing},
                 {"smooth_radius", c.fusion.smooth_radius}};
  return j;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("parse error: " + path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace rescan
