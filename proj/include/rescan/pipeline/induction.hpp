#pragma once

#include "rescan/core/normals.hpp"
#include "rescan/model/temporal_model.hpp"
#include "rescan/pipeline/config.hpp"

#include "json.hpp"

#include <chrono>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rescan {

/// A failure inside one stage of the induction step.
class PipelineError : public Error {
 public:
  PipelineError(const std::string& stage, const std::string& what)
      : Error(stage + ": " + what), stage_(stage) {}
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ObjectReport {
  int id = 0;
  int semantic_class = 0;
  std::size_t proposals = 0;
  bool placed = false;
  GroundPose pose;
  double score = 0.0;
  double hysteresis = 0.0;
  std::size_t labeled_points = 0;
  std::size_t geometry_points = 0;  // after fusion
  std::string warning;
};

struct StepReport {
  std::size_t timestep = 0;
  std::size_t scan_points = 0;
  std::size_t static_points = 0;
  bool normals_estimated = false;
  std::size_t planes = 0;
  std::size_t occupied_voxels = 0;
  TermValues terms;
  double objective = 0.0;
  double greedy_objective = 0.0;
  int anneal_accepted = 0;
  int anneal_restarts = 0;
  std::vector<ObjectReport> objects;
  std::vector<int> placed;
  std::vector<int> absent;
  std::size_t smoothing_changed = 0;
  std::vector<double> smoothing_energy;
  double background_fraction = 0.0;
};

/// Wall-clock seconds per stage; kept apart from the report so that reports
/// stay reproducible.
using StageTiming = std::vector<std::pair<std::string, double>>;

struct StepOutput {
  TemporalModel model;
  PointCloud labeled;
  StepReport report;
  StageTiming timing;
  std::vector<TraceRow> trace;
  /// Placement score per placed instance; confidence for detection metrics.
  std::map<int, double> confidence;
};

namespace detail {

template <class F>
auto run_stage(const char* name, StageTiming& timing, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      timing.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } else {
      auto r = f();
      timing.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      return r;
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

}  // namespace detail

/// One inductive step: given M_{i-1} and scan S_i, produce M_i and the
/// labeled scan. Stages: normals, static detection, pose proposal,
/// arrangement optimization, label transfer (plus smoothing), fusion, model
/// update.
inline StepOutput induct(const TemporalModel& previous, PointCloud scan,
                         const PipelineConfig& cfg) {
  cfg.validate();
  StepOutput out;
  StepReport& rep = out.report;
  StageTiming& tm = out.timing;
  const std::size_t t = previous.history().size();
  if (t == 0) throw PipelineError("model", "model has no bootstrap arrangement");
  rep.timestep = t;
  rep.scan_points = scan.size();
  if (scan.empty()) throw PipelineError("input", "scan is empty");
  scan.clear_labels();

  detail::run_stage("normals", tm, [&] {
    if (!scan.has_normals()) {
      scan.normals = estimate_normals(scan, cfg.normal_k).cloud.normals;
      rep.normals_estimated = true;
    }
  });

  const StaticDetection statics =
      detail::run_stage("static", tm, [&] { return detect_static(scan, cfg.statics); });
  rep.static_points = statics.static_count();
  rep.planes = statics.planes.size();

  std::vector<PoseSet> sets;
  detail::run_stage("proposal", tm, [&] {
    const ProposalScene ps = prepare_proposal_scene(scan, statics, cfg.proposal.overlap_cell);
    for (const ObjectInstance& obj : previous.objects()) {
      std::optional<GroundPose> prev;
      if (const auto p = previous.last_placement(obj.id())) prev = p->pose;
      ProposalStats st;
      PoseSet set{obj.id(), propose_poses(obj, ps, cfg.proposal, prev, &st)};
      ObjectReport r;
      r.id = obj.id();
      r.semantic_class = obj.semantic_class();
      r.proposals = set.poses.size();
      r.warning = st.warning;
      rep.objects.push_back(r);
      sets.push_back(std::move(set));
    }
  });

  const VoxelGrid grid = detail::run_stage("voxelize", tm, [&] {
    return voxelize_scene(scan, statics.mask, cfg.objective.voxel_size);
  });
  rep.occupied_voxels = grid.occupied_count();

  const OptimizationResult opt = detail::run_stage("optimize", tm, [&] {
    AnnealConfig ac = cfg.anneal;
    ac.seed = mix_seed(cfg.seed, t);
    return optimize_arrangement(std::move(sets), grid, previous, cfg.objective, ac);
  });
  rep.terms = opt.value.terms;
  rep.objective = opt.value.total;
  rep.greedy_objective = opt.greedy_value.total;
  rep.anneal_accepted = opt.anneal.accepted;
  rep.anneal_restarts = opt.anneal.restarts;
  out.trace = opt.anneal.trace;

  detail::run_stage("transfer", tm, [&] {
    out.labeled = transfer_labels(scan, statics.mask, opt.arrangement, previous,
                                  cfg.transfer_distance);
    if (cfg.smooth) {
      SmoothingOptions so = cfg.smoothing;
      so.distance = cfg.transfer_distance;
      SmoothingResult sm = smooth_labels(out.labeled, statics.mask, so);
      out.labeled = std::move(sm.cloud);
      rep.smoothing_changed = sm.changed;
      rep.smoothing_energy = std::move(sm.energy);
      rep.background_fraction = sm.background_fraction;
    } else {
      std::size_t dyn = 0, bg = 0;
      for (std::size_t i = 0; i < out.labeled.size(); ++i) {
        if (statics.mask[i]) continue;
        ++dyn;
        bg += out.labeled.instance[i] == kUnassignedInstance ? 1 : 0;
      }
      rep.background_fraction = dyn ? static_cast<double>(bg) / static_cast<double>(dyn) : 0.0;
    }
  });

  std::vector<std::pair<int, PointCloud>> fused;
  detail::run_stage("fusion", tm, [&] {
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < out.labeled.size(); ++i) {
      if (out.labeled.instance[i] != kUnassignedInstance) members[out.labeled.instance[i]].push_back(i);
    }
    for (const PosedObject& p : opt.arrangement.placements) {
      const auto it = members.find(p.id);
      if (it == members.end()) continue;
      FusionResult fr = fuse_object(previous.resolve(p.id).geometry(),
                                    out.labeled.select(it->second), p.pose, cfg.fusion);
      if (!fr.no_observation) fused.emplace_back(p.id, std::move(fr.geometry));
    }
  });

  detail::run_stage("update", tm, [&] {
    Arrangement a = opt.arrangement;
    a.timestep = t;
    for (ObjectReport& r : rep.objects) {
      if (const PosedObject* p = a.find(r.id)) {
        r.placed = true;
        r.pose = p->pose;
        r.score = p->score;
        r.hysteresis = hysteresis_score(*p, previous, cfg.objective.h, cfg.objective.sigma_h,
                                        cfg.objective.squared_hysteresis);
        rep.placed.push_back(r.id);
        out.confidence[r.id] = p->score;
      } else {
        rep.absent.push_back(r.id);
      }
      r.labeled_points = static_cast<std::size_t>(
          std::count(out.labeled.instance.begin(), out.labeled.instance.end(), r.id));
    }
    out.model = update_model(previous, std::move(a), fused);
    for (ObjectReport& r : rep.objects) r.geometry_points = out.model.resolve(r.id).geometry().size();
  });
  return out;
}

inline nlohmann::ordered_json to_json(const StepReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["timestep"] = r.timestep;
  j["scan_points"] = r.scan_points;
  j["static_points"] = r.static_points;
  j["normals_estimated"] = r.normals_estimated;
  j["planes"] = r.planes;
  j["occupied_voxels"] = r.occupied_voxels;
  j["objective"] = r.objective;
  j["greedy_objective"] = r.greedy_objective;
  j["terms"] = {{"coverage", r.terms.coverage},
                {"geometry", r.terms.geometry},
                {"intersection", r.terms.intersection},
                {"hysteresis", r.terms.hysteresis},
                {"no_dynamic_content", r.terms.no_dynamic_content}};
  j["anneal"] = {{"accepted", r.anneal_accepted}, {"restarts", r.anneal_restarts}};
  j["placed"] = r.placed;
  j["absent"] = r.absent;
  auto objs = ordered_json::array();
  for (const ObjectReport& o : r.objects) {
    ordered_json oj{{"id", o.id},
                    {"class", o.semantic_class},
                    {"proposals", o.proposals},
                    {"placed", o.placed}};
    if (o.placed) {
      oj["pose"] = {{"tx", o.pose.tx}, {"ty", o.pose.ty}, {"tz", o.pose.tz}, {"yaw", o.pose.yaw}};
      oj["score"] = o.score;
      oj["hysteresis"] = o.hysteresis;
    }
    oj["labeled_points"] = o.labeled_points;
    oj["geometry_points"] = o.geometry_points;
    if (!o.warning.empty()) oj["warning"] = o.warning;
    objs.push_back(oj);
  }
  j["objects"] = objs;
  j["smoothing"] = {{"changed", r.smoothing_changed}, {"energy", r.smoothing_energy}};
  j["background_fraction"] = r.background_fraction;
  return j;
}

inline nlohmann::ordered_json to_json(const StageTiming& t) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [stage, seconds] : t) j[stage] = seconds;
  return j;
}

}  // namespace rescan
