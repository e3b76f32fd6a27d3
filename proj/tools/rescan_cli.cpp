// rescan: command-line front end.
//
// Exit codes: 0 success, 1 pipeline failure, 2 I/O, parse or usage failure.

#include "rescan/io/ply.hpp"
#include "rescan/model/model_io.hpp"
#include "rescan/pipeline/config.hpp"
#include "rescan/pipeline/induction.hpp"
#include "rescan/pipeline/sequence.hpp"
#include "rescan/pipeline/viz.hpp"
#include "rescan/synth/generator.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace rescan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitIo = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool trace = false;
};

PipelineConfig make_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

PointCloud read_scan(const fs::path& p) {
  try {
    return ply::read(p);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(e.what());
  }
}

TemporalModel read_model(const fs::path& p) {
  try {
    return load_model(p);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string("model ") + p.string() + ": " + e.what());
  }
}

void add_common(CLI::App* app, Common& c, bool with_trace) {
  app->add_option("--config", c.config, "pipeline config file (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed (overrides the config)");
  if (with_trace) app->add_flag("--trace", c.trace, "write the annealing trace as CSV");
}

int cmd_induct(const std::string& model_dir, const std::string& scan_path,
               const std::string& out_dir, const Common& common) {
  const PipelineConfig cfg = make_config(common);
  const DirectoryLock in_lock(model_dir);
  std::optional<DirectoryLock> out_lock;
  if (fs::weakly_canonical(model_dir) != fs::weakly_canonical(out_dir)) out_lock.emplace(out_dir);
  const TemporalModel model = read_model(model_dir);
  PointCloud scan = read_scan(scan_path);
  PipelineConfig c = cfg;
  c.anneal.record_trace = common.trace;
  const StepOutput step = induct(model, std::move(scan), c);
  const fs::path out(out_dir);
  save_model(step.model, out);
  ply::write(out / "labels.ply", step.labeled);
  write_text(out / "report.json", to_json(step.report).dump(2) + "\n");
  write_text(out / "timing.json", to_json(step.timing).dump(2) + "\n");
  write_text(out / "confidence.csv", confidence_csv(step.confidence));
  if (common.trace) {
    std::ofstream tr(out / "trace.csv");
    write_trace_csv(tr, step.trace);
  }
  const StepReport& r = step.report;
  std::cout << "timestep " << r.timestep << ": placed " << r.placed.size() << " of "
            << r.objects.size() << " objects, objective " << std::setprecision(6) << r.objective
            << '\n';
  if (!r.absent.empty()) {
    std::cout << "absent:";
    for (int id : r.absent) std::cout << ' ' << id;
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_run(const std::string& scene_dir, const std::string& out_dir, const Common& common) {
  const PipelineConfig cfg = make_config(common);
  const RunSummary s = run_sequence(scene_dir, out_dir, cfg, common.trace);
  std::cout << "processed " << s.steps << " step(s); final model " << s.final_model.string()
            << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& pred, const std::string& gt, const EvaluationOptions& opt,
                 const std::string& table_out) {
  const EvaluationResult r = evaluate_dirs(pred, gt, opt);
  const std::string table = metrics_table(r);
  std::cout << table << metrics_summary(r);
  if (!table_out.empty()) write_text(table_out, table);
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, const std::string& script, std::size_t scenes,
              std::size_t timesteps, std::optional<std::uint64_t> seed) {
  std::vector<synth::SceneScript> scripts;
  if (!script.empty()) {
    scripts.push_back(synth::load_script(script));
    if (seed) scripts.back().seed = *seed;
  } else {
    synth::BenchmarkOptions opt;
    opt.scenes = scenes;
    opt.timesteps = timesteps;
    if (seed) opt.seed = *seed;
    scripts = synth::benchmark_suite(opt);
  }
  for (const synth::SceneScript& s : scripts) {
    const synth::Sequence seq = synth::generate_sequence(s);
    const fs::path dir = scripts.size() == 1 && !script.empty() ? fs::path(out_dir)
                                                                : fs::path(out_dir) / s.name;
    synth::write_scene_dir(s, seq, dir);
    std::cout << dir.string() << ": " << seq.scans.size() << " scan(s), "
              << seq.gt.classes.size() << " object(s)\n";
  }
  return kExitOk;
}

int cmd_export_viz(const std::string& input, const std::string& out, const std::string& mode,
                   std::optional<std::size_t> timestep) {
  const VizMode m = viz_mode_from_string(mode);
  PointCloud cloud;
  if (fs::is_directory(input)) {
    const TemporalModel model = read_model(input);
    const std::size_t t = timestep.value_or(model.history().size() - 1);
    cloud = compose_arrangement(model, t);
  } else {
    cloud = read_scan(input);
  }
  export_viz(cloud, out, m);
  std::cout << "wrote " << cloud.size() << " points to " << out << '\n';
  return kExitOk;
}

int cmd_propose(const std::string& model_dir, const std::string& scan_path,
                std::optional<int> only, const Common& common) {
  const PipelineConfig cfg = make_config(common);
  const TemporalModel model = read_model(model_dir);
  PointCloud scan = read_scan(scan_path);
  if (!scan.has_normals()) scan.normals = estimate_normals(scan, cfg.normal_k).cloud.normals;
  const StaticDetection statics = detect_static(scan, cfg.statics);
  const ProposalScene ps = prepare_proposal_scene(scan, statics, cfg.proposal.overlap_cell);
  std::cout << "instance,rank,tx,ty,tz,yaw,score\n" << std::setprecision(9);
  for (const ObjectInstance& obj : model.objects()) {
    if (only && obj.id() != *only) continue;
    std::optional<GroundPose> prev;
    if (const auto p = model.last_placement(obj.id())) prev = p->pose;
    const auto poses = propose_poses(obj, ps, cfg.proposal, prev);
    for (std::size_t r = 0; r < poses.size(); ++r) {
      const GroundPose& g = poses[r].pose;
      std::cout << obj.id() << ',' << r << ',' << g.tx << ',' << g.ty << ',' << g.tz << ','
                << g.yaw << ',' << poses[r].score << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal scene model maintenance from repeated 3D scans"};
  app.require_subcommand(1);

  Common common;

  std::string model_dir, scan_path, out_dir;
  auto* induct = app.add_subcommand("induct", "process one new scan against a model");
  induct->add_option("model_dir", model_dir, "input model directory")->required();
  induct->add_option("scan", scan_path, "new scan (PLY)")->required();
  induct->add_option("out_model_dir", out_dir, "output directory")->required();
  add_common(induct, common, true);

  std::string scene_dir, run_out;
  auto* run = app.add_subcommand("run", "bootstrap from scan_000 and induct all later scans");
  run->add_option("scene_dir", scene_dir, "directory of scan_*.ply")->required();
  run->add_option("out_dir", run_out, "output directory")->required();
  add_common(run, common, true);

  std::string pred_dir, gt_dir, table_out;
  EvaluationOptions eopt;
  auto* evaluate = app.add_subcommand("evaluate", "score labeled scans against ground truth");
  evaluate->add_option("pred_dir", pred_dir, "prediction directory")->required();
  evaluate->add_option("gt_dir", gt_dir, "ground-truth directory")->required();
  evaluate->add_flag("--pooled", eopt.pooled_transfer, "pool transfer IoU over points");
  evaluate->add_flag("--include-static", eopt.include_static, "count the static class");
  evaluate->add_flag("--include-first", eopt.include_first, "also score scan_000");
  evaluate->add_option("--out", table_out, "write the CSV table here");

  std::string synth_out, script;
  std::size_t scenes = 10, timesteps = 4;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic scenes");
  synth_cmd->add_option("out_dir", synth_out, "output directory")->required();
  synth_cmd->add_option("--script", script, "single scene script (JSON)")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--scenes", scenes, "benchmark scene count")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--timesteps", timesteps, "benchmark timesteps")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", common.seed, "random seed");

  std::string viz_in, viz_out, viz_mode = "instance";
  std::optional<std::size_t> viz_t;
  auto* viz = app.add_subcommand("export-viz", "write a colored PLY of a labeled scan or a model");
  viz->add_option("input", viz_in, "labeled scan (PLY) or model directory")->required();
  viz->add_option("out", viz_out, "output PLY")->required();
  viz->add_option("--viz-mode", viz_mode, "instance or semantic")
      ->check(CLI::IsMember({"instance", "semantic"}));
  viz->add_option("--timestep", viz_t, "arrangement to compose (model input; default last)");

  std::string prop_model, prop_scan;
  std::optional<int> prop_id;
  auto* propose = app.add_subcommand("propose", "dump pose proposals as CSV");
  propose->add_option("model_dir", prop_model, "model directory")->required();
  propose->add_option("scan", prop_scan, "scan (PLY)")->required();
  propose->add_option("--id", prop_id, "only this instance");
  add_common(propose, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitIo;
  }

  try {
    if (*induct) return cmd_induct(model_dir, scan_path, out_dir, common);
    if (*run) return cmd_run(scene_dir, run_out, common);
    if (*evaluate) return cmd_evaluate(pred_dir, gt_dir, eopt, table_out);
    if (*synth_cmd) return cmd_synth(synth_out, script, scenes, timesteps, common.seed);
    if (*viz) return cmd_export_viz(viz_in, viz_out, viz_mode, viz_t);
    if (*propose) return cmd_propose(prop_model, prop_scan, prop_id, common);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitOk;
}
