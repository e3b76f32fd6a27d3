#include "rescan/pipeline/sequence.hpp"
#include "rescan/pipeline/viz.hpp"
#include "support/test_clouds.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace rescan;
namespace tc = rescan::testing;

namespace {

GroundPose pose_xy(double x, double y, double yaw_deg) { return {x, y, 0.0, deg2rad(yaw_deg)}; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("rescan_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& work) {
  const fs::path o = work / "stdout.txt", e = work / "stderr.txt";
  const std::string cmd = std::string(RESCAN_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

/// Chair and box, the box removed at t1; small enough for a quick run.
synth::SceneScript two_object_scene() {
  synth::SceneScript s = tc::room_script(
      {{1, "chair", pose_xy(0.9, 0.9, 30)}, {2, "box", pose_xy(2.0, 1.9, 0)}}, 0.002);
  synth::Step step;
  step.events.push_back({synth::EventKind::Remove, 2, {}});
  s.steps.push_back(step);
  return s;
}

fs::path write_scene(const synth::SceneScript& s, const fs::path& dir) {
  synth::write_scene_dir(s, synth::generate_sequence(s), dir);
  return dir;
}

PipelineConfig quick_config() {
  PipelineConfig c;
  c.anneal.iterations = 3000;
  return c;
}

}  // namespace

TEST(Induct, UnchangedScanKeepsEveryObjectInPlace) {
  const synth::SceneScript s = two_object_scene();
  const synth::Sequence seq = synth::generate_sequence(s);
  const TemporalModel m = bootstrap_from(seq.scans[0]);
  const StepOutput step = induct(m, seq.scans[0], quick_config());
  ASSERT_EQ(step.report.placed, (std::vector<int>{1, 2}));
  for (const ObjectReport& r : step.report.objects) EXPECT_NEAR(r.hysteresis, 1.0, 1e-3);
  EXPECT_TRUE(step.report.absent.empty());
  EXPECT_EQ(step.model.history().size(), 2u);
}

TEST(Induct, RemovedObjectIsReportedAbsent) {
  const synth::SceneScript s = two_object_scene();
  const synth::Sequence seq = synth::generate_sequence(s);
  const StepOutput step = induct(bootstrap_from(seq.scans[0]), seq.scans[1], quick_config());
  EXPECT_EQ(step.report.placed, (std::vector<int>{1}));
  EXPECT_EQ(step.report.absent, (std::vector<int>{2}));
  EXPECT_EQ(std::count(step.labeled.instance.begin(), step.labeled.instance.end(), 2), 0);
}

TEST(Induct, ErrorsCarryTheStage) {
  const synth::Sequence seq = synth::generate_sequence(two_object_scene());
  try {
    (void)induct(TemporalModel{}, seq.scans[0], quick_config());
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "model");
  }
  try {
    (void)induct(bootstrap_from(seq.scans[0]), PointCloud{}, quick_config());
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "input");
  }
  PointCloud unlabeled = seq.scans[1];
  unlabeled.clear_labels();
  try {
    (void)bootstrap_from(unlabeled);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("bootstrap requires labels"), std::string::npos);
  }
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const PipelineConfig d;
  const PipelineConfig back = config_from_json(nlohmann::json::parse(to_json(d).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(d).dump());
  EXPECT_EQ(d.objective.w_c, 2.0);
  EXPECT_EQ(d.objective.h, 0.4);
  EXPECT_EQ(d.fusion.smooth_radius, 0.03);
}

TEST(Config, PartialFilesOverrideOnlyTheirFields) {
  const PipelineConfig c = config_from_json(
      nlohmann::json::parse(R"({"objective": {"w_h": 0}, "fusion": {"smooth_radius": 0}})"));
  EXPECT_EQ(c.objective.w_h, 0.0);
  EXPECT_EQ(c.objective.w_c, 2.0);
  EXPECT_EQ(c.fusion.smooth_radius, 0.0);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  using nlohmann::json;
  EXPECT_THROW(config_from_json(json::parse(R"({"objectiv": {}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"objective": {"wc": 1}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"objective": {"w_c": "big"}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"fusion": {"smooth_radius": -1}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"anneal": {"iterations": 0}})")), Error);
  EXPECT_THROW(config_from_json(json::parse("[1]")), Error);
}

TEST(Evaluate, GroundTruthAgainstItselfScoresOne) {
  const fs::path dir = write_scene(two_object_scene(), scratch("eval_self") / "scene");
  const EvaluationResult r = evaluate_dirs(dir / "gt", dir / "gt");
  EXPECT_EQ(r.frames.size(), 1u);  // scan_000 is the bootstrap input
  EXPECT_EQ(r.semantic, 1.0);
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_EQ(r.transfer, 1.0);
  EvaluationOptions all;
  all.include_first = true;
  EXPECT_EQ(evaluate_dirs(dir / "gt", dir / "gt", all).frames.size(), 2u);
  EXPECT_THROW(evaluate_dirs(scratch("eval_empty"), dir / "gt"), IoError);
}

TEST(Viz, TwoInstancesGiveTwoColorsBesidesGray) {
  PointCloud c = tc::grid_plane(6, 6, 0.1);
  c.semantic.assign(c.size(), kStaticClass);
  c.instance.assign(c.size(), kUnassignedInstance);
  for (std::size_t i = 0; i < 10; ++i) c.semantic[i] = 1, c.instance[i] = 4;
  for (std::size_t i = 10; i < 20; ++i) c.semantic[i] = 1, c.instance[i] = 9;
  c.semantic[20] = 2;  // labeled but unassigned
  for (VizMode mode : {VizMode::Instance, VizMode::Semantic}) {
    const auto colors = colorize(c, mode);
    std::set<ply::Rgb> distinct(colors.begin(), colors.end());
    EXPECT_TRUE(distinct.erase(kStaticGray));
    EXPECT_EQ(distinct.size(), mode == VizMode::Instance ? 2u : 1u);
  }
}

TEST(Viz, SameIdSameColor) {
  EXPECT_EQ(label_color(17), label_color(17));
  std::set<ply::Rgb> palette;
  for (int id = 1; id <= 20; ++id) {
    EXPECT_NE(label_color(id), kStaticGray);
    palette.insert(label_color(id));
  }
  EXPECT_GE(palette.size(), 19u);
  EXPECT_THROW(viz_mode_from_string("depth"), Error);
}

TEST(Viz, ModelCompletionExceedsEitherHalfScan) {
  // A box would register flipped onto its own visible half; the chair has no
  // such symmetry. Adjacent corners share one side, enough to register.
  synth::SceneScript s = tc::room_script({{1, "chair", GroundPose(1.5, 1.5, 0, 0.3)}});
  s.viewpoints = {Vec3(0.1, 0.1, 1.6)};
  synth::Step other;
  other.viewpoints = {Vec3(2.9, 0.1, 1.6)};
  s.steps.push_back(other);
  const synth::Sequence seq = synth::generate_sequence(s);
  const StepOutput step = induct(bootstrap_from(seq.scans[0]), seq.scans[1], quick_config());
  ASSERT_EQ(step.report.placed, (std::vector<int>{1}));
  const PointCloud full = compose_arrangement(step.model, 1);
  for (const PointCloud& scan : seq.scans) {
    EXPECT_GT(full.size(),
              static_cast<std::size_t>(std::count(scan.instance.begin(), scan.instance.end(), 1)));
  }
  EXPECT_THROW(compose_arrangement(step.model, 2), Error);
}

TEST(DirectoryLock, SecondClaimFails) {
  const fs::path dir = scratch("lock");
  {
    const DirectoryLock a(dir);
    EXPECT_THROW(DirectoryLock b(dir), IoError);
  }
  EXPECT_NO_THROW(DirectoryLock c(dir));
}

TEST(Cli, RunThenEvaluate) {
  const fs::path work = scratch("cli_run");
  synth::save_script(two_object_scene(), work / "script.json");
  std::ofstream(work / "quick.json") << R"({"anneal": {"iterations": 3000}})";
  ASSERT_EQ(cli("synth " + (work / "scene").string() + " --script " + (work / "script.json").string(), work).code, 0);
  const CliResult run = cli("run " + (work / "scene").string() + " " + (work / "out").string() +
                                " --config " + (work / "quick.json").string() + " --trace",
                            work);
  ASSERT_EQ(run.code, 0) << run.err;
  for (const char* f : {"labels/scan_000.ply", "labels/scan_001.ply", "reports/scan_001.json",
                        "traces/scan_001.csv", "confidence/scan_001.csv",
                        "models/model_001/model.json"}) {
    EXPECT_TRUE(fs::exists(work / "out" / f)) << f;
  }
  const nlohmann::json report = nlohmann::json::parse(slurp(work / "out/reports/scan_001.json"));
  EXPECT_EQ(report["absent"], nlohmann::json::array({2}));

  const CliResult ev = cli("evaluate " + (work / "out").string() + " " + (work / "scene").string() +
                               " --out " + (work / "table.csv").string(),
                           work);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(slurp(work / "table.csv").find("frame,semantic_miou,instance_map50,instance_transfer_miou"),
            std::string::npos);

  const CliResult viz = cli("export-viz " + (work / "out/models/model_001").string() + " " +
                                (work / "model.ply").string(),
                            work);
  EXPECT_EQ(viz.code, 0) << viz.err;
  EXPECT_GT(ply::read(work / "model.ply").size(), 0u);
}

TEST(Cli, SingleTimestepIsBootstrapOnly) {
  const fs::path work = scratch("cli_single");
  synth::SceneScript s = two_object_scene();
  s.steps.clear();
  write_scene(s, work / "scene");
  const CliResult r = cli("run " + (work / "scene").string() + " " + (work / "out").string(), work);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("processed 0 step(s)"), std::string::npos);
  EXPECT_TRUE(fs::exists(work / "out/models/model_000/model.json"));
  EXPECT_FALSE(fs::exists(work / "out/models/model_001"));
}

TEST(Cli, ExitCodes) {
  const fs::path work = scratch("cli_codes");
  const fs::path scene = write_scene(two_object_scene(), work / "scene");

  // usage
  EXPECT_EQ(cli("", work).code, 2);
  EXPECT_EQ(cli("frobnicate", work).code, 2);
  EXPECT_EQ(cli("export-viz a b --viz-mode depth", work).code, 2);

  // missing t0 labels: a pipeline failure
  fs::create_directories(work / "unlabeled");
  fs::copy_file(scene / "scan_001.ply", work / "unlabeled" / "scan_000.ply");
  const CliResult boot = cli("run " + (work / "unlabeled").string() + " " + (work / "o1").string(), work);
  EXPECT_EQ(boot.code, 1);
  EXPECT_NE(boot.err.find("bootstrap requires labels"), std::string::npos) << boot.err;

  // corrupt scan
  std::ofstream(work / "corrupt.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nend_header\n1 2\n";
  save_model(bootstrap_from(ply::read(scene / "scan_000.ply")), work / "model");
  const CliResult bad = cli("induct " + (work / "model").string() + " " + (work / "corrupt.ply").string() +
                                " " + (work / "o2").string(),
                            work);
  EXPECT_EQ(bad.code, 2);
  EXPECT_FALSE(bad.err.empty());

  // unknown config key
  std::ofstream(work / "bad.json") << R"({"objective": {"w_x": 1}})";
  const CliResult cfg = cli("run " + scene.string() + " " + (work / "o3").string() + " --config " +
                                (work / "bad.json").string(),
                            work);
  EXPECT_EQ(cfg.code, 2);
  EXPECT_NE(cfg.err.find("w_x"), std::string::npos);

  // locked model directory
  {
    const DirectoryLock held(work / "model");
    EXPECT_EQ(cli("induct " + (work / "model").string() + " " + (scene / "scan_001.ply").string() +
                      " " + (work / "o4").string(),
                  work)
                  .code,
              2);
  }

  // empty prediction directory
  fs::create_directories(work / "empty");
  EXPECT_EQ(cli("evaluate " + (work / "empty").string() + " " + scene.string(), work).code, 2);
}
