#pragma once

#include "rescan/eval/metrics.hpp"
#include "rescan/io/ply.hpp"
#include "rescan/model/model_io.hpp"
#include "rescan/pipeline/induction.hpp"
#include "rescan/synth/generator.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace rescan {

namespace fs = std::filesystem;

/// Exclusive claim on a model directory for the duration of one step.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".rescan.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) throw IoError("model directory is locked: " + path_.string());
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

inline std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan_%03zu", t);
  return buf;
}

/// scan_*.ply files of a directory in name order.
inline std::vector<fs::path> list_scans(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("scan_", 0) == 0 && e.path().extension() == ".ply") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string confidence_csv(const std::map<int, double>& conf) {
  std::ostringstream s;
  s << "instance,confidence\n" << std::setprecision(17);
  for (const auto& [id, c] : conf) s << id << ',' << c << '\n';
  return s.str();
}

inline std::map<int, double> read_confidence_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<int, double> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument(line);
      out[std::stoi(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IoError("parse error: " + path.string() + ": bad line '" + line + "'");
    }
  }
  return out;
}

/// Writes the outputs of one step under `out`:
///   labels/scan_XXX.ply, reports/scan_XXX.json, reports/scan_XXX.timing.json,
///   confidence/scan_XXX.csv, traces/scan_XXX.csv (if traced), models/model_XXX/.
inline void write_step(const fs::path& out, const StepOutput& step, bool trace) {
  const std::string name = frame_name(step.report.timestep);
  fs::create_directories(out / "labels");
  fs::create_directories(out / "reports");
  fs::create_directories(out / "confidence");
  ply::write(out / "labels" / (name + ".ply"), step.labeled);
  write_text(out / "reports" / (name + ".json"), to_json(step.report).dump(2) + "\n");
  write_text(out / "reports" / (name + ".timing.json"), to_json(step.timing).dump(2) + "\n");
  write_text(out / "confidence" / (name + ".csv"), confidence_csv(step.confidence));
  if (trace) {
    fs::create_directories(out / "traces");
    std::ofstream tr(out / "traces" / (name + ".csv"));
    if (!tr) throw IoError("cannot write trace for " + name);
    write_trace_csv(tr, step.trace);
  }
  save_model(step.model, out / "models" / ("model_" + name.substr(5)));
}

inline TemporalModel bootstrap_from(const PointCloud& scan) {
  if (!scan.has_labels()) throw PipelineError("bootstrap", "bootstrap requires labels");
  try {
    return bootstrap(scan);
  } catch (const std::exception& e) {
    throw PipelineError("bootstrap", e.what());
  }
}

struct RunSummary {
  std::size_t steps = 0;
  fs::path final_model;
};

/// Bootstraps from scan_000 (which must carry labels) and inducts every later
/// scan in order. Stops at the first failure; outputs of completed steps stay.
inline RunSummary run_sequence(const fs::path& scene_dir, const fs::path& out,
                               const PipelineConfig& cfg, bool trace = false) {
  const std::vector<fs::path> scans = list_scans(scene_dir);
  if (scans.empty()) throw IoError("no scan_*.ply files in " + scene_dir.string());
  fs::create_directories(out / "labels");
  const PointCloud first = ply::read(scans.front());
  TemporalModel model = bootstrap_from(first);
  {
    const fs::path m0 = out / "models" / "model_000";
    const DirectoryLock lock(m0);
    save_model(model, m0);
  }
  ply::write(out / "labels" / (frame_name(0) + ".ply"), first);
  fs::create_directories(out / "confidence");
  std::map<int, double> ones;
  for (const ObjectInstance& o : model.objects()) ones[o.id()] = 1.0;
  write_text(out / "confidence" / (frame_name(0) + ".csv"), confidence_csv(ones));

  PipelineConfig c = cfg;
  c.anneal.record_trace = trace;
  RunSummary sum;
  sum.final_model = out / "models" / "model_000";
  for (std::size_t t = 1; t < scans.size(); ++t) {
    PointCloud scan = ply::read(scans[t]);
    StepOutput step = induct(model, std::move(scan), c);
    const fs::path mdir = out / "models" / ("model_" + frame_name(t).substr(5));
    {
      const DirectoryLock lock(mdir);
      write_step(out, step, trace);
    }
    model = std::move(step.model);
    sum.final_model = mdir;
    ++sum.steps;
  }
  return sum;
}

struct FrameMetrics {
  std::string frame;
  double semantic = 0.0;
  double map50 = 0.0;
  double transfer = 0.0;
};

struct EvaluationResult {
  std::vector<FrameMetrics> frames;
  /// Means of the per-frame semantic and mAP values; transfer is computed
  /// jointly over all frames with one shared permutation.
  double semantic = 0.0;
  double map50 = 0.0;
  double transfer = 0.0;
};

struct EvaluationOptions {
  bool include_static = false;
  bool pooled_transfer = false;
  /// Score scan_000 too; it is the bootstrap input and excluded by default
  /// whenever later frames exist.
  bool include_first = false;
};

/// Metrics of already loaded frames. `pred` and `gt` are aligned labeled
/// clouds; `confidence` may be empty (all predictions confidence 1).
inline EvaluationResult evaluate_frames(const std::vector<std::string>& names,
                                        const std::vector<PointCloud>& pred,
                                        const std::vector<PointCloud>& gt,
                                        const std::vector<std::map<int, double>>& confidence,
                                        const std::vector<InstancePermutation>& permutations,
                                        const EvaluationOptions& opt = {}) {
  if (pred.size() != gt.size() || names.size() != pred.size()) {
    throw Error("evaluate: frame counts differ");
  }
  if (pred.empty()) throw Error("evaluate: no frames");
  EvaluationResult res;
  std::vector<InstanceFrame> frames;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const PointCloud& p = pred[f];
    const PointCloud& g = gt[f];
    if (!p.has_labels() || !g.has_labels()) throw Error("evaluate: " + names[f] + ": labels required");
    if (p.size() != g.size()) throw Error("evaluate: " + names[f] + ": point counts differ");
    FrameMetrics m;
    m.frame = names[f];
    m.semantic = semantic_label_miou(p.semantic, g.semantic, opt.include_static);
    std::map<int, double> conf;
    if (f < confidence.size()) conf = confidence[f];
    m.map50 = instance_map50(p.semantic, p.instance, conf, g.semantic, g.instance);
    m.transfer = instance_transfer_miou(p.instance, g.semantic, g.instance, permutations,
                                        opt.pooled_transfer);
    res.semantic += m.semantic;
    res.map50 += m.map50;
    res.frames.push_back(m);
    frames.push_back({p.instance, g.semantic, g.instance});
  }
  res.semantic /= static_cast<double>(pred.size());
  res.map50 /= static_cast<double>(pred.size());
  res.transfer = instance_transfer_miou(frames, permutations, opt.pooled_transfer);
  return res;
}

inline fs::path labels_dir(const fs::path& dir) {
  return list_scans(dir / "labels").empty() ? dir : dir / "labels";
}

inline fs::path gt_labels_dir(const fs::path& dir) {
  return list_scans(dir / "gt").empty() ? dir : dir / "gt";
}

inline std::vector<InstancePermutation> load_permutations(const fs::path& gt_dir) {
  for (const fs::path& p : {gt_dir / "gt" / "ground_truth.json", gt_dir / "ground_truth.json"}) {
    if (fs::exists(p)) return synth::load_ground_truth(p).permutations;
  }
  return {InstancePermutation{}};
}

/// Compares the labeled scans of a prediction directory (a `run` output or
/// a plain directory of scan_*.ply) against a ground-truth directory (a
/// synthetic scene directory or a plain directory of labeled scans).
inline EvaluationResult evaluate_dirs(const fs::path& pred_dir, const fs::path& gt_dir,
                                      const EvaluationOptions& opt = {}) {
  const std::vector<fs::path> preds = list_scans(labels_dir(pred_dir));
  if (preds.empty()) throw IoError("no labeled scans in " + pred_dir.string());
  const fs::path gdir = gt_labels_dir(gt_dir);
  std::vector<std::string> names;
  std::vector<PointCloud> pred, gt;
  std::vector<std::map<int, double>> conf;
  for (const fs::path& p : preds) {
    const std::string stem = p.stem().string();
    if (!opt.include_first && preds.size() > 1 && stem == frame_name(0)) continue;
    const fs::path g = gdir / p.filename();
    if (!fs::exists(g)) throw IoError("no ground truth for " + p.filename().string());
    names.push_back(stem);
    pred.push_back(ply::read(p));
    gt.push_back(ply::read(g));
    const fs::path c = pred_dir / "confidence" / (stem + ".csv");
    conf.push_back(fs::exists(c) ? read_confidence_csv(c) : std::map<int, double>{});
  }
  return evaluate_frames(names, pred, gt, conf, load_permutations(gt_dir), opt);
}

/// Machine-readable table: one row per frame, then a "mean" row whose
/// transfer column is the joint shared-permutation value.
inline std::string metrics_table(const EvaluationResult& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6);
  s << "frame,semantic_miou,instance_map50,instance_transfer_miou\n";
  for (const FrameMetrics& f : r.frames) {
    s << f.frame << ',' << f.semantic << ',' << f.map50 << ',' << f.transfer << '\n';
  }
  s << "mean," << r.semantic << ',' << r.map50 << ',' << r.transfer << '\n';
  return s.str();
}

inline std::string metrics_summary(const EvaluationResult& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  s << r.frames.size() << " frame(s): semantic mIoU " << r.semantic << ", instance mAP@0.5 "
    << r.map50 << ", instance transfer mIoU " << r.transfer << '\n';
  return s.str();
}

}  // namespace rescan
