#pragma once

#include "rescan/core/random.hpp"
#include "rescan/model/temporal_model.hpp"
#include "rescan/objective/objective.hpp"
#include "rescan/proposal/pose_proposal.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace rescan {

/// Candidate poses of one model object in the current scan.
struct PoseSet {
  int id = 0;
  std::vector<ScoredPose> poses;
};

enum class MoveType { Add = 0, Remove = 1, Move = 2, Swap = 3, Restart = 4 };

inline const char* to_string(MoveType m) {
  switch (m) {
    case MoveType::Add: return "add";
    case MoveType::Remove: return "remove";
    case MoveType::Move: return "move";
    case MoveType::Swap: return "swap";
    case MoveType::Restart: return "restart";
  }
  return "?";
}

struct AnnealConfig {
  int iterations = 25000;
  double restart_prob = 0.005;
  double t_start = 0.05;
  double t_end = 0.0;
  /// Relative weights of add, remove, move, swap among applicable moves.
  std::array<double, 4> move_weights{1.0, 1.0, 1.0, 1.0};
  std::uint64_t seed = 1;
  /// A swapped object takes its own candidate pose nearest to the partner's
  /// position, if one lies within this ground-plane distance.
  double swap_radius = 0.2;
  bool record_trace = false;

  void validate() const {
    if (iterations <= 0) throw Error("anneal: iterations must be positive");
    if (!(restart_prob >= 0.0 && restart_prob < 1.0)) {
      throw Error("anneal: restart_prob must lie in [0, 1)");
    }
    if (t_start < 0.0 || t_end < 0.0) throw Error("anneal: temperatures must be non-negative");
    for (double w : move_weights) {
      if (w < 0.0) throw Error("anneal: move weights must be non-negative");
    }
    if (!(swap_radius > 0.0)) throw Error("anneal: swap_radius must be positive");
  }
};

struct TraceRow {
  int iteration = 0;
  double temperature = 0.0;
  double value = 0.0;  // current objective after the step
  bool accepted = false;
  MoveType move = MoveType::Add;
};

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "iter,T,O,accepted,move\n";
  out.precision(17);
  for (const TraceRow& r : rows) {
    out << r.iteration << ',' << r.temperature << ',' << r.value << ',' << (r.accepted ? 1 : 0)
        << ',' << to_string(r.move) << '\n';
  }
}

/// Per pose set, the index of the chosen pose or -1 when the object is not
/// placed; plus the objective of that choice.
struct SearchState {
  std::vector<int> choice;
  ObjectiveValue value;

  [[nodiscard]] std::size_t placed_count() const {
    std::size_t n = 0;
    for (int c : choice) n += c >= 0 ? 1 : 0;
    return n;
  }
};

/// Objective evaluation over a fixed candidate set with cached per-pose
/// terms and incremental coverage counts.
class ArrangementSearch {
 public:
  ArrangementSearch(std::vector<PoseSet> sets, const VoxelGrid& grid, const TemporalModel& model,
                    const ObjectiveWeights& weights, std::size_t timestep, double swap_radius = 0.2)
      : sets_(std::move(sets)), weights_(weights), timestep_(timestep) {
    weights_.validate();
    scene_cells_ = grid.occupied_count();
    cell_hits_.assign(grid.cell_count(), 0);
    for (const PoseSet& s : sets_) {
      const ObjectInstance& obj = model.resolve(s.id);
      Entry e;
      e.semantic_class = obj.semantic_class();
      for (const ScoredPose& sp : s.poses) {
        if (!(sp.score >= 0.0 && sp.score <= 1.0)) throw Error("pose score outside [0, 1]");
        PoseData d;
        d.cells = covered_cells(grid, obj.geometry().points, sp.pose);
        d.hysteresis = hysteresis_score({s.id, sp.pose, sp.score}, model, weights_.h,
                                        weights_.sigma_h, weights_.squared_hysteresis);
        d.stats = posed_stats(obj.stats(), sp.pose);
        e.poses.push_back(std::move(d));
      }
      entries_.push_back(std::move(e));
    }
    // nearest_[a][b][lb]: pose of a closest to pose lb of b, or -1.
    const std::size_t n = sets_.size();
    nearest_.assign(n, std::vector<std::vector<int>>(n));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b || entries_[a].semantic_class != entries_[b].semantic_class) continue;
        auto& table = nearest_[a][b];
        table.assign(sets_[b].poses.size(), -1);
        for (std::size_t lb = 0; lb < sets_[b].poses.size(); ++lb) {
          const GroundPose& target = sets_[b].poses[lb].pose;
          double best = swap_radius;
          for (std::size_t la = 0; la < sets_[a].poses.size(); ++la) {
            const GroundPose& p = sets_[a].poses[la].pose;
            const double d = std::hypot(p.tx - target.tx, p.ty - target.ty);
            if (d <= best) {
              if (d < best || table[lb] < 0) table[lb] = static_cast<int>(la);
              best = d;
            }
          }
        }
      }
    }
    choice_.assign(n, -1);
  }

  [[nodiscard]] const std::vector<PoseSet>& sets() const noexcept { return sets_; }
  [[nodiscard]] const std::vector<int>& choice() const noexcept { return choice_; }
  [[nodiscard]] int semantic_class(std::size_t k) const { return entries_[k].semantic_class; }
  [[nodiscard]] std::size_t pose_count(std::size_t k) const { return sets_[k].poses.size(); }

  /// Pose of set a nearest to b's current pose, or -1.
  [[nodiscard]] int swap_target(std::size_t a, std::size_t b) const {
    if (choice_[b] < 0 || nearest_[a][b].empty()) return -1;
    return nearest_[a][b][static_cast<std::size_t>(choice_[b])];
  }

  void set(std::size_t k, int pose) {
    if (choice_[k] == pose) return;
    if (choice_[k] >= 0) {
      for (std::uint32_t c : entries_[k].poses[static_cast<std::size_t>(choice_[k])].cells) {
        if (--cell_hits_[c] == 0) --covered_;
      }
    }
    choice_[k] = pose;
    if (pose >= 0) {
      for (std::uint32_t c : entries_[k].poses[static_cast<std::size_t>(pose)].cells) {
        if (cell_hits_[c]++ == 0) ++covered_;
      }
    }
  }

  void assign(const std::vector<int>& choice) {
    for (std::size_t k = 0; k < choice.size(); ++k) set(k, choice[k]);
  }

  [[nodiscard]] ObjectiveValue value() const {
    ObjectiveValue v;
    v.terms.no_dynamic_content = scene_cells_ == 0;
    v.terms.coverage = scene_cells_ == 0 ? 0.0
                                         : static_cast<double>(covered_) /
                                               static_cast<double>(scene_cells_);
    double score_sum = 0.0, hyst_sum = 0.0;
    std::size_t n = 0;
    posed_.clear();
    for (std::size_t k = 0; k < choice_.size(); ++k) {
      if (choice_[k] < 0) continue;
      const auto l = static_cast<std::size_t>(choice_[k]);
      score_sum += sets_[k].poses[l].score;
      hyst_sum += entries_[k].poses[l].hysteresis;
      posed_.push_back(entries_[k].poses[l].stats);
      ++n;
    }
    if (n > 0) {
      v.terms.geometry = score_sum / static_cast<double>(n);
      v.terms.hysteresis = hyst_sum / static_cast<double>(n);
    }
    v.terms.intersection = intersection_term(posed_, weights_.sigma_r);
    v.total = combine_terms(v.terms, weights_);
    return v;
  }

  [[nodiscard]] Arrangement arrangement(const std::vector<int>& choice) const {
    Arrangement a;
    a.timestep = timestep_;
    for (std::size_t k = 0; k < choice.size(); ++k) {
      if (choice[k] < 0) continue;
      const ScoredPose& sp = sets_[k].poses[static_cast<std::size_t>(choice[k])];
      a.placements.push_back({sets_[k].id, sp.pose, sp.score});
    }
    std::sort(a.placements.begin(), a.placements.end(),
              [](const PosedObject& x, const PosedObject& y) { return x.id < y.id; });
    return a;
  }

 private:
  struct PoseData {
    std::vector<std::uint32_t> cells;
    double hysteresis = 0.0;
    PosedStats stats;
  };
  struct Entry {
    int semantic_class = 0;
    std::vector<PoseData> poses;
  };

  std::vector<PoseSet> sets_;
  ObjectiveWeights weights_;
  std::size_t timestep_;
  std::vector<Entry> entries_;
  std::vector<std::vector<std::vector<int>>> nearest_;
  std::size_t scene_cells_ = 0;
  std::vector<std::uint32_t> cell_hits_;
  std::size_t covered_ = 0;
  std::vector<int> choice_;
  mutable std::vector<PosedStats> posed_;
};

/// Adds, one at a time, the (object, pose) with the largest objective gain
/// until no addition improves the objective.
inline SearchState greedy_init(ArrangementSearch& search) {
  search.assign(std::vector<int>(search.sets().size(), -1));
  SearchState st;
  st.choice = search.choice();
  st.value = search.value();
  while (true) {
    double best_gain = 0.0;
    int best_k = -1, best_l = -1;
    for (std::size_t k = 0; k < search.sets().size(); ++k) {
      if (search.choice()[k] >= 0) continue;
      for (std::size_t l = 0; l < search.pose_count(k); ++l) {
        search.set(k, static_cast<int>(l));
        const double gain = search.value().total - st.value.total;
        search.set(k, -1);
        if (gain > best_gain) {
          best_gain = gain;
          best_k = static_cast<int>(k);
          best_l = static_cast<int>(l);
        }
      }
    }
    if (best_k < 0) break;
    search.set(static_cast<std::size_t>(best_k), best_l);
    st.choice = search.choice();
    st.value = search.value();
  }
  return st;
}

struct AnnealStats {
  int accepted = 0;
  int improved_best = 0;
  int restarts = 0;
  std::vector<TraceRow> trace;
};

/// Metropolis search from `init` over Add/Remove/Move/Swap moves with a
/// linear cooling schedule; returns the best state visited.
inline SearchState anneal(ArrangementSearch& search, const SearchState& init,
                          const AnnealConfig& cfg, AnnealStats* stats = nullptr) {
  cfg.validate();
  AnnealStats local;
  AnnealStats& st = stats ? *stats : local;
  st = {};
  Rng rng(cfg.seed);
  const std::size_t n = search.sets().size();

  search.assign(init.choice);
  SearchState current{search.choice(), search.value()};
  SearchState best = current;

  std::vector<std::size_t> placed, addable, movable;
  std::vector<std::pair<std::size_t, std::size_t>> swappable;
  std::vector<std::pair<std::size_t, int>> changes;

  for (int it = 0; it < cfg.iterations; ++it) {
    const double frac = static_cast<double>(it) / static_cast<double>(cfg.iterations);
    const double temperature = cfg.t_start + (cfg.t_end - cfg.t_start) * frac;

    if (cfg.restart_prob > 0.0 && rng.uniform() < cfg.restart_prob) {
      search.assign(best.choice);
      current = best;
      ++st.restarts;
      if (cfg.record_trace) {
        st.trace.push_back({it, temperature, current.value.total, true, MoveType::Restart});
      }
      continue;
    }

    placed.clear();
    addable.clear();
    movable.clear();
    swappable.clear();
    for (std::size_t k = 0; k < n; ++k) {
      const int c = search.choice()[k];
      if (c >= 0) {
        placed.push_back(k);
        if (search.pose_count(k) >= 2) movable.push_back(k);
      } else if (search.pose_count(k) > 0) {
        addable.push_back(k);
      }
    }
    for (std::size_t i = 0; i < placed.size(); ++i) {
      for (std::size_t j = i + 1; j < placed.size(); ++j) {
        const std::size_t a = placed[i], b = placed[j];
        if (search.semantic_class(a) != search.semantic_class(b)) continue;
        const int la = search.swap_target(a, b);
        const int lb = search.swap_target(b, a);
        if (la >= 0 && lb >= 0) swappable.emplace_back(a, b);
      }
    }
    const std::array<bool, 4> applicable{!addable.empty(), !placed.empty(), !movable.empty(),
                                         !swappable.empty()};
    double total_weight = 0.0;
    for (int m = 0; m < 4; ++m) total_weight += applicable[m] ? cfg.move_weights[m] : 0.0;
    if (total_weight <= 0.0) break;
    double pick = rng.uniform() * total_weight;
    int move = 0;
    for (int m = 0; m < 4; ++m) {
      if (!applicable[m] || cfg.move_weights[m] <= 0.0) continue;
      move = m;
      if (pick < cfg.move_weights[m]) break;
      pick -= cfg.move_weights[m];
    }

    changes.clear();
    switch (static_cast<MoveType>(move)) {
      case MoveType::Add: {
        const std::size_t k = addable[rng.index(addable.size())];
        changes.emplace_back(k, static_cast<int>(rng.index(search.pose_count(k))));
        break;
      }
      case MoveType::Remove:
        changes.emplace_back(placed[rng.index(placed.size())], -1);
        break;
      case MoveType::Move: {
        const std::size_t k = movable[rng.index(movable.size())];
        const auto cur = static_cast<std::size_t>(search.choice()[k]);
        std::size_t l = rng.index(search.pose_count(k) - 1);
        if (l >= cur) ++l;
        changes.emplace_back(k, static_cast<int>(l));
        break;
      }
      case MoveType::Swap: {
        const auto [a, b] = swappable[rng.index(swappable.size())];
        changes.emplace_back(a, search.swap_target(a, b));
        changes.emplace_back(b, search.swap_target(b, a));
        break;
      }
      case MoveType::Restart:
        break;
    }

    std::vector<std::pair<std::size_t, int>> undo;
    for (const auto& [k, l] : changes) undo.emplace_back(k, search.choice()[k]);
    for (const auto& [k, l] : changes) search.set(k, l);
    const ObjectiveValue v = search.value();
    const double delta = v.total - current.value.total;
    bool accept = delta >= 0.0;
    if (!accept && temperature > 0.0) accept = rng.uniform() < std::exp(delta / temperature);
    if (accept) {
      ++st.accepted;
      current.choice = search.choice();
      current.value = v;
      if (v.total > best.value.total) {
        best = current;
        ++st.improved_best;
      }
    } else {
      for (auto it2 = undo.rbegin(); it2 != undo.rend(); ++it2) search.set(it2->first, it2->second);
    }
    if (cfg.record_trace) {
      st.trace.push_back({it, temperature, current.value.total, accept, static_cast<MoveType>(move)});
    }
  }
  search.assign(best.choice);
  return best;
}

struct OptimizationResult {
  Arrangement arrangement;
  ObjectiveValue value;
  ObjectiveValue greedy_value;
  AnnealStats anneal;
};

inline OptimizationResult optimize_arrangement(std::vector<PoseSet> pose_sets,
                                               const VoxelGrid& grid, const TemporalModel& model,
                                               const ObjectiveWeights& weights,
                                               const AnnealConfig& cfg) {
  cfg.validate();
  ArrangementSearch search(std::move(pose_sets), grid, model, weights, model.history().size(),
                           cfg.swap_radius);
  OptimizationResult res;
  const SearchState greedy = greedy_init(search);
  res.greedy_value = greedy.value;
  const SearchState best = anneal(search, greedy, cfg, &res.anneal);
  res.arrangement = search.arrangement(best.choice);
  res.value = best.value;
  return res;
}

}  // namespace rescan
