#pragma once

#include "rescan/core/point_cloud.hpp"
#include "rescan/eval/hungarian.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <vector>

namespace rescan {

/// A relabeling of ground-truth instance ids (gt id -> id expected in the
/// prediction). Ids missing from the map are kept.
using InstancePermutation = std::map<int, int>;

inline int permuted(const InstancePermutation& p, int id) {
  const auto it = p.find(id);
  return it == p.end() ? id : it->second;
}

/// Mean IoU over the classes present in the ground truth. Points with an
/// unlabeled ground truth are ignored; the static class is left out of the
/// mean unless `include_static`.
inline double semantic_label_miou(std::span<const int> pred, std::span<const int> gt,
                                  bool include_static = false) {
  if (pred.size() != gt.size()) throw Error("semantic mIoU: point counts differ");
  std::set<int> classes;
  for (int c : gt) {
    if (c == kUnlabeledClass || (c == kStaticClass && !include_static)) continue;
    classes.insert(c);
  }
  if (classes.empty()) return 1.0;
  double sum = 0.0;
  for (int c : classes) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == kUnlabeledClass) continue;
      const bool a = pred[i] == c, b = gt[i] == c;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
    sum += static_cast<double>(inter) / static_cast<double>(uni);
  }
  return sum / static_cast<double>(classes.size());
}

/// Point sets of every object instance in a labeling, keyed by instance id.
struct InstanceSet {
  int id = 0;
  int semantic_class = 0;
  std::vector<std::size_t> points;  // sorted
};

inline std::vector<InstanceSet> instances_of(std::span<const int> semantic,
                                             std::span<const int> instance) {
  std::map<int, InstanceSet> sets;
  std::map<int, std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < instance.size(); ++i) {
    const int u = instance[i];
    const int c = semantic[i];
    if (u == kUnassignedInstance || c == kStaticClass || c == kUnlabeledClass) continue;
    sets[u].id = u;
    sets[u].points.push_back(i);
    ++votes[u][c];
  }
  std::vector<InstanceSet> out;
  for (auto& [u, s] : sets) {
    const auto& v = votes[u];
    s.semantic_class = std::max_element(v.begin(), v.end(), [](const auto& a, const auto& b) {
                         return a.second < b.second;
                       })->first;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::size_t intersection_size(const std::vector<std::size_t>& a,
                                     const std::vector<std::size_t>& b) {
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return inter;
}

inline double set_iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Average precision of one class from confidence-ranked detections, using
/// the ScanNet benchmark's precision/recall sampling and step integration.
inline double scannet_average_precision(std::vector<std::pair<double, bool>> detections,
                                        std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::size_t matched = 0;
  for (const auto& d : detections) matched += d.second ? 1 : 0;
  const std::size_t hard_false_negatives = num_gt - matched;
  if (detections.empty()) return 0.0;

  std::stable_sort(detections.begin(), detections.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t num_examples = detections.size();
  std::vector<double> cumsum(num_examples + 1, 0.0);  // trailing 0 mirrors numpy's [-1]
  double run = 0.0;
  for (std::size_t i = 0; i < num_examples; ++i) {
    run += detections[i].second ? 1.0 : 0.0;
    cumsum[i] = run;
  }
  const double num_true = run;
  std::vector<std::size_t> unique_idx;
  for (std::size_t i = 0; i < num_examples; ++i) {
    if (i == 0 || detections[i].first != detections[i - 1].first) unique_idx.push_back(i);
  }
  const std::size_t k = unique_idx.size() + 1;
  std::vector<double> precision(k, 0.0), recall(k, 0.0);
  for (std::size_t r = 0; r < unique_idx.size(); ++r) {
    const std::size_t idx = unique_idx[r];
    const double cs = idx == 0 ? cumsum[num_examples] : cumsum[idx - 1];
    const double tp = num_true - cs;
    const double fp = static_cast<double>(num_examples - idx) - tp;
    const double fn = cs + static_cast<double>(hard_false_negatives);
    precision[r] = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    recall[r] = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  }
  precision[k - 1] = 1.0;
  recall[k - 1] = 0.0;
  std::vector<double> conv;
  conv.push_back(recall[0]);
  conv.insert(conv.end(), recall.begin(), recall.end());
  conv.push_back(0.0);
  double ap = 0.0;
  for (std::size_t i = 0; i < k; ++i) ap += precision[i] * 0.5 * (conv[i] - conv[i + 2]);
  return ap;
}

/// Instance AP at IoU 0.5 averaged over the ground-truth classes.
/// Predictions are ranked by confidence (instance id -> confidence; missing
/// ids count as 1) and greedily matched to unmatched ground-truth instances
/// of their class.
inline double instance_map50(std::span<const int> pred_semantic, std::span<const int> pred_instance,
                             const std::map<int, double>& confidence,
                             std::span<const int> gt_semantic, std::span<const int> gt_instance) {
  if (pred_semantic.size() != gt_semantic.size() || pred_instance.size() != gt_instance.size() ||
      pred_semantic.size() != pred_instance.size()) {
    throw Error("instance mAP: point counts differ");
  }
  const auto gts = instances_of(gt_semantic, gt_instance);
  const auto preds = instances_of(pred_semantic, pred_instance);
  std::set<int> classes;
  for (const InstanceSet& g : gts) classes.insert(g.semantic_class);
  if (classes.empty()) return preds.empty() ? 1.0 : 0.0;

  double sum = 0.0;
  for (int c : classes) {
    std::vector<const InstanceSet*> g_c, p_c;
    for (const InstanceSet& g : gts) {
      if (g.semantic_class == c) g_c.push_back(&g);
    }
    for (const InstanceSet& p : preds) {
      if (p.semantic_class == c) p_c.push_back(&p);
    }
    auto conf = [&](const InstanceSet* p) {
      const auto it = confidence.find(p->id);
      return it == confidence.end() ? 1.0 : it->second;
    };
    std::stable_sort(p_c.begin(), p_c.end(),
                     [&](const InstanceSet* a, const InstanceSet* b) { return conf(a) > conf(b); });
    std::vector<char> used(g_c.size(), 0);
    std::vector<std::pair<double, bool>> detections;
    for (const InstanceSet* p : p_c) {
      double best = 0.5;
      int pick = -1;
      for (std::size_t gi = 0; gi < g_c.size(); ++gi) {
        if (used[gi]) continue;
        const double iou = set_iou(p->points, g_c[gi]->points);
        if (iou >= best) {
          if (pick < 0 || iou > best) pick = static_cast<int>(gi);
          best = iou;
        }
      }
      if (pick >= 0) used[static_cast<std::size_t>(pick)] = 1;
      detections.emplace_back(conf(p), pick >= 0);
    }
    sum += scannet_average_precision(std::move(detections), g_c.size());
  }
  return sum / static_cast<double>(classes.size());
}

/// Predicted and ground-truth instance labels of one timestep.
struct InstanceFrame {
  std::span<const int> pred_instance;
  std::span<const int> gt_semantic;
  std::span<const int> gt_instance;
};

/// Instance transfer IoU: for each allowed permutation, the IoU between the
/// points predicted with id perm(g) and the ground-truth points of instance
/// g, averaged over all ground-truth instances of all frames (or pooled over
/// points); the best permutation is reported. One permutation applies to
/// every frame, since ids must be stable over time.
inline double instance_transfer_miou(std::span<const InstanceFrame> frames,
                                     std::vector<InstancePermutation> permutations,
                                     bool pooled = false) {
  if (permutations.empty()) permutations.push_back({});
  struct GtInstance {
    std::size_t frame;
    InstanceSet set;
  };
  std::vector<GtInstance> gts;
  std::vector<std::map<int, std::vector<std::size_t>>> pred_sets(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const InstanceFrame& fr = frames[f];
    if (fr.pred_instance.size() != fr.gt_instance.size()) {
      throw Error("instance transfer: point counts differ");
    }
    for (InstanceSet& s : instances_of(fr.gt_semantic, fr.gt_instance)) {
      gts.push_back({f, std::move(s)});
    }
    for (std::size_t i = 0; i < fr.pred_instance.size(); ++i) {
      if (fr.pred_instance[i] != kUnassignedInstance) pred_sets[f][fr.pred_instance[i]].push_back(i);
    }
  }
  if (gts.empty()) return 1.0;
  const std::vector<std::size_t> none;
  double best = 0.0;
  for (const InstancePermutation& perm : permutations) {
    double sum = 0.0, inter_sum = 0.0, union_sum = 0.0;
    for (const GtInstance& g : gts) {
      const auto it = pred_sets[g.frame].find(permuted(perm, g.set.id));
      const std::vector<std::size_t>& p = it == pred_sets[g.frame].end() ? none : it->second;
      const std::size_t inter = intersection_size(p, g.set.points);
      const std::size_t uni = p.size() + g.set.points.size() - inter;
      sum += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      inter_sum += static_cast<double>(inter);
      union_sum += static_cast<double>(uni);
    }
    const double v = pooled ? (union_sum > 0.0 ? inter_sum / union_sum : 0.0)
                            : sum / static_cast<double>(gts.size());
    best = std::max(best, v);
  }
  return best;
}

inline double instance_transfer_miou(std::span<const int> pred_instance,
                                     std::span<const int> gt_semantic,
                                     std::span<const int> gt_instance,
                                     std::vector<InstancePermutation> permutations,
                                     bool pooled = false) {
  const InstanceFrame frame{pred_instance, gt_semantic, gt_instance};
  return instance_transfer_miou(std::span<const InstanceFrame>(&frame, 1), std::move(permutations),
                                pooled);
}

/// One candidate pose reduced to what the precision/recall protocol needs.
struct PoseCandidate {
  int semantic_class = 0;
  Vec3 center = Vec3::Zero();
  /// 0-based rank within its object's proposal list.
  std::size_t rank = 0;
};

struct PrPoint {
  std::size_t cutoff = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t proposals = 0;
};

/// Precision/recall of proposals ranked below each cutoff. A proposal is a
/// true positive if its center lies within `max_dist` of a ground-truth
/// object center of the same class; each ground-truth object matches at most
/// one proposal (maximum matching).
inline std::vector<PrPoint> pose_pr(std::span<const PoseCandidate> proposals,
                                    std::span<const PoseCandidate> ground_truth,
                                    std::span<const std::size_t> cutoffs, double max_dist = 0.2) {
  std::vector<PrPoint> out;
  for (std::size_t cutoff : cutoffs) {
    std::vector<const PoseCandidate*> kept;
    for (const PoseCandidate& p : proposals) {
      if (p.rank < cutoff) kept.push_back(&p);
    }
    PrPoint pt;
    pt.cutoff = cutoff;
    pt.proposals = kept.size();
    if (!kept.empty() && !ground_truth.empty()) {
      CostMatrix cost(ground_truth.size(), std::vector<double>(kept.size(), 1.0));
      for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        for (std::size_t k = 0; k < kept.size(); ++k) {
          if (kept[k]->semantic_class == ground_truth[g].semantic_class &&
              (kept[k]->center - ground_truth[g].center).norm() < max_dist) {
            cost[g][k] = 0.0;
          }
        }
      }
      const Assignment a = hungarian_assign(cost);
      for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        const int k = a.row_to_col[g];
        if (k >= 0 && cost[g][static_cast<std::size_t>(k)] == 0.0) ++pt.true_positives;
      }
    }
    const auto tp = static_cast<double>(pt.true_positives);
    pt.precision = kept.empty() ? 0.0 : tp / static_cast<double>(kept.size());
    pt.recall = ground_truth.empty() ? 1.0 : tp / static_cast<double>(ground_truth.size());
    out.push_back(pt);
  }
  return out;
}

}  // namespace rescan
