#pragma once

// AP from an explicit precision-recall curve: rank, label each detection TP/FP,
// then integrate precision over recall steps.

#include <algorithm>
#include <numeric>
#include <vector>

#include "a2clpt/evaluator.hpp"

namespace testsupport {

inline double oracle_iou(const a2clpt::Detection& d, const a2clpt::GroundTruth& g) {
  const double lo = static_cast<double>(std::max(d.start, g.start));
  const double hi = static_cast<double>(std::min(d.end, g.end));
  const double inter = std::max(0.0, hi - lo + 1.0);
  const double total = static_cast<double>((d.end - d.start + 1) + (g.end - g.start + 1));
  return inter / (total - inter);
}

inline double oracle_ap(std::vector<a2clpt::Detection> dets, const std::vector<a2clpt::GroundTruth>& gts,
                        double thr) {
  if (gts.empty()) return 0.0;
  std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.start != b.start) return a.start < b.start;
    return a.video < b.video;
  });
  std::vector<int> used(gts.size(), 0);
  std::vector<double> precision, recall;
  double tp = 0.0, fp = 0.0;
  for (const auto& d : dets) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video != d.video) continue;
      const double o = oracle_iou(d, gts[g]);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= thr) {
      used[static_cast<std::size_t>(best)] = 1;
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(gts.size()));
  }
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    area += precision[i] * (recall[i] - prev_recall);
    prev_recall = recall[i];
  }
  return area;
}

}  // namespace testsupport
