#include "a2clpt/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace a2clpt {

std::vector<GroundTruth> ground_truth_of(const Dataset& ds) {
  std::vector<GroundTruth> gts;
  for (const auto& v : ds.samples)
    for (const auto& s : v.gt_segments) gts.push_back(GroundTruth{v.id, s.cls, s.start, s.end});
  return gts;
}

double iou(Index a_start, Index a_end, Index b_start, Index b_end) {
  if (a_end < a_start || b_end < b_start) throw InvalidInput("iou: empty interval");
  const Index inter = std::max<Index>(0, std::min(a_end, b_end) - std::max(a_start, b_start) + 1);
  const Index uni = (a_end - a_start + 1) + (b_end - b_start + 1) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts, double threshold) {
  if (gts.empty()) {
    if (dets.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Detection& x = dets[a];
    const Detection& y = dets[b];
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    if (x.start != y.start) return x.start < y.start;
    return x.video < y.video;
  });

  std::vector<bool> matched(gts.size(), false);
  // Extended accumulation so simple ratios such as 5/6 come out correctly rounded.
  long double tp = 0.0L, precision_sum = 0.0L;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Detection& d = dets[order[rank]];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].video != d.video) continue;
      const double o = iou(d.start, d.end, gts[g].start, gts[g].end);
      if (o > best) {
        best = o;
        best_gt = g;
      }
    }
    if (best_gt < gts.size() && best >= threshold) {
      matched[best_gt] = true;
      tp += 1.0L;
      precision_sum += tp / static_cast<long double>(rank + 1);
    }
  }
  return static_cast<double>(precision_sum / static_cast<long double>(gts.size()));
}

EvalReport map_over_thresholds(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                               const std::vector<double>& grid, int num_classes) {
  EvalReport r;
  r.thresholds = grid;
  std::vector<std::vector<Detection>> by_class_det(static_cast<std::size_t>(num_classes));
  std::vector<std::vector<GroundTruth>> by_class_gt(static_cast<std::size_t>(num_classes));
  for (const auto& d : dets) {
    if (d.cls < 0 || d.cls >= num_classes) throw InvalidInput("evaluation: detection class out of range");
    by_class_det[static_cast<std::size_t>(d.cls)].push_back(d);
  }
  for (const auto& g : gts) {
    if (g.cls < 0 || g.cls >= num_classes) throw InvalidInput("evaluation: ground-truth class out of range");
    by_class_gt[static_cast<std::size_t>(g.cls)].push_back(g);
  }
  for (int c = 0; c < num_classes; ++c)
    if (!by_class_gt[static_cast<std::size_t>(c)].empty()) r.classes.push_back(c);

  for (double thr : grid) {
    std::vector<double> row;
    for (int c : r.classes) {
      row.push_back(*average_precision(by_class_det[static_cast<std::size_t>(c)],
                                       by_class_gt[static_cast<std::size_t>(c)], thr));
    }
    double mean = 0.0;
    for (double a : row) mean += a;
    r.map.push_back(row.empty() ? 0.0 : mean / static_cast<double>(row.size()));
    r.ap.push_back(std::move(row));
  }
  double avg = 0.0;
  for (double m : r.map) avg += m;
  r.average_map = r.map.empty() ? 0.0 : avg / static_cast<double>(r.map.size());
  return r;
}

std::vector<double> parse_grid(const std::string& spec) {
  double lo = 0, step = 0, hi = 0;
  char tail = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &lo, &step, &hi, &tail) != 3) {
    throw InvalidInput("grid must look like lo:step:hi, got '" + spec + "'");
  }
  if (!(step > 0.0) || hi < lo || lo < 0.0 || hi > 1.0) throw InvalidInput("grid: invalid range '" + spec + "'");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (long i = 0; i < count; ++i) grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  return grid;
}

void write_eval_report(std::ostream& out, const EvalReport& r) {
  char buf[64];
  out << "IoU    ";
  for (int c : r.classes) {
    std::snprintf(buf, sizeof(buf), "  class%-3d", c + 1);
    out << buf;
  }
  out << "       mAP\n";
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%-7.3f", r.thresholds[t]);
    out << buf;
    for (double a : r.ap[t]) {
      std::snprintf(buf, sizeof(buf), "%10.4f", a);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.4f\n", r.map[t]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "average mAP %.4f\n", r.average_map);
  out << buf;
  out << "# threshold,class,ap\n";
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
    for (std::size_t k = 0; k < r.classes.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.3f,%d,%.6f\n", r.thresholds[t], r.classes[k] + 1, r.ap[t][k]);
      out << buf;
    }
  }
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.3f,mAP,%.6f\n", r.thresholds[t], r.map[t]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "avg,mAP,%.6f\n", r.average_map);
  out << buf;
}

}  // namespace a2clpt
