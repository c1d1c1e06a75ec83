#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "a2clpt/data.hpp"
#include "a2clpt/localizer.hpp"

namespace a2clpt {

struct GroundTruth {
  std::string video;
  int cls = 0;
  Index start = 1;
  Index end = 1;
};

std::vector<GroundTruth> ground_truth_of(const Dataset& ds);

/// Temporal IoU of inclusive integer intervals, |[s, e]| = e - s + 1.
double iou(Index a_start, Index a_end, Index b_start, Index b_end);

/// All-point AP for one class. Detections are ranked by confidence (ties: earlier start,
/// then lower video id) and greedily matched to the highest-IoU unmatched ground truth of
/// the same video. Returns nullopt when there is neither ground truth nor a detection.
std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts, double threshold);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;             // classes present in the ground truth
  std::vector<std::vector<double>> ap;  // [threshold][class slot]
  std::vector<double> map;              // per threshold
  double average_map = 0.0;
};

EvalReport map_over_thresholds(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                               const std::vector<double>& grid, int num_classes);

/// "lo:step:hi" inclusive, e.g. "0.1:0.1:0.9".
std::vector<double> parse_grid(const std::string& spec);

/// Aligned table followed by a `# threshold,class,ap` block (class 1-based).
void write_eval_report(std::ostream& out, const EvalReport& r);

}  // namespace a2clpt
