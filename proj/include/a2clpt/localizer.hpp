#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "a2clpt/data.hpp"
#include "a2clpt/model.hpp"

namespace a2clpt {

/// One localized activity instance. `cls` is 0-based, start/end 1-based inclusive.
struct Detection {
  std::string video;
  int cls = 0;
  Index start = 1;
  Index end = 1;
  double confidence = 0.0;
};

struct Classification {
  Vector scores;              // top-k mean per class
  Vector pmf;                 // softmax(scores)
  std::vector<int> positive;  // classes with score > 0, ascending
};

Classification classify(const Tensor2& c_final, double s);

/// Maximal runs of strictly positive values, 1-based inclusive; runs shorter than
/// min_length are dropped. Zero ends a run.
std::vector<std::pair<Index, Index>> extract_segments(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                                      int min_length = 2);

struct LocalizeConfig {
  double s = 8.0;
  int min_length = 2;
};

/// Detections for one final T-CAM: segments of every positive-score class, scored by
/// segment max plus class score.
std::vector<Detection> localize_tcam(const std::string& video, const Tensor2& c_final,
                                     const LocalizeConfig& cfg);

std::vector<Detection> localize(const VideoSample& v, const Params& params, const ModelConfig& model,
                                const LocalizeConfig& cfg);

/// Text format: header `# A2CLPT-DETECTIONS v1 C=<n>` then
/// `<video>\t<class 1-based>\t<start>\t<end>\t<confidence %.6f>` per line.
void write_detections(std::ostream& out, const std::vector<Detection>& dets, int num_classes);

struct DetectionFile {
  int num_classes = 0;
  std::vector<Detection> detections;
};
DetectionFile read_detections(const std::filesystem::path& path);

}  // namespace a2clpt
