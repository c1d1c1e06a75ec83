#include "a2clpt/localizer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "a2clpt/loss.hpp"

namespace a2clpt {

Classification classify(const Tensor2& c_final, double s) {
  require_finite(c_final, "classify");
  const Index k = topk_count(c_final.cols(), s);
  Classification out;
  out.scores.resize(c_final.rows());
  for (Index j = 0; j < c_final.rows(); ++j) out.scores(j) = topk_mean(c_final.row(j), k);
  out.pmf = softmax_rows(Tensor2(out.scores.transpose()), 1.0).row(0).transpose();
  for (Index j = 0; j < out.scores.size(); ++j)
    if (out.scores(j) > 0.0) out.positive.push_back(static_cast<int>(j));
  return out;
}

std::vector<std::pair<Index, Index>> extract_segments(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                                      int min_length) {
  std::vector<std::pair<Index, Index>> out;
  const Index l = row.size();
  Index t = 0;
  while (t < l) {
    if (!(row(t) > 0.0)) {
      ++t;
      continue;
    }
    const Index start = t;
    while (t < l && row(t) > 0.0) ++t;
    if (t - start >= min_length) out.emplace_back(start + 1, t);
  }
  return out;
}

std::vector<Detection> localize_tcam(const std::string& video, const Tensor2& c_final,
                                     const LocalizeConfig& cfg) {
  const Classification cls = classify(c_final, cfg.s);
  std::vector<Detection> dets;
  for (int j : cls.positive) {
    for (const auto& [s, e] : extract_segments(c_final.row(j), cfg.min_length)) {
      Detection d;
      d.video = video;
      d.cls = j;
      d.start = s;
      d.end = e;
      d.confidence = c_final.row(j).segment(s - 1, e - s + 1).maxCoeff() + cls.scores(j);
      dets.push_back(std::move(d));
    }
  }
  return dets;
}

std::vector<Detection> localize(const VideoSample& v, const Params& params, const ModelConfig& model,
                                const LocalizeConfig& cfg) {
  const SampleForward fw = forward(v, params, model);
  return localize_tcam(v.id, fw.final_tcam, cfg);
}

void write_detections(std::ostream& out, const std::vector<Detection>& dets, int num_classes) {
  out << "# A2CLPT-DETECTIONS v1 C=" << num_classes << '\n';
  char conf[64];
  for (const auto& d : dets) {
    std::snprintf(conf, sizeof(conf), "%.6f", d.confidence);
    out << d.video << '\t' << (d.cls + 1) << '\t' << d.start << '\t' << d.end << '\t' << conf << '\n';
  }
}

DetectionFile read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open detections: " + path.string());
  DetectionFile file;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# A2CLPT-DETECTIONS v1 C=", 0) != 0) {
    throw LoadError("detections: missing header in " + path.string());
  }
  try {
    file.num_classes = std::stoi(line.substr(std::string("# A2CLPT-DETECTIONS v1 C=").size()));
  } catch (const std::exception&) {
    throw LoadError("detections: malformed header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Detection d;
    long cls = 0;
    if (!std::getline(ls, d.video, '\t') || !(ls >> cls >> d.start >> d.end >> d.confidence)) {
      throw LoadError("detections line " + std::to_string(line_no) + ": malformed");
    }
    if (cls < 1 || cls > file.num_classes) {
      throw LoadError("detections line " + std::to_string(line_no) + ": class index out of range");
    }
    if (d.start < 1 || d.end < d.start) {
      throw LoadError("detections line " + std::to_string(line_no) + ": bad segment bounds");
    }
    d.cls = static_cast<int>(cls - 1);
    file.detections.push_back(std::move(d));
  }
  return file;
}

}  // namespace a2clpt
