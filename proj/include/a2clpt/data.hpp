#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a2clpt/numkit.hpp"

namespace a2clpt {

/// Ground-truth activity instance. `cls` is 0-based; start/end are 1-based inclusive time indices.
struct Segment {
  int cls = 0;
  Index start = 1;
  Index end = 1;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// One untrimmed video: two D x l feature streams plus video-level labels.
struct VideoSample {
  std::string id;
  Tensor2 rgb;
  Tensor2 flow;
  Vector labels;  // multi-hot, length N_c
  std::vector<Segment> gt_segments;

  Index length() const { return rgb.cols(); }
};

struct Dataset {
  std::vector<VideoSample> samples;
  int num_classes = 0;
  int feature_dim = 0;
};

/// Throws InvalidInput naming the video when a sample breaks a VideoSample invariant.
void validate_sample(const VideoSample& v, int num_classes, int feature_dim, bool require_label);
void validate_dataset(const Dataset& ds, bool require_labels);

inline constexpr const char* kManifestName = "manifest.txt";

/// Reads a manifest and the per-stream binary feature files it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes the manifest and <id>.rgb.bin / <id>.flow.bin into dir; returns the manifest path.
/// Features are stored as float32, so values must be float-representable to round-trip exactly.
std::filesystem::path write_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct SynthConfig {
  int num_classes = 5;
  int feature_dim = 32;
  int num_videos = 50;
  int min_length = 40;
  int max_length = 80;
  int min_segments = 1;
  int max_segments = 3;
  double noise_sigma = 0.1;
  bool background_direction = true;
  std::uint64_t seed = 0;
};

void validate_synth_config(const SynthConfig& cfg);

/// Deterministic synthetic two-stream dataset. Video i carries class (i mod N_c).
Dataset synth_generate(const SynthConfig& cfg);

/// Per-stream class prototypes used by synth_generate: columns 0..N_c-1 are classes,
/// column N_c is the background direction. Exposed for tests.
struct SynthPrototypes {
  Tensor2 rgb;
  Tensor2 flow;
};
SynthPrototypes synth_prototypes(const SynthConfig& cfg);

}  // namespace a2clpt
