#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "a2clpt/data.hpp"
#include "support.hpp"

using namespace a2clpt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("a2clpt_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synthetic dataset has the requested shape") {
  SynthConfig cfg;
  const Dataset ds = synth_generate(cfg);
  REQUIRE(ds.samples.size() == 50);
  CHECK(ds.num_classes == 5);
  CHECK(ds.feature_dim == 32);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const VideoSample& v = ds.samples[i];
    CHECK(v.length() >= cfg.min_length);
    CHECK(v.length() <= cfg.max_length);
    CHECK(v.rgb.rows() == 32);
    CHECK(v.flow.cols() == v.length());
    CHECK(v.labels.sum() == 1.0);
    CHECK(v.labels(static_cast<Index>(i % 5)) == 1.0);
    REQUIRE(v.gt_segments.size() >= 1);
    REQUIRE(v.gt_segments.size() <= 3);
  }
}

TEST_CASE("property: synthetic segments are separated, in range and labeled") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.num_videos = 30;
    cfg.min_length = 9;
    cfg.max_length = 30;
    const Dataset ds = synth_generate(cfg);
    for (const auto& v : ds.samples) {
      Index prev_end = 0;
      for (const auto& s : v.gt_segments) {
        REQUIRE(s.start >= 1);
        REQUIRE(s.end <= v.length());
        REQUIRE(s.end - s.start + 1 >= 2);
        if (prev_end > 0) REQUIRE(s.start > prev_end + 1);  // a background step between instances
        REQUIRE(v.labels(s.cls) == 1.0);
        prev_end = s.end;
      }
    }
  }
}

TEST_CASE("noiseless activity steps equal the class prototype") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.num_videos = 5;
  const Dataset ds = synth_generate(cfg);
  const SynthPrototypes protos = synth_prototypes(cfg);
  // prototypes are orthonormal when D >= N_c + 1
  const Tensor2 gram = protos.rgb.transpose() * protos.rgb;
  CHECK((gram - Tensor2::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-6);
  for (const auto& v : ds.samples) {
    for (const auto& s : v.gt_segments) {
      for (Index t = s.start - 1; t < s.end; ++t) {
        CHECK(v.rgb.col(t) == protos.rgb.col(s.cls));
        CHECK(v.flow.col(t) == protos.flow.col(s.cls));
      }
    }
    std::vector<bool> covered(static_cast<std::size_t>(v.length()), false);
    for (const auto& s : v.gt_segments)
      for (Index t = s.start - 1; t < s.end; ++t) covered[static_cast<std::size_t>(t)] = true;
    for (Index t = 0; t < v.length(); ++t)
      if (!covered[static_cast<std::size_t>(t)]) CHECK(v.rgb.col(t) == protos.rgb.col(cfg.num_classes));
  }
}

TEST_CASE("synthesis is deterministic and seed sensitive") {
  SynthConfig cfg;
  cfg.num_videos = 6;
  const Dataset a = synth_generate(cfg), b = synth_generate(cfg);
  cfg.seed = 1;
  const Dataset c = synth_generate(cfg);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].rgb == b.samples[i].rgb);
    CHECK(a.samples[i].gt_segments == b.samples[i].gt_segments);
  }
  CHECK_FALSE(a.samples[0].rgb.isApprox(c.samples[0].rgb));
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.min_length = 2;
  CHECK_THROWS_AS(validate_synth_config(cfg), InvalidInput);
  cfg = SynthConfig{};
  cfg.max_segments = 20;  // cannot fit 20 separated instances in 40 steps
  CHECK_THROWS_AS(validate_synth_config(cfg), InvalidInput);
  cfg = SynthConfig{};
  cfg.max_length = 10;
  CHECK_THROWS_AS(validate_synth_config(cfg), InvalidInput);
}

TEST_CASE("dataset round-trips through disk bit-exactly and writes deterministic bytes") {
  SynthConfig cfg;
  cfg.num_videos = 7;
  const Dataset ds = synth_generate(cfg);
  const fs::path d1 = scratch("rt1"), d2 = scratch("rt2");
  const fs::path m1 = write_dataset(ds, d1);
  write_dataset(ds, d2);
  CHECK(m1.filename() == kManifestName);
  CHECK(slurp(m1) == slurp(d2 / kManifestName));
  CHECK(slurp(d1 / "vid00003.rgb.bin") == slurp(d2 / "vid00003.rgb.bin"));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(d1)) ++files;
  CHECK(files == 2 * ds.samples.size() + 1);

  const Dataset back = load_dataset(m1);
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.num_classes == ds.num_classes);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].rgb == ds.samples[i].rgb);
    CHECK(back.samples[i].flow == ds.samples[i].flow);
    CHECK(back.samples[i].labels == ds.samples[i].labels);
    CHECK(back.samples[i].gt_segments == ds.samples[i].gt_segments);
  }
}

TEST_CASE("loader reports malformed input with the offending video") {
  SynthConfig cfg;
  cfg.num_videos = 2;
  const fs::path dir = scratch("bad");
  const fs::path manifest = write_dataset(synth_generate(cfg), dir);
  const std::string good = slurp(manifest);

  auto expect_error = [&](const std::string& text, const std::string& needle) {
    std::ofstream(manifest, std::ios::binary | std::ios::trunc) << text;
    try {
      load_dataset(manifest);
      FAIL("expected a LoadError");
    } catch (const LoadError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };

  expect_error("NOT-A-MANIFEST\n", "header");
  std::string wrong_len = good;
  const auto tab = wrong_len.find('\t', wrong_len.find("vid00001"));
  wrong_len.replace(tab + 1, wrong_len.find('\t', tab + 1) - tab - 1, "3");
  expect_error(wrong_len, "vid00001");

  std::string bad_class = good;
  const auto line = bad_class.find("vid00000");
  const auto f2 = bad_class.find('\t', bad_class.find('\t', line) + 1);
  bad_class.replace(f2 + 1, bad_class.find('\t', f2 + 1) - f2 - 1, "9");
  expect_error(bad_class, "vid00000");

  std::ofstream(manifest, std::ios::binary | std::ios::trunc) << good;
  fs::remove(dir / "vid00001.flow.bin");
  try {
    load_dataset(manifest);
    FAIL("expected a LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("vid00001") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(dir / "missing.txt"), LoadError);
}

TEST_CASE("sample validation") {
  std::mt19937_64 rng(3);
  VideoSample v = testsupport::random_video(4, 10, 3, rng);
  CHECK_NOTHROW(validate_sample(v, 3, 4, true));
  v.gt_segments.push_back(Segment{0, 4, 11});
  CHECK_THROWS_AS(validate_sample(v, 3, 4, true), InvalidInput);
  v.gt_segments.clear();
  v.rgb(0, 0) = NAN;
  CHECK_THROWS_AS(validate_sample(v, 3, 4, true), InvalidInput);
  v.rgb(0, 0) = 0.0;
  v.labels.setZero();
  CHECK_THROWS_AS(validate_sample(v, 3, 4, true), InvalidInput);
  CHECK_NOTHROW(validate_sample(v, 3, 4, false));
}
