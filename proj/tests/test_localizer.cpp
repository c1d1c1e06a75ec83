#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "a2clpt/localizer.hpp"
#include "segment_oracle.hpp"
#include "support.hpp"

using namespace a2clpt;
using namespace testsupport;
namespace fs = std::filesystem;

TEST_CASE("segments of a hand-written row") {
  Eigen::RowVectorXd row(10);
  row << 1, 2, -1, 0, 3, 3, 3, -2, 5, 4;
  using Runs = std::vector<std::pair<Index, Index>>;
  CHECK(extract_segments(row, 2) == Runs{{1, 2}, {5, 7}, {9, 10}});
  CHECK(extract_segments(row, 3) == Runs{{5, 7}});
  CHECK(extract_segments(row, 1).size() == 3);
  CHECK(extract_segments(Eigen::RowVectorXd::Zero(4), 1).empty());  // zero is not positive
}

TEST_CASE("property: segments equal brute-force run enumeration and never overlap") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10000; ++trial) {
    const Index l = uniform_int(rng, 1, 25);
    Eigen::RowVectorXd row(l);
    for (Index t = 0; t < l; ++t) row(t) = static_cast<double>(uniform_int(rng, -2, 2));
    for (int min_len : {2, 3}) {
      const auto got = extract_segments(row, min_len);
      REQUIRE(got == brute_force_runs(row, min_len));
      for (std::size_t i = 1; i < got.size(); ++i) REQUIRE(got[i].first > got[i - 1].second + 1);
    }
  }
}

TEST_CASE("classification scores and positive classes") {
  Tensor2 c(3, 4);
  c << 2, 1, -1, -1,  //
      -1, -1, -1, -1,  //
      0.5, -3, -3, -3;
  const Classification cls = classify(c, 2.0);
  CHECK(cls.scores(0) == doctest::Approx(1.5));
  CHECK(cls.scores(2) == doctest::Approx(-1.25));
  CHECK(cls.positive == std::vector<int>{0});
  CHECK(cls.pmf.sum() == doctest::Approx(1.0));
}

TEST_CASE("detections carry segment max plus class score") {
  Tensor2 c(2, 6);
  c << 1, 3, -1, 2, 2, 2,  //
      -1, -1, -1, -1, -1, 4;
  const auto dets = localize_tcam("v", c, LocalizeConfig{2.0, 2});
  const double score0 = (3 + 2 + 2) / 3.0;  // top ceil(6/2) entries
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].cls == 0);
  CHECK(dets[0].start == 1);
  CHECK(dets[0].end == 2);
  CHECK(dets[0].confidence == doctest::Approx(3.0 + score0));
  CHECK(dets[1].start == 4);
  CHECK(dets[1].confidence == doctest::Approx(2.0 + score0));
  // class 1 has score (4 - 1 - 1) / 3 > 0 but only a one-step run
  CHECK(localize_tcam("v", c, LocalizeConfig{2.0, 1}).size() == 3);
}

TEST_CASE("detections file round trip and validation") {
  std::vector<Detection> dets = {{"a", 0, 1, 4, 1.25}, {"b c", 2, 3, 3, -0.5}};
  const fs::path p = fs::temp_directory_path() / "a2clpt_test_dets.txt";
  {
    std::ofstream out(p);
    write_detections(out, dets, 3);
  }
  const DetectionFile back = read_detections(p);
  CHECK(back.num_classes == 3);
  REQUIRE(back.detections.size() == 2);
  CHECK(back.detections[1].video == "b c");
  CHECK(back.detections[1].cls == 2);
  CHECK(back.detections[0].confidence == 1.25);

  std::ostringstream text;
  write_detections(text, dets, 3);
  CHECK(text.str().find("a\t1\t1\t4\t1.250000\n") != std::string::npos);

  std::ofstream(p) << "# A2CLPT-DETECTIONS v1 C=2\nx\t3\t1\t2\t0.5\n";
  CHECK_THROWS_AS(read_detections(p), LoadError);
  std::ofstream(p) << "# A2CLPT-DETECTIONS v1 C=2\nx\t1\t5\t2\t0.5\n";
  CHECK_THROWS_AS(read_detections(p), LoadError);
  std::ofstream(p) << "garbage\n";
  CHECK_THROWS_AS(read_detections(p), LoadError);
}
