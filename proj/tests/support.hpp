#pragma once

// Small random generators shared by the tests.

#include <random>

#include "a2clpt/data.hpp"
#include "a2clpt/model.hpp"

namespace testsupport {

using a2clpt::Index;
using a2clpt::Tensor2;
using a2clpt::Vector;

inline Tensor2 gaussian(Index rows, Index cols, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Tensor2 m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

inline Vector gaussian_vec(Index n, std::mt19937_64& rng, double sigma = 1.0) {
  return gaussian(n, 1, rng, sigma).col(0);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Tensor2 unit_rows(Index rows, Index cols, std::mt19937_64& rng) {
  Tensor2 m = gaussian(rows, cols, rng);
  m.rowwise().normalize();
  return m;
}

/// Multi-hot labels with at least one positive class.
inline Vector random_labels(Index nc, std::mt19937_64& rng, double p = 0.3) {
  Vector y = Vector::Zero(nc);
  y(uniform_int(rng, 0, static_cast<int>(nc) - 1)) = 1.0;
  for (Index j = 0; j < nc; ++j)
    if (uniform(rng, 0, 1) < p) y(j) = 1.0;
  return y;
}

inline a2clpt::VideoSample random_video(int d, Index l, int nc, std::mt19937_64& rng) {
  a2clpt::VideoSample v;
  v.id = "v" + std::to_string(uniform_int(rng, 0, 1 << 20));
  v.rgb = gaussian(d, l, rng);
  v.flow = gaussian(d, l, rng);
  v.labels = random_labels(nc, rng);
  return v;
}

}  // namespace testsupport
