#pragma once

// Per-sample transcription of the averaged center gradients, computed from raw
// embeddings and T-CAMs. Shares no code with center_grads beyond angular_distance.

#include <cmath>
#include <vector>

#include "a2clpt/numkit.hpp"

namespace testsupport {

struct OracleSample {
  a2clpt::Tensor2 xe;    // E x l
  a2clpt::Tensor2 tcam;  // N_c x l
  a2clpt::Vector labels;
  double beta = 0.05;
};

inline a2clpt::Tensor2 oracle_softmax(const a2clpt::Tensor2& c, double scale) {
  a2clpt::Tensor2 out(c.rows(), c.cols());
  for (a2clpt::Index j = 0; j < c.rows(); ++j) {
    const double peak = c.row(j).maxCoeff();
    double z = 0.0;
    for (a2clpt::Index t = 0; t < c.cols(); ++t) z += std::exp(scale * (c(j, t) - peak));
    for (a2clpt::Index t = 0; t < c.cols(); ++t) out(j, t) = std::exp(scale * (c(j, t) - peak)) / z;
  }
  return out;
}

inline a2clpt::Tensor2 naive_center_delta(const std::vector<OracleSample>& batch, const a2clpt::Tensor2& centers,
                                          double m1, double m2, double gamma_h) {
  using a2clpt::Index;
  using a2clpt::Vector;
  const Index nc = centers.rows(), e = centers.cols();
  auto theta = [](const Vector& a, const Vector& b) { return a2clpt::angular_distance(a, b); };
  auto deriv = [&](const Vector& v, const Vector& c) -> Vector {
    return -v / (std::max(std::sin(theta(v, c)), a2clpt::kSinFloor) * v.norm());
  };

  a2clpt::Tensor2 delta = a2clpt::Tensor2::Zero(nc, e);
  for (Index k = 0; k < nc; ++k) {
    const Vector ck = centers.row(k).transpose();
    Vector g1 = Vector::Zero(e), g2 = Vector::Zero(e), h = Vector::Zero(e);
    double n1 = 0, n2 = 0, nh = 0;
    for (const auto& s : batch) {
      const a2clpt::Tensor2 big = s.xe * oracle_softmax(s.tcam, 1.0).transpose();
      const a2clpt::Tensor2 small = s.xe * oracle_softmax(s.tcam, s.beta).transpose();
      for (Index j = 0; j < nc; ++j) {
        if (s.labels(j) != 1.0) continue;
        const Vector F = big.col(j), f = small.col(j);
        if (F.norm() == 0.0) continue;
        const Vector cj = centers.row(j).transpose();
        Index n = -1;
        double best = 0.0;
        for (Index q = 0; q < nc; ++q) {
          if (q == j) continue;
          const double d = theta(F, centers.row(q).transpose());
          if (n < 0 || d < best) {
            best = d;
            n = q;
          }
        }
        const double atcl_inner = theta(F, cj) - best + m1;
        const double atcl_on = atcl_inner > 0.0 ? 1.0 : 0.0;
        if (j == k) {
          g1 += atcl_on * deriv(F, ck);
          n1 += atcl_on;
        }
        if (n == k) {
          g2 += atcl_on * -deriv(F, ck);
          n2 += atcl_on;
        }
        if (j == k && f.norm() > 0.0) {
          const double nt_on = theta(F, cj) - theta(f, cj) + m2 > 0.0 ? 1.0 : 0.0;
          h += nt_on * gamma_h * (deriv(F, ck) - deriv(f, ck));
          nh += nt_on;
        }
      }
    }
    const double N = static_cast<double>(batch.size());
    delta.row(k) = (g1 / (1.0 + n1) / N + g2 / (1.0 + n2) / N + h / (1.0 + nh) / N).transpose();
  }
  return delta;
}

}  // namespace testsupport
