#include "a2clpt/centers.hpp"

#include <cmath>
#include <string>

namespace a2clpt {

CenterBank init_centers(int num_classes, int embed_dim, std::mt19937_64& rng) {
  if (num_classes < 1 || embed_dim < 1) throw InvalidInput("init_centers: dimensions must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  CenterBank bank;
  for (auto& s : bank.sets) {
    s.resize(num_classes, embed_dim);
    for (Index k = 0; k < s.rows(); ++k) {
      do {
        for (Index e = 0; e < s.cols(); ++e) s(k, e) = normal(rng);
      } while (s.row(k).norm() == 0.0);
      s.row(k).normalize();
    }
  }
  return bank;
}

int nearest_negative(const Vector& f_j, const Tensor2& centers, int j) {
  const Index nc = centers.rows();
  if (nc < 2) throw InvalidInput("nearest_negative: need at least two centers");
  if (j < 0 || j >= nc) throw InvalidInput("nearest_negative: class out of range");
  int best = -1;
  double best_d = 0.0;
  for (Index k = 0; k < nc; ++k) {
    if (k == j) continue;
    const Vector c = centers.row(k).transpose();
    const double d = angular_distance(f_j, c);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

namespace {

// -v / (sin(D(v, c)) ||v||) with the clamped sine; c is unit length.
Vector anchor_term(const Vector& v, const Vector& c) {
  const double s = std::max(std::sin(angular_distance(v, c)), kSinFloor);
  return -v / (s * v.norm());
}

}  // namespace

Tensor2 center_grads(const std::vector<TripletRecord>& records, const Tensor2& centers,
                     const CenterGradOptions& opt, int batch_size) {
  if (batch_size < 1) throw InvalidInput("center_grads: batch size must be positive");
  const Index nc = centers.rows(), e = centers.cols();
  Tensor2 sum_g1 = Tensor2::Zero(nc, e), sum_g2 = Tensor2::Zero(nc, e), sum_h = Tensor2::Zero(nc, e);
  Vector n_g1 = Vector::Zero(nc), n_g2 = Vector::Zero(nc), n_h = Vector::Zero(nc);
  for (const auto& r : records) {
    if (r.atcl_active) {
      const Vector c_own = centers.row(r.cls).transpose();
      const Vector c_neg = centers.row(r.negative).transpose();
      sum_g1.row(r.cls) += anchor_term(r.attended, c_own).transpose();
      n_g1(r.cls) += 1.0;
      sum_g2.row(r.negative) -= anchor_term(r.attended, c_neg).transpose();
      n_g2(r.negative) += 1.0;
    }
    if (r.nt_active) {
      const Vector c_own = centers.row(r.cls).transpose();
      const double w = opt.scale_nt_by_gamma ? opt.gamma : 1.0;
      sum_h.row(r.cls) +=
          w * (anchor_term(r.attended, c_own) - anchor_term(r.tempered, c_own)).transpose();
      n_h(r.cls) += 1.0;
    }
  }
  Tensor2 delta(nc, e);
  for (Index k = 0; k < nc; ++k) {
    delta.row(k) = sum_g1.row(k) / (1.0 + n_g1(k)) + sum_g2.row(k) / (1.0 + n_g2(k)) +
                   sum_h.row(k) / (1.0 + n_h(k));
  }
  return delta / static_cast<double>(batch_size);
}

void update_centers(Tensor2& centers, const Tensor2& delta, double lr) {
  if (delta.rows() != centers.rows() || delta.cols() != centers.cols()) {
    throw InvalidInput("update_centers: shape mismatch");
  }
  centers -= lr * delta;
  for (Index k = 0; k < centers.rows(); ++k) {
    const double n = centers.row(k).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InvalidInput("update_centers: center " + std::to_string(k) + " collapsed to zero");
    }
    centers.row(k) /= n;
  }
}

void update_bank(CenterBank& bank, const std::array<Tensor2, 4>& deltas, double lr_rgb, double lr_flow) {
  for (Branch b : kAllBranches) {
    const double lr = stream_of(b) == Stream::rgb ? lr_rgb : lr_flow;
    update_centers(bank.set(b), deltas[index_of(b)], lr);
  }
}

double max_unit_norm_deviation(const CenterBank& bank) {
  double worst = 0.0;
  for (const auto& s : bank.sets)
    for (Index k = 0; k < s.rows(); ++k) worst = std::max(worst, std::abs(s.row(k).norm() - 1.0));
  return worst;
}

}  // namespace a2clpt
