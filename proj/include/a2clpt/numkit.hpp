#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "a2clpt/error.hpp"

namespace a2clpt {

// Column-major in memory; the row-major convention only applies on disk.
using Tensor2 = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Lower clamp applied to sin(theta) wherever it appears in a denominator.
inline constexpr double kSinFloor = 1e-6;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

/// Builds a rows x cols tensor from row-major values, validating length and finiteness.
Tensor2 make_tensor(Index rows, Index cols, const std::vector<double>& row_major);

/// Row-wise softmax of scale*m with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar scale) {
  using Scalar = typename Derived::Scalar;
  if (!(scale > Scalar(0))) throw InvalidInput("softmax_rows: scale must be positive");
  require_finite(m, "softmax_rows");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(m.rows(), m.cols());
  for (Index j = 0; j < m.rows(); ++j) {
    const Scalar peak = m.row(j).maxCoeff();
    out.row(j) = ((m.row(j).array() - peak) * scale).exp().matrix();
    out.row(j) /= out.row(j).sum();
  }
  return out;
}

template <typename Derived>
typename Derived::Scalar angular_distance(const Eigen::MatrixBase<Derived>& u,
                                          const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > Scalar(0)) || !(nv > Scalar(0))) {
    throw InvalidInput("angular_distance: zero-norm vector");
  }
  const Scalar cosine = std::clamp(u.dot(v) / (nu * nv), Scalar(-1), Scalar(1));
  return std::acos(cosine);
}

/// Angular distance together with its partial derivatives wrt both arguments.
struct AngularGrad {
  double theta = 0.0;
  Vector d_u;
  Vector d_v;
};

/// dtheta/du = -(v_hat - cos(theta) u_hat) / (max(sin theta, kSinFloor) |u|), symmetric in v.
AngularGrad angular_distance_grad(const Vector& u, const Vector& v);

/// Mean of the k largest entries.
template <typename Derived>
typename Derived::Scalar topk_mean(const Eigen::DenseBase<Derived>& row, Index k) {
  using Scalar = typename Derived::Scalar;
  const Index n = row.size();
  if (k < 1 || k > n) throw InvalidInput("topk_mean: k out of range");
  std::vector<Scalar> values(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = row.derived().coeff(i);
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end(), std::greater<>());
  return std::accumulate(values.begin(), values.begin() + k, Scalar(0)) / Scalar(k);
}

/// Indices of the k largest entries; among equal values the lower index wins.
/// Returned in selection order (descending value, ascending index).
std::vector<Index> topk_indices(const Eigen::Ref<const Eigen::RowVectorXd>& row, Index k);

/// Shannon entropy (nats) of a probability row.
double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& pmf);

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index worst_coordinate = -1;
  /// Set when f produced a non-finite value; the check is then a failure.
  std::optional<Index> nonfinite_coordinate;

  bool passed(double tolerance) const {
    return !nonfinite_coordinate && max_rel_error < tolerance;
  }
};

/// Central-difference comparison of an analytic gradient against f.
/// Per coordinate: (|fd - an| minus the rounding noise of fd, floored at 0) / max(1e-8, |fd| + |an|),
/// maximised over coordinates.
GradCheckResult fd_grad_check(const std::function<double(const Vector&)>& f, const Vector& x0,
                              double eps, const Vector& analytic);

}  // namespace a2clpt
