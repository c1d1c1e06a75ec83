#include "a2clpt/numkit.hpp"

#include <limits>
#include <string>

namespace a2clpt {

Tensor2 make_tensor(Index rows, Index cols, const std::vector<double>& row_major) {
  if (rows < 0 || cols < 0 || static_cast<Index>(row_major.size()) != rows * cols) {
    throw InvalidInput("make_tensor: value count does not match shape");
  }
  Tensor2 m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = row_major[static_cast<std::size_t>(r * cols + c)];
  require_finite(m, "make_tensor");
  return m;
}

AngularGrad angular_distance_grad(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw InvalidInput("angular_distance: zero-norm vector");
  const Vector uh = u / nu;
  const Vector vh = v / nv;
  const double cosine = std::clamp(uh.dot(vh), -1.0, 1.0);
  AngularGrad g;
  g.theta = std::acos(cosine);
  const double s = std::max(std::sin(g.theta), kSinFloor);
  g.d_u = -(vh - cosine * uh) / (s * nu);
  g.d_v = -(uh - cosine * vh) / (s * nv);
  return g;
}

std::vector<Index> topk_indices(const Eigen::Ref<const Eigen::RowVectorXd>& row, Index k) {
  const Index n = row.size();
  if (k < 0 || k > n) throw InvalidInput("topk_indices: k out of range");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return row(a) > row(b); });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& pmf) {
  double h = 0.0;
  for (Index t = 0; t < pmf.size(); ++t) {
    if (pmf(t) > 0.0) h -= pmf(t) * std::log(pmf(t));
  }
  return h;
}

GradCheckResult fd_grad_check(const std::function<double(const Vector&)>& f, const Vector& x0,
                              double eps, const Vector& analytic) {
  if (!(eps > 0.0)) throw InvalidInput("fd_grad_check: eps must be positive");
  if (analytic.size() != x0.size()) throw InvalidInput("fd_grad_check: gradient size mismatch");
  GradCheckResult result;
  Vector x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + eps;
    const double up = f(x);
    x(i) = x0(i) - eps;
    const double down = f(x);
    x(i) = x0(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      result.nonfinite_coordinate = i;
      result.worst_coordinate = i;
      result.max_rel_error = std::numeric_limits<double>::infinity();
      return result;
    }
    const double fd = (up - down) / (2.0 * eps);
    // Rounding in f(x +- eps) alone can move fd by about this much.
    const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                         std::max(std::abs(up), std::abs(down)) / (2.0 * eps);
    const double err = std::max(0.0, std::abs(fd - analytic(i)) - noise) /
                       std::max(1e-8, std::abs(fd) + std::abs(analytic(i)));
    if (result.worst_coordinate < 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_coordinate = i;
    }
  }
  return result;
}

}  // namespace a2clpt
