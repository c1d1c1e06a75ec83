#include "a2clpt/loss.hpp"

#include <cmath>
#include <numbers>

namespace a2clpt {

Tensor2 attention(const Tensor2& c) { return softmax_rows(c, 1.0); }

Tensor2 tempered_attention(const Tensor2& c, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InvalidInput("tempered_attention: beta must lie in (0, 1]");
  return softmax_rows(c, beta);
}

Vector aggregate(const Tensor2& xe, const Tensor2& a, Index j) {
  if (a.cols() != xe.cols() || j < 0 || j >= a.rows()) throw InvalidInput("aggregate: shape mismatch");
  return xe * a.row(j).transpose();
}

Tensor2 aggregate_all(const Tensor2& xe, const Tensor2& a) {
  if (a.cols() != xe.cols()) throw InvalidInput("aggregate: shape mismatch");
  return xe * a.transpose();
}

namespace {

void check_triplet_shapes(const Tensor2& agg, const Vector& labels, const Tensor2& centers) {
  if (agg.cols() != labels.size() || centers.rows() != labels.size() || centers.cols() != agg.rows()) {
    throw InvalidInput("triplet loss: shape mismatch");
  }
  for (Index k = 0; k < centers.rows(); ++k) {
    if (!(centers.row(k).norm() > 0.0)) throw InvalidInput("triplet loss: zero-norm center");
  }
}

void check_margin(double m, const char* what) {
  if (!(m >= 0.0 && m <= std::numbers::pi)) throw InvalidInput(std::string(what) + " must lie in [0, pi]");
}

}  // namespace

TripletLoss atcl_loss(const Tensor2& attended, const Vector& labels, const Tensor2& centers, double m1) {
  check_margin(m1, "m1");
  if (centers.rows() < 2) throw InvalidInput("atcl_loss: needs at least two classes");
  check_triplet_shapes(attended, labels, centers);
  const Index nc = labels.size(), e = attended.rows();
  TripletLoss out;
  out.d_attended = Tensor2::Zero(e, nc);
  out.d_tempered = Tensor2::Zero(e, nc);
  out.d_centers = Tensor2::Zero(nc, e);
  for (Index j = 0; j < nc; ++j) {
    if (labels(j) != 1.0) continue;
    const Vector f_j = attended.col(j);
    if (!(f_j.norm() > 0.0)) {
      ++out.skipped;
      continue;
    }
    const int n = nearest_negative(f_j, centers, static_cast<int>(j));
    const AngularGrad pos = angular_distance_grad(f_j, centers.row(j).transpose());
    const AngularGrad neg = angular_distance_grad(f_j, centers.row(n).transpose());
    const double inner = pos.theta - neg.theta + m1;
    TripletRecord rec;
    rec.cls = static_cast<int>(j);
    rec.negative = n;
    rec.attended = f_j;
    rec.atcl_active = inner > 0.0;
    if (rec.atcl_active) {
      out.value += inner;
      out.d_attended.col(j) += pos.d_u - neg.d_u;
      out.d_centers.row(j) += pos.d_v.transpose();
      out.d_centers.row(n) -= neg.d_v.transpose();
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

TripletLoss nt_loss(const Tensor2& attended, const Tensor2& tempered, const Vector& labels,
                    const Tensor2& centers, double m2) {
  check_margin(m2, "m2");
  check_triplet_shapes(attended, labels, centers);
  if (tempered.rows() != attended.rows() || tempered.cols() != attended.cols()) {
    throw InvalidInput("nt_loss: aggregate shape mismatch");
  }
  const Index nc = labels.size(), e = attended.rows();
  TripletLoss out;
  out.d_attended = Tensor2::Zero(e, nc);
  out.d_tempered = Tensor2::Zero(e, nc);
  out.d_centers = Tensor2::Zero(nc, e);
  for (Index j = 0; j < nc; ++j) {
    if (labels(j) != 1.0) continue;
    const Vector big = attended.col(j);
    const Vector small = tempered.col(j);
    if (!(big.norm() > 0.0) || !(small.norm() > 0.0)) {
      ++out.skipped;
      continue;
    }
    const Vector c = centers.row(j).transpose();
    const AngularGrad gf = angular_distance_grad(big, c);
    const AngularGrad gt = angular_distance_grad(small, c);
    const double inner = gf.theta - gt.theta + m2;
    TripletRecord rec;
    rec.cls = static_cast<int>(j);
    rec.attended = big;
    rec.tempered = small;
    rec.nt_active = inner > 0.0;
    if (rec.nt_active) {
      out.value += inner;
      out.d_attended.col(j) += gf.d_u;
      out.d_tempered.col(j) -= gt.d_u;
      out.d_centers.row(j) += (gf.d_v - gt.d_v).transpose();
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

void validate_triplet_hyper(const TripletHyper& h) {
  check_margin(h.m1, "m1");
  check_margin(h.m2, "m2");
  if (!(h.gamma >= 0.0) || !std::isfinite(h.gamma)) throw InvalidInput("gamma must be >= 0");
  if (!(h.beta > 0.0 && h.beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
}

namespace {

// Gradient of sum(d_a .* a) through a = softmax_rows(scale * c).
Tensor2 softmax_rows_backward(const Tensor2& a, const Tensor2& d_a, double scale) {
  const Vector inner = (a.array() * d_a.array()).rowwise().sum();
  return scale * (a.array() * (d_a.colwise() - inner).array()).matrix();
}

}  // namespace

BranchLoss aclpt_loss(const BranchLossInput& in) {
  if (!in.xe || !in.tcam || !in.labels || !in.centers) throw InvalidInput("aclpt_loss: missing input");
  validate_triplet_hyper(in.hyper);
  const Tensor2& xe = *in.xe;
  const Tensor2& c = *in.tcam;
  if (c.cols() != xe.cols()) throw InvalidInput("aclpt_loss: T-CAM length differs from features");
  const double gamma = in.hyper.gamma;

  const Tensor2 a_plain = attention(c);
  const Tensor2 a_temp = tempered_attention(c, in.hyper.beta);
  const Tensor2 big = aggregate_all(xe, a_plain);
  const Tensor2 small = aggregate_all(xe, a_temp);

  TripletLoss atcl = atcl_loss(big, *in.labels, *in.centers, in.hyper.m1);
  TripletLoss nt = nt_loss(big, small, *in.labels, *in.centers, in.hyper.m2);

  BranchLoss out;
  out.atcl = atcl.value;
  out.nt = nt.value;
  out.aclpt = out.atcl + gamma * out.nt;
  out.skipped = nt.skipped;

  const Tensor2 d_big = atcl.d_attended + gamma * nt.d_attended;
  const Tensor2 d_small = gamma * nt.d_tempered;
  out.d_centers = atcl.d_centers + gamma * nt.d_centers;
  out.d_xe = d_big * a_plain + d_small * a_temp;
  const Tensor2 d_plain = d_big.transpose() * xe;
  const Tensor2 d_temp = d_small.transpose() * xe;
  out.d_tcam = softmax_rows_backward(a_plain, d_plain, 1.0) +
               softmax_rows_backward(a_temp, d_temp, in.hyper.beta);

  // One record per class that survived both terms; ATCL and NT agree on degeneracy unless
  // only the tempered aggregate vanished.
  for (auto& ra : atcl.records) {
    TripletRecord rec = std::move(ra);
    for (const auto& rn : nt.records) {
      if (rn.cls == rec.cls) {
        rec.tempered = rn.tempered;
        rec.nt_active = rn.nt_active;
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

double a2clpt_total(const std::vector<BranchLossInput>& branches) {
  double total = 0.0;
  for (const auto& b : branches) total += aclpt_loss(b).aclpt;
  return total;
}

Index topk_count(Index length, double s) {
  if (!(s >= 1.0)) throw InvalidInput("classification: s must be >= 1");
  const auto k = static_cast<Index>(std::ceil(static_cast<double>(length) / s));
  return std::clamp<Index>(k, 1, length);
}

ClsLoss cls_loss(const Tensor2& c, const Vector& labels, double s) {
  if (c.rows() != labels.size()) throw InvalidInput("cls_loss: label length mismatch");
  const double mass = labels.sum();
  if (!(mass > 0.0)) throw InvalidInput("cls_loss: labels are all zero");
  require_finite(c, "cls_loss");
  const Index nc = c.rows(), l = c.cols();
  const Index k = topk_count(l, s);

  ClsLoss out;
  out.scores.resize(nc);
  std::vector<std::vector<Index>> picked(static_cast<std::size_t>(nc));
  for (Index j = 0; j < nc; ++j) {
    picked[static_cast<std::size_t>(j)] = topk_indices(c.row(j), k);
    double sum = 0.0;
    for (Index t : picked[static_cast<std::size_t>(j)]) sum += c(j, t);
    out.scores(j) = sum / static_cast<double>(k);
  }
  const double peak = out.scores.maxCoeff();
  const double log_z = peak + std::log((out.scores.array() - peak).exp().sum());
  const Vector log_p = out.scores.array() - log_z;
  out.pmf = log_p.array().exp();
  const Vector q = labels / mass;
  out.value = -(q.array() * log_p.array()).sum();

  out.d_tcam = Tensor2::Zero(nc, l);
  for (Index j = 0; j < nc; ++j) {
    const double g = (out.pmf(j) - q(j)) / static_cast<double>(k);
    for (Index t : picked[static_cast<std::size_t>(j)]) out.d_tcam(j, t) = g;
  }
  return out;
}

double cls_total(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o, const Tensor2& c_oa,
                 const Tensor2& c_final, const Vector& labels, double s) {
  return cls_loss(c_r, labels, s).value + cls_loss(c_ra, labels, s).value +
         cls_loss(c_o, labels, s).value + cls_loss(c_oa, labels, s).value +
         cls_loss(c_final, labels, s).value;
}

}  // namespace a2clpt
