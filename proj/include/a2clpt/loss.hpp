#pragma once

#include <array>
#include <vector>

#include "a2clpt/centers.hpp"
#include "a2clpt/numkit.hpp"

namespace a2clpt {

/// Rows are per-class pmfs over time: softmax_rows(c, 1).
Tensor2 attention(const Tensor2& c);
/// softmax_rows(c, beta) with beta in (0, 1]; flatter than attention(c).
Tensor2 tempered_attention(const Tensor2& c, double beta);

/// F(j) = sum_t a(j, t) xe(:, t).
Vector aggregate(const Tensor2& xe, const Tensor2& a, Index j);
/// All classes at once: column j is F(j), i.e. xe * a^T (E x N_c).
Tensor2 aggregate_all(const Tensor2& xe, const Tensor2& a);

/// Hinge-loss result over the labeled classes of one video.
struct TripletLoss {
  double value = 0.0;
  Tensor2 d_attended;  // E x N_c, dL/dF
  Tensor2 d_tempered;  // E x N_c, dL/df (zero for ATCL)
  Tensor2 d_centers;   // N_c x E, exact partial derivative wrt the centers
  std::vector<TripletRecord> records;  // one per labeled, non-degenerate class
  int skipped = 0;                     // labeled classes with a zero-norm aggregate
};

/// sum_{j: y_j = 1} max(0, D(F_j, c_j) - D(F_j, c_n) + m1), n the nearest negative center.
TripletLoss atcl_loss(const Tensor2& attended, const Vector& labels, const Tensor2& centers, double m1);

/// sum_{j: y_j = 1} max(0, D(F_j, c_j) - D(f_j, c_j) + m2).
TripletLoss nt_loss(const Tensor2& attended, const Tensor2& tempered, const Vector& labels,
                    const Tensor2& centers, double m2);

struct TripletHyper {
  double m1 = 2.0;
  double m2 = 1.0;
  double gamma = 0.6;
  double beta = 0.05;
};

void validate_triplet_hyper(const TripletHyper& h);

struct BranchLossInput {
  const Tensor2* xe = nullptr;       // E x l embedded features
  const Tensor2* tcam = nullptr;     // N_c x l T-CAM of this branch
  const Vector* labels = nullptr;
  const Tensor2* centers = nullptr;  // N_c x E
  TripletHyper hyper;
};

struct BranchLoss {
  double atcl = 0.0;
  double nt = 0.0;
  double aclpt = 0.0;  // atcl + gamma * nt
  Tensor2 d_tcam;      // N_c x l
  Tensor2 d_xe;        // E x l
  Tensor2 d_centers;   // N_c x E
  std::vector<TripletRecord> records;  // merged ATCL/NT activity per labeled class
  int skipped = 0;
};

/// ATCL + gamma * NT for one branch, built from attention, tempered attention and aggregation,
/// with gradients wrt the branch T-CAM, embedded features and centers.
BranchLoss aclpt_loss(const BranchLossInput& in);

/// Sum of the per-branch ACL-PT values.
double a2clpt_total(const std::vector<BranchLossInput>& branches);

struct ClsLoss {
  double value = 0.0;
  Vector scores;  // top-k mean per class
  Vector pmf;     // softmax of scores
  Tensor2 d_tcam;
};

/// Number of pooled steps, ceil(l / s).
Index topk_count(Index length, double s);

/// Cross-entropy between softmax(top-k mean scores) and the l1-normalised labels.
/// The top-k selection is held constant for the gradient.
ClsLoss cls_loss(const Tensor2& c, const Vector& labels, double s);

/// Sum of the five classification terms (four branches plus the fused T-CAM).
double cls_total(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o, const Tensor2& c_oa,
                 const Tensor2& c_final, const Vector& labels, double s);

/// Loss terms for a batch (or one video). cls is indexed by Branch, cls[4] is the fused T-CAM.
struct LossBreakdown {
  double atcl = 0.0;
  double nt = 0.0;
  double aclpt = 0.0;
  std::array<double, 5> cls{};
  double total = 0.0;

  double cls_sum() const { return cls[0] + cls[1] + cls[2] + cls[3] + cls[4]; }
};

}  // namespace a2clpt
