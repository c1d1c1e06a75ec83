#pragma once

#include <array>
#include <random>
#include <vector>

#include "a2clpt/model.hpp"
#include "a2clpt/numkit.hpp"

namespace a2clpt {

/// Four center sets (indexed by Branch), each N_c x E with unit-norm rows.
struct CenterBank {
  std::array<Tensor2, 4> sets;

  Tensor2& set(Branch b) { return sets[index_of(b)]; }
  const Tensor2& set(Branch b) const { return sets[index_of(b)]; }
};

CenterBank init_centers(int num_classes, int embed_dim, std::mt19937_64& rng);

/// Closest center to f_j among k != j by angular distance; ties go to the lower index.
int nearest_negative(const Vector& f_j, const Tensor2& centers, int j);

/// Per (video, labeled class) statistics a branch loss hands to the center update.
struct TripletRecord {
  int cls = 0;
  int negative = -1;
  Vector attended;   // F(j), aggregate under the plain attention
  Vector tempered;   // f(j), aggregate under the tempered attention
  bool atcl_active = false;  // ATCL hinge argument > 0
  bool nt_active = false;    // NT hinge argument > 0
};

struct CenterGradOptions {
  double gamma = 0.6;
  /// Multiply the NT-role term by gamma, matching the weight of the NT loss.
  bool scale_nt_by_gamma = true;
};

/// Averaged center gradient for one center set. Every role (anchor g1, negative g2, NT h)
/// is summed over its active triplets, divided by (1 + active count), then by batch_size.
Tensor2 center_grads(const std::vector<TripletRecord>& records, const Tensor2& centers,
                     const CenterGradOptions& opt, int batch_size);

/// c <- normalize(c - lr * delta), row-wise. Throws if a row collapses to zero.
void update_centers(Tensor2& centers, const Tensor2& delta, double lr);

/// Applies update_centers to every set; RGB sets use lr_rgb and flow sets lr_flow.
void update_bank(CenterBank& bank, const std::array<Tensor2, 4>& deltas, double lr_rgb, double lr_flow);

/// Largest | ||row|| - 1 | over every set.
double max_unit_norm_deviation(const CenterBank& bank);

}  // namespace a2clpt
