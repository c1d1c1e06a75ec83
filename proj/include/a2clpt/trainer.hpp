#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "a2clpt/centers.hpp"
#include "a2clpt/checkpoint.hpp"
#include "a2clpt/data.hpp"
#include "a2clpt/loss.hpp"
#include "a2clpt/model.hpp"

namespace a2clpt {

/// Table-3 style ablations.
enum class Variant { atcl, atcl_plus, aclpt, a2clpt };

const char* variant_name(Variant v);
std::optional<Variant> parse_variant(const std::string& name);

struct TrainConfig {
  ModelConfig model;  // feature_dim / num_classes are taken from the dataset by train()
  double alpha = 1.0;
  double gamma = 0.6;
  double beta_min = 0.001;
  double beta_max = 0.1;
  /// Fixed beta for deterministic loss evaluation and gradient checks.
  double eval_beta = 0.05;
  double m1 = 2.0;
  double m2 = 1.0;
  double s = 8.0;
  int batch_size = 8;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 5e-4;
  double center_lr_rgb = 0.1;
  double center_lr_flow = 0.2;
  int iterations = 2000;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables intermediate checkpoints
  bool scale_nt_by_gamma = true;
  int threads = 1;
};

void validate_train_config(const TrainConfig& cfg);

/// atcl: gamma = 0, single branch; atcl_plus: gamma = 0, two branches;
/// aclpt: single branch; a2clpt: unchanged.
TrainConfig apply_variant(TrainConfig cfg, Variant v);

TripletHyper triplet_hyper(const TrainConfig& cfg, double beta);

struct BatchResult {
  LossBreakdown loss;         // averaged over the batch
  double loss_sum = 0.0;      // sum of per-video totals, before the 1/N scaling
  Params grad;                // gradient of loss.total
  std::array<Tensor2, 4> center_delta;  // alpha-scaled averaged center gradients
  std::array<std::vector<TripletRecord>, 4> records;
  int skipped = 0;
};

/// Full loss, network gradients and center deltas for one minibatch.
/// betas holds the tempered-attention beta per video.
BatchResult forward_backward(std::span<const VideoSample* const> batch, const Params& params,
                             const CenterBank& bank, const TrainConfig& cfg,
                             std::span<const double> betas);

/// Loss of a batch only (no gradients); used by finite-difference checks.
double batch_loss(std::span<const VideoSample* const> batch, const Params& params,
                  const CenterBank& bank, const TrainConfig& cfg, std::span<const double> betas);

/// Dataset-wide loss with beta fixed at cfg.eval_beta.
LossBreakdown evaluate_loss(const Dataset& ds, const Params& params, const CenterBank& bank,
                            const TrainConfig& cfg);

/// Adam with decoupled weight decay over the flattened network parameters (centers excluded).
class AdamW {
 public:
  AdamW(const Params& like, const TrainConfig& cfg);
  void step(Params& params, const Params& grad);

  Index state_size() const { return m_.size(); }
  long steps() const { return t_; }

 private:
  Vector m_, v_, decay_mask_;
  double lr_, b1_, b2_, eps_, wd_;
  long t_ = 0;
};

struct TrainRecord {
  int iteration = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  double center_delta_norm = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
};

/// Tab-separated, one record per line. Wall time is omitted unless requested so that logs
/// of identical runs are byte-identical.
void write_train_log(std::ostream& out, const TrainLog& log, bool include_wall_time = false);

struct TrainResult {
  Checkpoint state;
  TrainLog log;
};

using CheckpointHook = std::function<void(int iteration, const Checkpoint&)>;

/// Seeded end-to-end training: Adam on the network, SGD + renormalisation on the centers.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const CheckpointHook& hook = {});

/// Initial state train() starts from for this dataset and config.
Checkpoint initial_state(const Dataset& ds, const TrainConfig& cfg);

// ---- gradient check harness -------------------------------------------------

struct GradcheckOptions {
  TrainConfig train;       // hyper-parameters; model dims are overwritten by the instance shape
  int feature_dim = 6;
  int embed_dim = 6;
  int length = 7;
  int num_classes = 3;
  int batch = 2;
  int instances = 1;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  /// Instances whose nearest discrete decision (ReLU sign, hinge, top-k, erase, nearest
  /// negative) lies within this margin are redrawn.
  double min_margin = 1e-4;
  /// Test hook: mutate the analytic gradient before comparison.
  std::function<void(Params&)> corrupt_analytic;
};

struct GroupCheck {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_coordinate = -1;  // within the group
  int instance = 0;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;
  double center_oracle_max_abs = 0.0;
  int instances = 0;
  int redrawn = 0;

  double worst() const;
  bool passed(double tolerance, double center_tolerance = 1e-10) const;
};

GradcheckReport gradcheck(const GradcheckOptions& opt);
void print_gradcheck_report(std::ostream& out, const GradcheckReport& r, double tolerance);

/// Smallest distance of any discrete decision from its switching point for this batch.
double decision_margin(std::span<const VideoSample* const> batch, const Params& params,
                       const CenterBank& bank, const TrainConfig& cfg, std::span<const double> betas);

}  // namespace a2clpt
