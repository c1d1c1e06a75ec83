#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "a2clpt/data.hpp"
#include "a2clpt/numkit.hpp"

namespace a2clpt {

enum class Stream : int { rgb = 0, flow = 1 };

/// The four T-CAM producers: first and adversarial branch of each stream.
enum class Branch : int { rgb = 0, rgb_adv = 1, flow = 2, flow_adv = 3 };

inline constexpr std::array<Branch, 4> kAllBranches = {Branch::rgb, Branch::rgb_adv, Branch::flow,
                                                        Branch::flow_adv};

constexpr int index_of(Stream s) { return static_cast<int>(s); }
constexpr int index_of(Branch b) { return static_cast<int>(b); }
constexpr Stream stream_of(Branch b) {
  return (b == Branch::rgb || b == Branch::rgb_adv) ? Stream::rgb : Stream::flow;
}
constexpr bool is_adversarial(Branch b) { return b == Branch::rgb_adv || b == Branch::flow_adv; }
const char* branch_name(Branch b);
const char* stream_name(Stream s);

struct ModelConfig {
  int feature_dim = 32;
  int embed_dim = 32;
  int num_classes = 5;
  int kernel_size = 1;
  /// s_a: ratio controlling k_a = floor(l / s_a) erased steps per class.
  double erase_ratio = 40.0;
  /// omega: weight of the adversarial T-CAMs inside the fusion.
  double omega = 0.6;
  /// false drops both adversarial branches (single-branch ablations).
  bool adversarial = true;
};

void validate_model_config(const ModelConfig& cfg);

/// Two ReLU fully-connected layers, E x D then E x E.
struct StreamEmbedding {
  Tensor2 w1;
  Vector b1;
  Tensor2 w2;
  Vector b2;
};

/// 1-D convolution over time: taps[u] is the N_c x E weight applied at offset u - (kappa-1)/2.
struct ConvHead {
  std::vector<Tensor2> taps;
  Vector bias;

  int kernel_size() const { return static_cast<int>(taps.size()); }
};

struct FusionParams {
  Vector w_rgb;
  Vector w_flow;
};

struct Params {
  std::array<StreamEmbedding, 2> embedding;
  std::array<ConvHead, 4> heads;
  FusionParams fusion;

  StreamEmbedding& embed(Stream s) { return embedding[index_of(s)]; }
  const StreamEmbedding& embed(Stream s) const { return embedding[index_of(s)]; }
  ConvHead& head(Branch b) { return heads[index_of(b)]; }
  const ConvHead& head(Branch b) const { return heads[index_of(b)]; }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit fusion weights.
Params init_params(const ModelConfig& cfg, std::mt19937_64& rng);
Params zeros_like(const Params& p);

/// Visits every parameter tensor with (name, tensor, weight_decay_applies).
/// Tensors are Tensor2 or Vector, so fn must be generic.
template <typename P, typename Fn>
void for_each_tensor(P& p, Fn&& fn) {
  for (Stream s : {Stream::rgb, Stream::flow}) {
    const std::string base = std::string("embed.") + stream_name(s) + ".";
    auto& e = p.embedding[index_of(s)];
    fn(base + "w1", e.w1, true);
    fn(base + "b1", e.b1, false);
    fn(base + "w2", e.w2, true);
    fn(base + "b2", e.b2, false);
  }
  for (Branch b : kAllBranches) {
    const std::string base = std::string("head.") + branch_name(b) + ".";
    auto& h = p.heads[index_of(b)];
    for (std::size_t u = 0; u < h.taps.size(); ++u) fn(base + "tap" + std::to_string(u), h.taps[u], true);
    fn(base + "bias", h.bias, false);
  }
  fn(std::string("fusion.w_rgb"), p.fusion.w_rgb, false);
  fn(std::string("fusion.w_flow"), p.fusion.w_flow, false);
}

Index parameter_count(const Params& p);
Vector flatten(const Params& p);
void unflatten(const Vector& flat, Params& p);

/// Parameter groups reported by gradient checks: name and flat [offset, offset + size).
struct ParamGroup {
  std::string name;
  Index offset = 0;
  Index size = 0;
};
std::vector<ParamGroup> parameter_groups(const Params& p);

// ---- embedding --------------------------------------------------------------

struct EmbedCache {
  Tensor2 pre1;
  Tensor2 hidden;
  Tensor2 pre2;
  Tensor2 out;
};

/// Column-wise ReLU(W2 ReLU(W1 x_t + b1) + b2).
Tensor2 embed(const Tensor2& x, const StreamEmbedding& p);
EmbedCache embed_forward(const Tensor2& x, const StreamEmbedding& p);
/// Accumulates parameter gradients into grad. ReLU'(0) is taken as 0.
void embed_backward(const Tensor2& x, const StreamEmbedding& p, const EmbedCache& cache,
                    const Tensor2& d_out, StreamEmbedding& grad);

// ---- T-CAM heads -----------------------------------------------------------

/// Cross-correlation along time with zero padding (kappa-1)/2 on both ends, plus bias.
Tensor2 tcam(const Tensor2& xe, const ConvHead& head);
/// Accumulates head gradients; adds the input gradient into d_xe when non-null.
void tcam_backward(const Tensor2& xe, const ConvHead& head, const Tensor2& d_c, ConvHead& grad,
                   Tensor2* d_xe);

/// 0-based time indices zeroed for class j: the top floor(l / s_a) entries of c_first.row(j),
/// ties toward lower index.
std::vector<Index> erased_steps(const Tensor2& c_first, Index j, double erase_ratio);

Tensor2 adversarial_mask(const Tensor2& xe, const Tensor2& c_first, Index j, double erase_ratio);

/// Per-class erased steps of one adversarial branch, computed from the first-branch T-CAM.
using EraseMasks = std::vector<std::vector<Index>>;

/// Row j is the adversarial head applied to the class-j masked features.
Tensor2 adversarial_tcam(const Tensor2& xe, const Tensor2& c_first, const ConvHead& head_adv,
                         double erase_ratio, EraseMasks* masks_out = nullptr);
/// Same, for precomputed masks (selection held constant).
Tensor2 adversarial_tcam_masked(const Tensor2& xe, const EraseMasks& masks, const ConvHead& head_adv);
void adversarial_tcam_backward(const Tensor2& xe, const EraseMasks& masks, const ConvHead& head_adv,
                               const Tensor2& d_c, ConvHead& grad, Tensor2* d_xe);

// ---- fusion ----------------------------------------------------------------

/// Row j: w_rgb[j] (c_r[j] + omega c_ra[j]) + w_flow[j] (c_o[j] + omega c_oa[j]).
Tensor2 fuse(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o, const Tensor2& c_oa,
             const FusionParams& fp, double omega);

struct FuseGrad {
  Tensor2 d_r, d_ra, d_o, d_oa;
  Vector d_w_rgb, d_w_flow;
};
FuseGrad fuse_backward(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o,
                       const Tensor2& c_oa, const FusionParams& fp, double omega,
                       const Tensor2& d_final);

// ---- whole network ---------------------------------------------------------

struct SampleForward {
  std::array<EmbedCache, 2> embed;
  /// Indexed by Branch; adversarial entries are empty when the model has no adversarial branch.
  std::array<Tensor2, 4> tcam;
  std::array<EraseMasks, 2> masks;  // per stream
  Tensor2 final_tcam;

  const Tensor2& features(Stream s) const { return embed[index_of(s)].out; }
  const Tensor2& branch_tcam(Branch b) const { return tcam[index_of(b)]; }
};

SampleForward forward(const VideoSample& v, const Params& p, const ModelConfig& cfg);

/// Gradients of a scalar loss wrt the forward's T-CAMs and embedded features.
struct ForwardGrad {
  std::array<Tensor2, 4> d_tcam;   // per branch; empty where unused
  Tensor2 d_final;                 // may be empty
  std::array<Tensor2, 2> d_features;  // per stream; may be empty
};

/// Chains ForwardGrad back to every parameter, accumulating into grad.
void backward(const VideoSample& v, const Params& p, const ModelConfig& cfg, const SampleForward& fw,
              const ForwardGrad& upstream, Params& grad);

}  // namespace a2clpt
