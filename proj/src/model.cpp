#include "a2clpt/model.hpp"

#include <cmath>

namespace a2clpt {

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::rgb: return "rgb";
    case Branch::rgb_adv: return "rgb_adv";
    case Branch::flow: return "flow";
    case Branch::flow_adv: return "flow_adv";
  }
  return "?";
}

const char* stream_name(Stream s) { return s == Stream::rgb ? "rgb" : "flow"; }

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.feature_dim < 1 || cfg.embed_dim < 1 || cfg.num_classes < 1) {
    throw InvalidInput("model config: dimensions must be positive");
  }
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) {
    throw InvalidInput("model config: kernel size must be odd and positive");
  }
  if (!(cfg.erase_ratio >= 1.0)) throw InvalidInput("model config: s_a must be >= 1");
  if (!std::isfinite(cfg.omega)) throw InvalidInput("model config: omega must be finite");
}

namespace {

Tensor2 uniform_matrix(std::mt19937_64& rng, Index rows, Index cols, double fan_in) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor2 m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

}  // namespace

Params init_params(const ModelConfig& cfg, std::mt19937_64& rng) {
  validate_model_config(cfg);
  const Index d = cfg.feature_dim, e = cfg.embed_dim, nc = cfg.num_classes;
  Params p;
  for (auto& emb : p.embedding) {
    emb.w1 = uniform_matrix(rng, e, d, static_cast<double>(d));
    emb.b1 = Vector::Zero(e);
    emb.w2 = uniform_matrix(rng, e, e, static_cast<double>(e));
    emb.b2 = Vector::Zero(e);
  }
  const double fan_in = static_cast<double>(e * cfg.kernel_size);
  for (auto& h : p.heads) {
    h.taps.clear();
    for (int u = 0; u < cfg.kernel_size; ++u) h.taps.push_back(uniform_matrix(rng, nc, e, fan_in));
    h.bias = Vector::Zero(nc);
  }
  p.fusion.w_rgb = Vector::Ones(nc);
  p.fusion.w_flow = Vector::Ones(nc);
  return p;
}

Params zeros_like(const Params& p) {
  Params z = p;
  for_each_tensor(z, [](const std::string&, auto& t, bool) { t.setZero(); });
  return z;
}

Index parameter_count(const Params& p) {
  Index n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t, bool) { n += t.size(); });
  return n;
}

Vector flatten(const Params& p) {
  Vector flat(parameter_count(p));
  Index o = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t, bool) {
    flat.segment(o, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
    o += t.size();
  });
  return flat;
}

void unflatten(const Vector& flat, Params& p) {
  if (flat.size() != parameter_count(p)) throw InvalidInput("unflatten: size mismatch");
  Index o = 0;
  for_each_tensor(p, [&](const std::string&, auto& t, bool) {
    Eigen::Map<Vector>(t.data(), t.size()) = flat.segment(o, t.size());
    o += t.size();
  });
}

std::vector<ParamGroup> parameter_groups(const Params& p) {
  std::vector<ParamGroup> groups;
  Index o = 0;
  for_each_tensor(p, [&](const std::string& name, const auto& t, bool) {
    groups.push_back(ParamGroup{name, o, t.size()});
    o += t.size();
  });
  return groups;
}

// ---- embedding --------------------------------------------------------------

namespace {

void check_embed_shapes(const Tensor2& x, const StreamEmbedding& p) {
  if (p.w1.cols() != x.rows() || p.b1.size() != p.w1.rows() || p.w2.cols() != p.w1.rows() ||
      p.w2.rows() != p.b2.size()) {
    throw InvalidInput("embed: shape mismatch");
  }
}

}  // namespace

EmbedCache embed_forward(const Tensor2& x, const StreamEmbedding& p) {
  check_embed_shapes(x, p);
  EmbedCache c;
  c.pre1 = (p.w1 * x).colwise() + p.b1;
  c.hidden = c.pre1.cwiseMax(0.0);
  c.pre2 = (p.w2 * c.hidden).colwise() + p.b2;
  c.out = c.pre2.cwiseMax(0.0);
  return c;
}

Tensor2 embed(const Tensor2& x, const StreamEmbedding& p) { return embed_forward(x, p).out; }

void embed_backward(const Tensor2& x, const StreamEmbedding& p, const EmbedCache& cache,
                    const Tensor2& d_out, StreamEmbedding& grad) {
  const Tensor2 d_pre2 = (cache.pre2.array() > 0.0).select(d_out, 0.0);
  grad.w2.noalias() += d_pre2 * cache.hidden.transpose();
  grad.b2 += d_pre2.rowwise().sum();
  const Tensor2 d_hidden = p.w2.transpose() * d_pre2;
  const Tensor2 d_pre1 = (cache.pre1.array() > 0.0).select(d_hidden, 0.0);
  grad.w1.noalias() += d_pre1 * x.transpose();
  grad.b1 += d_pre1.rowwise().sum();
}

// ---- T-CAM heads -----------------------------------------------------------

namespace {

void check_head(const Tensor2& xe, const ConvHead& head) {
  if (head.taps.empty() || head.kernel_size() % 2 == 0) throw InvalidInput("tcam: kernel size must be odd");
  for (const auto& tap : head.taps) {
    if (tap.cols() != xe.rows() || tap.rows() != head.bias.size()) throw InvalidInput("tcam: shape mismatch");
  }
}

// Valid output columns [first, first + count) for tap u: input column t + u - pad.
struct TapRange {
  Index first;
  Index count;
  Index shift;
};

TapRange tap_range(Index l, int kappa, int u) {
  const Index shift = u - (kappa - 1) / 2;
  const Index first = std::max<Index>(0, -shift);
  const Index last = std::min<Index>(l, l - shift);  // exclusive
  return {first, std::max<Index>(0, last - first), shift};
}

}  // namespace

Tensor2 tcam(const Tensor2& xe, const ConvHead& head) {
  check_head(xe, head);
  const Index l = xe.cols();
  Tensor2 c = head.bias.replicate(1, l);
  for (int u = 0; u < head.kernel_size(); ++u) {
    const TapRange r = tap_range(l, head.kernel_size(), u);
    if (r.count == 0) continue;
    c.middleCols(r.first, r.count).noalias() += head.taps[u] * xe.middleCols(r.first + r.shift, r.count);
  }
  return c;
}

void tcam_backward(const Tensor2& xe, const ConvHead& head, const Tensor2& d_c, ConvHead& grad,
                   Tensor2* d_xe) {
  const Index l = xe.cols();
  grad.bias += d_c.rowwise().sum();
  for (int u = 0; u < head.kernel_size(); ++u) {
    const TapRange r = tap_range(l, head.kernel_size(), u);
    if (r.count == 0) continue;
    grad.taps[u].noalias() +=
        d_c.middleCols(r.first, r.count) * xe.middleCols(r.first + r.shift, r.count).transpose();
    if (d_xe) {
      d_xe->middleCols(r.first + r.shift, r.count).noalias() +=
          head.taps[u].transpose() * d_c.middleCols(r.first, r.count);
    }
  }
}

std::vector<Index> erased_steps(const Tensor2& c_first, Index j, double erase_ratio) {
  if (!(erase_ratio >= 1.0)) throw InvalidInput("adversarial_mask: s_a must be >= 1");
  const Index l = c_first.cols();
  const auto k = static_cast<Index>(std::floor(static_cast<double>(l) / erase_ratio));
  return topk_indices(c_first.row(j), std::min(k, l));
}

Tensor2 adversarial_mask(const Tensor2& xe, const Tensor2& c_first, Index j, double erase_ratio) {
  if (c_first.cols() != xe.cols() || j < 0 || j >= c_first.rows()) {
    throw InvalidInput("adversarial_mask: shape mismatch");
  }
  Tensor2 out = xe;
  for (Index t : erased_steps(c_first, j, erase_ratio)) out.col(t).setZero();
  return out;
}

namespace {

Tensor2 masked_copy(const Tensor2& xe, const std::vector<Index>& erased) {
  Tensor2 xm = xe;
  for (Index t : erased) xm.col(t).setZero();
  return xm;
}

}  // namespace

Tensor2 adversarial_tcam_masked(const Tensor2& xe, const EraseMasks& masks, const ConvHead& head_adv) {
  check_head(xe, head_adv);
  const Index nc = head_adv.bias.size();
  if (static_cast<Index>(masks.size()) != nc) throw InvalidInput("adversarial_tcam: mask count mismatch");
  const Index l = xe.cols();
  Tensor2 c(nc, l);
  for (Index j = 0; j < nc; ++j) {
    const Tensor2 xm = masked_copy(xe, masks[static_cast<std::size_t>(j)]);
    c.row(j).setConstant(head_adv.bias(j));
    for (int u = 0; u < head_adv.kernel_size(); ++u) {
      const TapRange r = tap_range(l, head_adv.kernel_size(), u);
      if (r.count == 0) continue;
      c.row(j).segment(r.first, r.count).noalias() +=
          head_adv.taps[u].row(j) * xm.middleCols(r.first + r.shift, r.count);
    }
  }
  return c;
}

Tensor2 adversarial_tcam(const Tensor2& xe, const Tensor2& c_first, const ConvHead& head_adv,
                         double erase_ratio, EraseMasks* masks_out) {
  if (c_first.cols() != xe.cols() || c_first.rows() != head_adv.bias.size()) {
    throw InvalidInput("adversarial_tcam: shape mismatch");
  }
  EraseMasks masks;
  for (Index j = 0; j < c_first.rows(); ++j) masks.push_back(erased_steps(c_first, j, erase_ratio));
  Tensor2 c = adversarial_tcam_masked(xe, masks, head_adv);
  if (masks_out) *masks_out = std::move(masks);
  return c;
}

void adversarial_tcam_backward(const Tensor2& xe, const EraseMasks& masks, const ConvHead& head_adv,
                               const Tensor2& d_c, ConvHead& grad, Tensor2* d_xe) {
  const Index nc = head_adv.bias.size();
  const Index l = xe.cols();
  grad.bias += d_c.rowwise().sum();
  for (Index j = 0; j < nc; ++j) {
    const auto& erased = masks[static_cast<std::size_t>(j)];
    const Tensor2 xm = masked_copy(xe, erased);
    Tensor2 d_xm = Tensor2::Zero(xe.rows(), l);
    for (int u = 0; u < head_adv.kernel_size(); ++u) {
      const TapRange r = tap_range(l, head_adv.kernel_size(), u);
      if (r.count == 0) continue;
      grad.taps[u].row(j).noalias() +=
          d_c.row(j).segment(r.first, r.count) * xm.middleCols(r.first + r.shift, r.count).transpose();
      if (d_xe) {
        d_xm.middleCols(r.first + r.shift, r.count).noalias() +=
            head_adv.taps[u].row(j).transpose() * d_c.row(j).segment(r.first, r.count);
      }
    }
    if (d_xe) {
      for (Index t : erased) d_xm.col(t).setZero();
      *d_xe += d_xm;
    }
  }
}

// ---- fusion ----------------------------------------------------------------

Tensor2 fuse(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o, const Tensor2& c_oa,
             const FusionParams& fp, double omega) {
  const Index nc = c_r.rows(), l = c_r.cols();
  auto same = [&](const Tensor2& m) { return m.rows() == nc && m.cols() == l; };
  if (!same(c_ra) || !same(c_o) || !same(c_oa) || fp.w_rgb.size() != nc || fp.w_flow.size() != nc) {
    throw InvalidInput("fuse: shape mismatch");
  }
  return fp.w_rgb.asDiagonal() * (c_r + omega * c_ra) + fp.w_flow.asDiagonal() * (c_o + omega * c_oa);
}

FuseGrad fuse_backward(const Tensor2& c_r, const Tensor2& c_ra, const Tensor2& c_o,
                       const Tensor2& c_oa, const FusionParams& fp, double omega,
                       const Tensor2& d_final) {
  FuseGrad g;
  g.d_r = fp.w_rgb.asDiagonal() * d_final;
  g.d_ra = omega * g.d_r;
  g.d_o = fp.w_flow.asDiagonal() * d_final;
  g.d_oa = omega * g.d_o;
  g.d_w_rgb = (d_final.array() * (c_r + omega * c_ra).array()).rowwise().sum();
  g.d_w_flow = (d_final.array() * (c_o + omega * c_oa).array()).rowwise().sum();
  return g;
}

// ---- whole network ---------------------------------------------------------

SampleForward forward(const VideoSample& v, const Params& p, const ModelConfig& cfg) {
  SampleForward fw;
  for (Stream s : {Stream::rgb, Stream::flow}) {
    const Tensor2& x = s == Stream::rgb ? v.rgb : v.flow;
    fw.embed[index_of(s)] = embed_forward(x, p.embed(s));
  }
  for (Stream s : {Stream::rgb, Stream::flow}) {
    const Branch first = s == Stream::rgb ? Branch::rgb : Branch::flow;
    const Branch adv = s == Stream::rgb ? Branch::rgb_adv : Branch::flow_adv;
    const Tensor2& xe = fw.features(s);
    fw.tcam[index_of(first)] = tcam(xe, p.head(first));
    if (cfg.adversarial) {
      fw.tcam[index_of(adv)] = adversarial_tcam(xe, fw.tcam[index_of(first)], p.head(adv),
                                                cfg.erase_ratio, &fw.masks[index_of(s)]);
    }
  }
  const Tensor2& c_r = fw.branch_tcam(Branch::rgb);
  const Tensor2& c_o = fw.branch_tcam(Branch::flow);
  if (cfg.adversarial) {
    fw.final_tcam = fuse(c_r, fw.branch_tcam(Branch::rgb_adv), c_o, fw.branch_tcam(Branch::flow_adv),
                         p.fusion, cfg.omega);
  } else {
    const Tensor2 zero = Tensor2::Zero(c_r.rows(), c_r.cols());
    fw.final_tcam = fuse(c_r, zero, c_o, zero, p.fusion, 0.0);
  }
  return fw;
}

void backward(const VideoSample& v, const Params& p, const ModelConfig& cfg, const SampleForward& fw,
              const ForwardGrad& upstream, Params& grad) {
  std::array<Tensor2, 4> d_tcam;
  const Index nc = fw.final_tcam.rows(), l = fw.final_tcam.cols();
  for (Branch b : kAllBranches) {
    const auto& u = upstream.d_tcam[index_of(b)];
    d_tcam[index_of(b)] = u.size() ? u : Tensor2(Tensor2::Zero(nc, l));
  }
  if (upstream.d_final.size()) {
    const Tensor2 zero = Tensor2::Zero(nc, l);
    const Tensor2& c_ra = cfg.adversarial ? fw.branch_tcam(Branch::rgb_adv) : zero;
    const Tensor2& c_oa = cfg.adversarial ? fw.branch_tcam(Branch::flow_adv) : zero;
    const double omega = cfg.adversarial ? cfg.omega : 0.0;
    const FuseGrad fg = fuse_backward(fw.branch_tcam(Branch::rgb), c_ra, fw.branch_tcam(Branch::flow),
                                      c_oa, p.fusion, omega, upstream.d_final);
    d_tcam[index_of(Branch::rgb)] += fg.d_r;
    d_tcam[index_of(Branch::flow)] += fg.d_o;
    if (cfg.adversarial) {
      d_tcam[index_of(Branch::rgb_adv)] += fg.d_ra;
      d_tcam[index_of(Branch::flow_adv)] += fg.d_oa;
    }
    grad.fusion.w_rgb += fg.d_w_rgb;
    grad.fusion.w_flow += fg.d_w_flow;
  }
  for (Stream s : {Stream::rgb, Stream::flow}) {
    const Branch first = s == Stream::rgb ? Branch::rgb : Branch::flow;
    const Branch adv = s == Stream::rgb ? Branch::rgb_adv : Branch::flow_adv;
    const Tensor2& xe = fw.features(s);
    Tensor2 d_xe = upstream.d_features[index_of(s)].size()
                       ? upstream.d_features[index_of(s)]
                       : Tensor2(Tensor2::Zero(xe.rows(), xe.cols()));
    tcam_backward(xe, p.head(first), d_tcam[index_of(first)], grad.head(first), &d_xe);
    if (cfg.adversarial) {
      adversarial_tcam_backward(xe, fw.masks[index_of(s)], p.head(adv), d_tcam[index_of(adv)],
                                grad.head(adv), &d_xe);
    }
    const Tensor2& x = s == Stream::rgb ? v.rgb : v.flow;
    embed_backward(x, p.embed(s), fw.embed[index_of(s)], d_xe, grad.embed(s));
  }
}

}  // namespace a2clpt
