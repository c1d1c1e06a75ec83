#include "a2clpt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <numbers>
#include <ostream>
#include <thread>

namespace a2clpt {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::atcl: return "atcl";
    case Variant::atcl_plus: return "atcl_plus";
    case Variant::aclpt: return "aclpt";
    case Variant::a2clpt: return "a2clpt";
  }
  return "?";
}

std::optional<Variant> parse_variant(const std::string& name) {
  for (Variant v : {Variant::atcl, Variant::atcl_plus, Variant::aclpt, Variant::a2clpt}) {
    if (name == variant_name(v)) return v;
  }
  return std::nullopt;
}

void validate_train_config(const TrainConfig& cfg) {
  auto fail = [](const std::string& msg) { throw InvalidInput("train config: " + msg); };
  auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (!finite_nonneg(cfg.alpha)) fail("alpha must be >= 0");
  if (!finite_nonneg(cfg.gamma)) fail("gamma must be >= 0");
  if (!(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max <= 1.0)) {
    fail("beta range must satisfy 0 < beta_min <= beta_max <= 1");
  }
  if (!(cfg.eval_beta > 0.0 && cfg.eval_beta <= 1.0)) fail("eval beta must lie in (0, 1]");
  if (!(cfg.m1 >= 0.0 && cfg.m1 <= std::numbers::pi)) fail("m1 must lie in [0, pi]");
  if (!(cfg.m2 >= 0.0 && cfg.m2 <= std::numbers::pi)) fail("m2 must lie in [0, pi]");
  if (!(cfg.s >= 1.0)) fail("s must be >= 1");
  if (cfg.batch_size < 1) fail("batch size must be >= 1");
  if (!finite_nonneg(cfg.adam_lr) || !finite_nonneg(cfg.weight_decay)) fail("adam lr / weight decay must be >= 0");
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0 && cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam_eps > 0.0)) fail("adam eps must be positive");
  if (!finite_nonneg(cfg.center_lr_rgb) || !finite_nonneg(cfg.center_lr_flow)) fail("center lrs must be >= 0");
  if (cfg.iterations < 0) fail("iterations must be >= 0");
  if (cfg.checkpoint_every < 0) fail("checkpoint cadence must be >= 0");
  if (cfg.threads < 1) fail("threads must be >= 1");
  validate_model_config(cfg.model);
}

TrainConfig apply_variant(TrainConfig cfg, Variant v) {
  switch (v) {
    case Variant::atcl:
      cfg.gamma = 0.0;
      cfg.model.adversarial = false;
      break;
    case Variant::atcl_plus:
      cfg.gamma = 0.0;
      cfg.model.adversarial = true;
      break;
    case Variant::aclpt:
      cfg.model.adversarial = false;
      break;
    case Variant::a2clpt:
      cfg.model.adversarial = true;
      break;
  }
  return cfg;
}

TripletHyper triplet_hyper(const TrainConfig& cfg, double beta) {
  return TripletHyper{cfg.m1, cfg.m2, cfg.gamma, beta};
}

namespace {

std::vector<Branch> active_branches(const ModelConfig& m) {
  if (m.adversarial) return {kAllBranches.begin(), kAllBranches.end()};
  return {Branch::rgb, Branch::flow};
}

struct SampleResult {
  LossBreakdown loss;  // unscaled, aclpt/total not yet composed
  Params grad;
  std::array<std::vector<TripletRecord>, 4> records;
  int skipped = 0;
};

SampleResult sample_pass(const VideoSample& v, const Params& params, const CenterBank& bank,
                         const TrainConfig& cfg, double beta, bool want_grad) {
  const ModelConfig& mc = cfg.model;
  const SampleForward fw = forward(v, params, mc);
  SampleResult out;
  ForwardGrad up;
  const TripletHyper hyper = triplet_hyper(cfg, beta);

  for (Branch b : active_branches(mc)) {
    const Stream s = stream_of(b);
    BranchLossInput in{&fw.features(s), &fw.branch_tcam(b), &v.labels, &bank.set(b), hyper};
    BranchLoss bl = aclpt_loss(in);
    out.loss.atcl += bl.atcl;
    out.loss.nt += bl.nt;
    out.skipped += bl.skipped;
    out.records[index_of(b)] = std::move(bl.records);

    ClsLoss cl = cls_loss(fw.branch_tcam(b), v.labels, cfg.s);
    out.loss.cls[index_of(b)] = cl.value;

    if (want_grad) {
      Tensor2& dc = up.d_tcam[index_of(b)];
      dc = cfg.alpha * bl.d_tcam + cl.d_tcam;
      Tensor2& dx = up.d_features[index_of(s)];
      if (dx.size() == 0) dx = Tensor2::Zero(bl.d_xe.rows(), bl.d_xe.cols());
      dx += cfg.alpha * bl.d_xe;
    }
  }
  ClsLoss cf = cls_loss(fw.final_tcam, v.labels, cfg.s);
  out.loss.cls[4] = cf.value;
  if (want_grad) {
    up.d_final = cf.d_tcam;
    out.grad = zeros_like(params);
    backward(v, params, mc, fw, up, out.grad);
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void compose(LossBreakdown& l, const TrainConfig& cfg) {
  l.aclpt = l.atcl + cfg.gamma * l.nt;
  l.total = cfg.alpha * l.aclpt + l.cls_sum();
}

std::vector<SampleResult> run_samples(std::span<const VideoSample* const> batch, const Params& params,
                                      const CenterBank& bank, const TrainConfig& cfg,
                                      std::span<const double> betas, bool want_grad) {
  if (batch.empty()) throw InvalidInput("forward_backward: empty batch");
  if (betas.size() != batch.size()) throw InvalidInput("forward_backward: one beta per video required");
  std::vector<SampleResult> results(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
    const VideoSample& v = *batch[i];
    if (!(v.labels.sum() >= 1.0)) throw InvalidInput("video '" + v.id + "': training sample without labels");
    try {
      results[i] = sample_pass(v, params, bank, cfg, betas[i], want_grad);
    } catch (const InvalidInput& e) {
      throw InvalidInput("video '" + v.id + "': " + e.what());
    }
  });
  return results;
}

LossBreakdown average(const std::vector<SampleResult>& results, const TrainConfig& cfg, double* sum_total) {
  LossBreakdown avg;
  double total_sum = 0.0;
  for (const auto& r : results) {
    avg.atcl += r.loss.atcl;
    avg.nt += r.loss.nt;
    for (std::size_t k = 0; k < 5; ++k) avg.cls[k] += r.loss.cls[k];
    LossBreakdown one = r.loss;
    compose(one, cfg);
    total_sum += one.total;
  }
  const double n = static_cast<double>(results.size());
  avg.atcl /= n;
  avg.nt /= n;
  for (auto& c : avg.cls) c /= n;
  compose(avg, cfg);
  if (sum_total) *sum_total = total_sum;
  return avg;
}

}  // namespace

BatchResult forward_backward(std::span<const VideoSample* const> batch, const Params& params,
                             const CenterBank& bank, const TrainConfig& cfg,
                             std::span<const double> betas) {
  std::vector<SampleResult> results = run_samples(batch, params, bank, cfg, betas, true);
  BatchResult out;
  out.loss = average(results, cfg, &out.loss_sum);
  const double inv_n = 1.0 / static_cast<double>(results.size());
  out.grad = zeros_like(params);
  for (auto& r : results) {
    Vector g = flatten(out.grad) + flatten(r.grad);
    unflatten(g, out.grad);
    out.skipped += r.skipped;
    for (std::size_t b = 0; b < 4; ++b) {
      auto& dst = out.records[b];
      dst.insert(dst.end(), r.records[b].begin(), r.records[b].end());
    }
  }
  unflatten(flatten(out.grad) * inv_n, out.grad);

  CenterGradOptions copt{cfg.gamma, cfg.scale_nt_by_gamma};
  for (Branch b : kAllBranches) {
    const Tensor2& centers = bank.set(b);
    out.center_delta[index_of(b)] =
        cfg.alpha * center_grads(out.records[index_of(b)], centers, copt, static_cast<int>(results.size()));
  }
  return out;
}

double batch_loss(std::span<const VideoSample* const> batch, const Params& params,
                  const CenterBank& bank, const TrainConfig& cfg, std::span<const double> betas) {
  return average(run_samples(batch, params, bank, cfg, betas, false), cfg, nullptr).total;
}

LossBreakdown evaluate_loss(const Dataset& ds, const Params& params, const CenterBank& bank,
                            const TrainConfig& cfg) {
  std::vector<const VideoSample*> all;
  for (const auto& v : ds.samples) all.push_back(&v);
  const std::vector<double> betas(all.size(), cfg.eval_beta);
  return average(run_samples(all, params, bank, cfg, betas, false), cfg, nullptr);
}

// ---- optimiser --------------------------------------------------------------

AdamW::AdamW(const Params& like, const TrainConfig& cfg)
    : lr_(cfg.adam_lr), b1_(cfg.adam_beta1), b2_(cfg.adam_beta2), eps_(cfg.adam_eps), wd_(cfg.weight_decay) {
  const Index n = parameter_count(like);
  m_ = Vector::Zero(n);
  v_ = Vector::Zero(n);
  decay_mask_ = Vector::Zero(n);
  Index o = 0;
  for_each_tensor(like, [&](const std::string&, const auto& t, bool decay) {
    if (decay) decay_mask_.segment(o, t.size()).setOnes();
    o += t.size();
  });
}

void AdamW::step(Params& params, const Params& grad) {
  Vector p = flatten(params);
  const Vector g = flatten(grad);
  if (p.size() != m_.size()) throw InvalidInput("AdamW: parameter layout changed");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * g;
  v_ = b2_ * v_ + (1.0 - b2_) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  p.array() -= lr_ * wd_ * decay_mask_.array() * p.array();
  p.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  unflatten(p, params);
}

// ---- training ---------------------------------------------------------------

void write_train_log(std::ostream& out, const TrainLog& log, bool include_wall_time) {
  out << "iteration\ttotal\tatcl\tnt\taclpt\tcls_rgb\tcls_rgb_adv\tcls_flow\tcls_flow_adv\tcls_final"
         "\tgrad_norm\tcenter_delta_norm";
  if (include_wall_time) out << "\twall_seconds";
  out << '\n';
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    out << '\t' << buf;
  };
  for (const auto& r : log.records) {
    out << r.iteration;
    num(r.loss.total);
    num(r.loss.atcl);
    num(r.loss.nt);
    num(r.loss.aclpt);
    for (double c : r.loss.cls) num(c);
    num(r.grad_norm);
    num(r.center_delta_norm);
    if (include_wall_time) num(r.wall_seconds);
    out << '\n';
  }
}

Checkpoint initial_state(const Dataset& ds, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.model.feature_dim = ds.feature_dim;
  c.model.num_classes = ds.num_classes;
  validate_train_config(c);
  std::mt19937_64 rng(cfg.seed);
  Checkpoint state;
  state.model = c.model;
  state.params = init_params(c.model, rng);
  state.bank = init_centers(c.model.num_classes, c.model.embed_dim, rng);
  return state;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const CheckpointHook& hook) {
  validate_dataset(ds, true);
  if (ds.samples.empty() && cfg.iterations > 0) throw InvalidInput("train: empty dataset");
  TrainResult result;
  result.state = initial_state(ds, cfg);
  TrainConfig c = cfg;
  c.model = result.state.model;

  Params& params = result.state.params;
  CenterBank& bank = result.state.bank;
  AdamW adam(params, c);

  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> beta_draw(c.beta_min, c.beta_max);
  std::vector<std::size_t> order(ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(c.batch_size), order.size());

  const auto started = std::chrono::steady_clock::now();
  for (int it = 1; it <= c.iterations; ++it) {
    if (cursor + batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::vector<const VideoSample*> batch;
    std::vector<double> betas;
    for (std::size_t k = 0; k < batch_size; ++k) {
      batch.push_back(&ds.samples[order[cursor++]]);
      betas.push_back(beta_draw(rng));
    }
    BatchResult fb = forward_backward(batch, params, bank, c, betas);
    adam.step(params, fb.grad);
    update_bank(bank, fb.center_delta, c.center_lr_rgb, c.center_lr_flow);

    TrainRecord rec;
    rec.iteration = it;
    rec.loss = fb.loss;
    rec.grad_norm = flatten(fb.grad).norm();
    double cd = 0.0;
    for (const auto& d : fb.center_delta) cd += d.squaredNorm();
    rec.center_delta_norm = std::sqrt(cd);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.records.push_back(rec);

    if (hook && c.checkpoint_every > 0 && it % c.checkpoint_every == 0) hook(it, result.state);
  }
  return result;
}

// ---- gradient check harness -------------------------------------------------

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& g : groups) w = std::max(w, g.max_rel_error);
  return w;
}

bool GradcheckReport::passed(double tolerance, double center_tolerance) const {
  for (const auto& g : groups)
    if (!(g.max_rel_error < tolerance)) return false;
  return center_oracle_max_abs <= center_tolerance;
}

namespace {

void sorted_desc(const Eigen::RowVectorXd& row, std::vector<double>& out) {
  out.assign(row.data(), row.data() + row.size());
  std::sort(out.begin(), out.end(), std::greater<>());
}

double topk_gap(const Tensor2& c, Index k) {
  double gap = std::numeric_limits<double>::infinity();
  if (k <= 0 || k >= c.cols()) return gap;
  std::vector<double> v;
  for (Index j = 0; j < c.rows(); ++j) {
    sorted_desc(c.row(j), v);
    gap = std::min(gap, v[static_cast<std::size_t>(k - 1)] - v[static_cast<std::size_t>(k)]);
  }
  return gap;
}

// Direct transcription of the averaged center update: explicit per-center scans over every
// (video, class) triplet, each derivative written out from arccos.
Tensor2 naive_center_delta(const std::vector<TripletRecord>& recs, const Tensor2& centers, double gamma,
                           bool scale_nt, int batch) {
  const Index nc = centers.rows(), e = centers.cols();
  auto dist = [](const Vector& a, const Vector& b) {
    double cosine = a.dot(b) / (a.norm() * b.norm());
    cosine = std::max(-1.0, std::min(1.0, cosine));
    return std::acos(cosine);
  };
  auto deriv = [&](const Vector& a, const Vector& c) {
    const double s = std::max(std::sin(dist(a, c)), kSinFloor);
    Vector g(a.size());
    for (Index i = 0; i < a.size(); ++i) g(i) = -a(i) / (s * a.norm());
    return g;
  };
  Tensor2 delta = Tensor2::Zero(nc, e);
  for (Index k = 0; k < nc; ++k) {
    const Vector ck = centers.row(k).transpose();
    Vector s1 = Vector::Zero(e), s2 = Vector::Zero(e), sh = Vector::Zero(e);
    double n1 = 0, n2 = 0, nh = 0;
    for (const auto& r : recs) {
      if (r.cls == k && r.atcl_active) {
        s1 += deriv(r.attended, ck);
        n1 += 1;
      }
      if (r.negative == k && r.atcl_active) {
        s2 -= deriv(r.attended, ck);
        n2 += 1;
      }
      if (r.cls == k && r.nt_active) {
        const double w = scale_nt ? gamma : 1.0;
        sh += w * (deriv(r.attended, ck) - deriv(r.tempered, ck));
        nh += 1;
      }
    }
    delta.row(k) = ((s1 / (1 + n1) + s2 / (1 + n2) + sh / (1 + nh)) / batch).transpose();
  }
  return delta;
}

Vector flat_of(const Tensor2& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Tensor2 shaped(const Vector& v, Index rows, Index cols) { return Eigen::Map<const Tensor2>(v.data(), rows, cols); }

}  // namespace

double decision_margin(std::span<const VideoSample* const> batch, const Params& params,
                       const CenterBank& bank, const TrainConfig& cfg, std::span<const double> betas) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoSample& v = *batch[i];
    const SampleForward fw = forward(v, params, cfg.model);
    for (const auto& ec : fw.embed) {
      margin = std::min({margin, ec.pre1.cwiseAbs().minCoeff(), ec.pre2.cwiseAbs().minCoeff()});
    }
    const Index l = v.length();
    const Index k = topk_count(l, cfg.s);
    std::vector<Branch> branches = active_branches(cfg.model);
    for (Branch b : branches) margin = std::min(margin, topk_gap(fw.branch_tcam(b), k));
    margin = std::min(margin, topk_gap(fw.final_tcam, k));
    if (cfg.model.adversarial) {
      const auto ka = static_cast<Index>(std::floor(static_cast<double>(l) / cfg.model.erase_ratio));
      margin = std::min(margin, topk_gap(fw.branch_tcam(Branch::rgb), ka));
      margin = std::min(margin, topk_gap(fw.branch_tcam(Branch::flow), ka));
    }
    for (Branch b : branches) {
      const Tensor2& xe = fw.features(stream_of(b));
      const Tensor2 big = aggregate_all(xe, attention(fw.branch_tcam(b)));
      const Tensor2 small = aggregate_all(xe, tempered_attention(fw.branch_tcam(b), betas[i]));
      const Tensor2& centers = bank.set(b);
      for (Index j = 0; j < v.labels.size(); ++j) {
        if (v.labels(j) != 1.0) continue;
        const Vector fj = big.col(j), sj = small.col(j);
        if (!(fj.norm() > 0.0) || !(sj.norm() > 0.0)) return 0.0;
        std::vector<double> d;
        for (Index c = 0; c < centers.rows(); ++c) {
          if (c != j) d.push_back(angular_distance(fj, Vector(centers.row(c).transpose())));
        }
        std::sort(d.begin(), d.end());
        if (d.size() >= 2) margin = std::min(margin, d[1] - d[0]);
        const Vector cj = centers.row(j).transpose();
        const double pos = angular_distance(fj, cj);
        margin = std::min(margin, std::abs(pos - d[0] + cfg.m1));
        margin = std::min(margin, std::abs(pos - angular_distance(sj, cj) + cfg.m2));
        margin = std::min({margin, pos, std::numbers::pi - pos});
      }
    }
  }
  return margin;
}

GradcheckReport gradcheck(const GradcheckOptions& opt) {
  TrainConfig cfg = opt.train;
  cfg.model.feature_dim = opt.feature_dim;
  cfg.model.embed_dim = opt.embed_dim;
  cfg.model.num_classes = opt.num_classes;
  cfg.threads = 1;
  validate_train_config(cfg);
  if (opt.num_classes < 2) throw InvalidInput("gradcheck: needs at least two classes");

  GradcheckReport report;
  std::map<std::string, std::size_t> slot;
  auto note = [&](const std::string& name, const GradCheckResult& r, int inst) {
    auto it = slot.find(name);
    if (it == slot.end()) {
      slot[name] = report.groups.size();
      report.groups.push_back(GroupCheck{name, r.max_rel_error, r.worst_coordinate, inst});
      return;
    }
    GroupCheck& g = report.groups[it->second];
    if (r.max_rel_error > g.max_rel_error || r.nonfinite_coordinate) {
      g.max_rel_error = r.max_rel_error;
      g.worst_coordinate = r.worst_coordinate;
      g.instance = inst;
    }
  };

  for (int inst = 0; inst < opt.instances; ++inst) {
    std::mt19937_64 rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(inst));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<VideoSample> samples;
    Params params;
    CenterBank bank;
    std::vector<double> betas;
    std::vector<const VideoSample*> batch;
    int attempts = 0;
    for (;; ++attempts) {
      if (attempts > 1000) throw InvalidInput("gradcheck: could not draw a non-degenerate instance");
      samples.clear();
      betas.clear();
      for (int b = 0; b < opt.batch; ++b) {
        VideoSample v;
        v.id = "gc" + std::to_string(b);
        v.rgb = Tensor2::NullaryExpr(opt.feature_dim, opt.length, [&] { return normal(rng); });
        v.flow = Tensor2::NullaryExpr(opt.feature_dim, opt.length, [&] { return normal(rng); });
        v.labels = Vector::Zero(opt.num_classes);
        v.labels(static_cast<Index>(unif(rng) * opt.num_classes)) = 1.0;
        for (Index j = 0; j < v.labels.size(); ++j)
          if (unif(rng) < 0.3) v.labels(j) = 1.0;
        samples.push_back(std::move(v));
        betas.push_back(cfg.beta_min + (cfg.beta_max - cfg.beta_min) * unif(rng));
      }
      params = init_params(cfg.model, rng);
      for_each_tensor(params, [&](const std::string& name, auto& t, bool decay) {
        if (!decay) {
          const bool fusion = name.rfind("fusion.", 0) == 0;
          t = t.unaryExpr([&](double) { return fusion ? 0.5 + unif(rng) : 0.2 * (unif(rng) - 0.5); });
        }
      });
      bank = init_centers(opt.num_classes, opt.embed_dim, rng);
      batch.clear();
      for (const auto& v : samples) batch.push_back(&v);
      if (decision_margin(batch, params, bank, cfg, betas) >= opt.min_margin) break;
      ++report.redrawn;
    }

    // Network parameters through the whole objective.
    BatchResult fb = forward_backward(batch, params, bank, cfg, betas);
    Params analytic = fb.grad;
    if (opt.corrupt_analytic) opt.corrupt_analytic(analytic);
    const Vector x0 = flatten(params);
    const Vector an = flatten(analytic);
    for (const auto& g : parameter_groups(params)) {
      Params probe = params;
      auto f = [&](const Vector& xg) {
        Vector x = x0;
        x.segment(g.offset, g.size) = xg;
        unflatten(x, probe);
        return batch_loss(batch, probe, bank, cfg, betas);
      };
      note(g.name, fd_grad_check(f, x0.segment(g.offset, g.size), opt.eps, an.segment(g.offset, g.size)), inst);
    }

    // Loss-level gradients on the first video's RGB branch.
    const VideoSample& v0 = samples.front();
    const SampleForward fw = forward(v0, params, cfg.model);
    const Tensor2& xe = fw.features(Stream::rgb);
    const Tensor2& c0 = fw.branch_tcam(Branch::rgb);
    const Tensor2& centers = bank.set(Branch::rgb);
    const TripletHyper hyper = triplet_hyper(cfg, betas.front());
    const BranchLoss bl = aclpt_loss({&xe, &c0, &v0.labels, &centers, hyper});
    const ClsLoss cl = cls_loss(c0, v0.labels, cfg.s);
    {
      auto f = [&](const Vector& x) {
        const Tensor2 c = shaped(x, c0.rows(), c0.cols());
        return aclpt_loss({&xe, &c, &v0.labels, &centers, hyper}).aclpt + cls_loss(c, v0.labels, cfg.s).value;
      };
      note("loss.tcam", fd_grad_check(f, flat_of(c0), opt.eps, flat_of(Tensor2(bl.d_tcam + cl.d_tcam))), inst);
    }
    {
      auto f = [&](const Vector& x) {
        const Tensor2 feats = shaped(x, xe.rows(), xe.cols());
        return aclpt_loss({&feats, &c0, &v0.labels, &centers, hyper}).aclpt;
      };
      note("loss.features", fd_grad_check(f, flat_of(xe), opt.eps, flat_of(bl.d_xe)), inst);
    }
    {
      auto f = [&](const Vector& x) {
        const Tensor2 cs = shaped(x, centers.rows(), centers.cols());
        return aclpt_loss({&xe, &c0, &v0.labels, &cs, hyper}).aclpt;
      };
      note("loss.centers", fd_grad_check(f, flat_of(centers), opt.eps, flat_of(bl.d_centers)), inst);
    }
    {
      const Tensor2 big = aggregate_all(xe, attention(c0));
      const Tensor2 small = aggregate_all(xe, tempered_attention(c0, hyper.beta));
      const TripletLoss at = atcl_loss(big, v0.labels, centers, cfg.m1);
      const TripletLoss nt = nt_loss(big, small, v0.labels, centers, cfg.m2);
      Vector x(2 * big.size());
      x << flat_of(big), flat_of(small);
      Vector an_agg(x.size());
      an_agg << flat_of(Tensor2(at.d_attended + cfg.gamma * nt.d_attended)), flat_of(Tensor2(cfg.gamma * nt.d_tempered));
      auto f = [&](const Vector& y) {
        const Tensor2 b = shaped(y.head(big.size()), big.rows(), big.cols());
        const Tensor2 s = shaped(y.tail(big.size()), big.rows(), big.cols());
        return atcl_loss(b, v0.labels, centers, cfg.m1).value + cfg.gamma * nt_loss(b, s, v0.labels, centers, cfg.m2).value;
      };
      note("loss.aggregates", fd_grad_check(f, x, opt.eps, an_agg), inst);
    }

    // Averaged center update against the naive transcription.
    for (Branch b : kAllBranches) {
      const Tensor2 naive = cfg.alpha * naive_center_delta(fb.records[index_of(b)], bank.set(b), cfg.gamma,
                                                           cfg.scale_nt_by_gamma, opt.batch);
      report.center_oracle_max_abs =
          std::max(report.center_oracle_max_abs, (naive - fb.center_delta[index_of(b)]).cwiseAbs().maxCoeff());
    }
    ++report.instances;
  }
  return report;
}

void print_gradcheck_report(std::ostream& out, const GradcheckReport& r, double tolerance) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %14s %8s %8s  %s\n", "group", "max_rel_err", "coord", "instance", "status");
  out << line;
  for (const auto& g : r.groups) {
    std::snprintf(line, sizeof(line), "%-24s %14.6e %8lld %8d  %s\n", g.name.c_str(), g.max_rel_error,
                  static_cast<long long>(g.worst_coordinate), g.instance,
                  g.max_rel_error < tolerance ? "ok" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-24s %14.6e %8s %8s  %s\n", "centers.oracle_abs", r.center_oracle_max_abs, "-",
                "-", r.center_oracle_max_abs <= 1e-10 ? "ok" : "FAIL");
  out << line;
  out << "instances=" << r.instances << " redrawn=" << r.redrawn << " tolerance=" << tolerance
      << (r.passed(tolerance) ? " PASS" : " FAIL") << '\n';
}

}  // namespace a2clpt
