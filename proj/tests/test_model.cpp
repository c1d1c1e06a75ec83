#include <doctest.h>

#include <set>

#include "a2clpt/model.hpp"
#include "support.hpp"

using namespace a2clpt;
using namespace testsupport;

namespace {

ConvHead random_head(int nc, int e, int kappa, std::mt19937_64& rng) {
  ConvHead h;
  for (int u = 0; u < kappa; ++u) h.taps.push_back(gaussian(nc, e, rng));
  h.bias = gaussian_vec(nc, rng);
  return h;
}

// Direct cross-correlation with zero padding (kappa - 1) / 2.
Tensor2 naive_conv(const Tensor2& xe, const ConvHead& h) {
  const int kappa = h.kernel_size();
  const Index nc = h.bias.size(), l = xe.cols();
  Tensor2 c(nc, l);
  for (Index j = 0; j < nc; ++j) {
    for (Index t = 0; t < l; ++t) {
      double acc = h.bias(j);
      for (int u = 0; u < kappa; ++u) {
        const Index src = t + u - (kappa - 1) / 2;
        if (src < 0 || src >= l) continue;
        for (Index e = 0; e < xe.rows(); ++e) acc += h.taps[static_cast<std::size_t>(u)](j, e) * xe(e, src);
      }
      c(j, t) = acc;
    }
  }
  return c;
}

Vector flat(const Tensor2& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Tensor2 unflat(const Vector& v, Index r, Index c) { return Eigen::Map<const Tensor2>(v.data(), r, c); }

}  // namespace

TEST_CASE("embedding is two ReLU layers") {
  std::mt19937_64 rng(1);
  StreamEmbedding p{gaussian(5, 4, rng), gaussian_vec(5, rng), gaussian(3, 5, rng), gaussian_vec(3, rng)};
  const Tensor2 x = gaussian(4, 6, rng);
  const Tensor2 out = embed(x, p);
  for (Index t = 0; t < 6; ++t) {
    const Vector h = (p.w1 * x.col(t) + p.b1).cwiseMax(0.0);
    const Vector want = (p.w2 * h + p.b2).cwiseMax(0.0);
    CHECK((out.col(t) - want).norm() < 1e-12);
  }
  StreamEmbedding bad = p;
  bad.w1 = gaussian(5, 7, rng);
  CHECK_THROWS_AS(embed(x, bad), InvalidInput);
}

TEST_CASE("T-CAM equals naive cross-correlation for odd kernel sizes") {
  std::mt19937_64 rng(2);
  for (int kappa : {1, 3, 5, 7}) {
    for (Index l : {1, 2, 3, 6, 11}) {
      const ConvHead h = random_head(3, 4, kappa, rng);
      const Tensor2 xe = gaussian(4, l, rng);
      CHECK((tcam(xe, h) - naive_conv(xe, h)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("T-CAM gradients match finite differences") {
  std::mt19937_64 rng(3);
  const ConvHead h = random_head(3, 4, 3, rng);
  const Tensor2 xe = gaussian(4, 7, rng);
  const Tensor2 w = gaussian(3, 7, rng);  // upstream gradient of sum(w .* c)
  ConvHead grad{std::vector<Tensor2>(3, Tensor2::Zero(3, 4)), Vector::Zero(3)};
  Tensor2 d_xe = Tensor2::Zero(4, 7);
  tcam_backward(xe, h, w, grad, &d_xe);
  for (int u = 0; u < 3; ++u) {
    auto f = [&](const Vector& x) {
      ConvHead q = h;
      q.taps[static_cast<std::size_t>(u)] = unflat(x, 3, 4);
      return (w.array() * tcam(xe, q).array()).sum();
    };
    CHECK(fd_grad_check(f, flat(h.taps[static_cast<std::size_t>(u)]), 1e-5, flat(grad.taps[static_cast<std::size_t>(u)]))
              .max_rel_error < 1e-4);
  }
  auto fx = [&](const Vector& x) { return (w.array() * tcam(unflat(x, 4, 7), h).array()).sum(); };
  CHECK(fd_grad_check(fx, flat(xe), 1e-5, flat(d_xe)).max_rel_error < 1e-4);
  CHECK((grad.bias - w.rowwise().sum()).norm() < 1e-12);
}

TEST_CASE("erasing picks floor(l / s_a) top steps, lower index on ties") {
  Tensor2 c(2, 7);
  c << 5, 1, 5, 3, 5, 0, 2,  //
      0, 0, 0, 0, 0, 0, 0;
  CHECK(erased_steps(c, 0, 3.0) == std::vector<Index>{0, 2});
  CHECK(erased_steps(c, 1, 2.0) == std::vector<Index>{0, 1, 2});
  CHECK(erased_steps(c, 0, 40.0).empty());
  CHECK(erased_steps(c, 0, 1.0).size() == 7);
  CHECK_THROWS_AS(erased_steps(c, 0, 0.5), InvalidInput);

  const Tensor2 xe = Tensor2::Ones(3, 7);
  const Tensor2 m = adversarial_mask(xe, c, 0, 3.0);
  CHECK(m.col(0).isZero());
  CHECK(m.col(2).isZero());
  CHECK(m.col(1) == xe.col(1));
  CHECK(m.sum() == 15.0);
}

TEST_CASE("adversarial T-CAM row j sees the class-j masked features") {
  std::mt19937_64 rng(4);
  for (int kappa : {1, 3}) {
    const ConvHead h = random_head(3, 4, kappa, rng);
    const Tensor2 xe = gaussian(4, 9, rng);
    const Tensor2 c_first = gaussian(3, 9, rng);
    EraseMasks masks;
    const Tensor2 ca = adversarial_tcam(xe, c_first, h, 3.0, &masks);
    REQUIRE(masks.size() == 3);
    for (Index j = 0; j < 3; ++j) {
      CHECK(masks[static_cast<std::size_t>(j)] == erased_steps(c_first, j, 3.0));
      const Tensor2 ref = naive_conv(adversarial_mask(xe, c_first, j, 3.0), h);
      CHECK((ca.row(j) - ref.row(j)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK((adversarial_tcam_masked(xe, masks, h) - ca).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adversarial head gradient at a fixed mask") {
  std::mt19937_64 rng(5);
  const ConvHead h = random_head(3, 4, 3, rng);
  const Tensor2 xe = gaussian(4, 7, rng);
  EraseMasks masks;
  adversarial_tcam(xe, gaussian(3, 7, rng), h, 3.0, &masks);
  const Tensor2 w = gaussian(3, 7, rng);
  ConvHead grad{std::vector<Tensor2>(3, Tensor2::Zero(3, 4)), Vector::Zero(3)};
  Tensor2 d_xe = Tensor2::Zero(4, 7);
  adversarial_tcam_backward(xe, masks, h, w, grad, &d_xe);
  auto f = [&](const Vector& x) {
    ConvHead q = h;
    q.taps[1] = unflat(x, 3, 4);
    return (w.array() * adversarial_tcam_masked(xe, masks, q).array()).sum();
  };
  CHECK(fd_grad_check(f, flat(h.taps[1]), 1e-5, flat(grad.taps[1])).max_rel_error < 1e-4);
  auto fx = [&](const Vector& x) { return (w.array() * adversarial_tcam_masked(unflat(x, 4, 7), masks, h).array()).sum(); };
  CHECK(fd_grad_check(fx, flat(xe), 1e-5, flat(d_xe)).max_rel_error < 1e-4);
}

TEST_CASE("fusion weights each stream per class") {
  std::mt19937_64 rng(6);
  const Tensor2 r = gaussian(3, 5, rng), ra = gaussian(3, 5, rng), o = gaussian(3, 5, rng), oa = gaussian(3, 5, rng);
  FusionParams fp{gaussian_vec(3, rng), gaussian_vec(3, rng)};
  const double omega = 0.6;
  const Tensor2 cf = fuse(r, ra, o, oa, fp, omega);
  for (Index j = 0; j < 3; ++j)
    for (Index t = 0; t < 5; ++t)
      CHECK(cf(j, t) == doctest::Approx(fp.w_rgb(j) * (r(j, t) + omega * ra(j, t)) +
                                        fp.w_flow(j) * (o(j, t) + omega * oa(j, t))));

  const Tensor2 w = gaussian(3, 5, rng);
  const FuseGrad g = fuse_backward(r, ra, o, oa, fp, omega, w);
  auto f = [&](const Vector& x) {
    FusionParams q = fp;
    q.w_rgb = x;
    return (w.array() * fuse(r, ra, o, oa, q, omega).array()).sum();
  };
  CHECK(fd_grad_check(f, fp.w_rgb, 1e-5, g.d_w_rgb).max_rel_error < 1e-6);
  CHECK((g.d_ra - omega * fp.w_rgb.asDiagonal() * w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(fuse(r, ra, o, Tensor2(oa.leftCols(4)), fp, omega), InvalidInput);
}

TEST_CASE("parameters flatten, unflatten and group consistently") {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.embed_dim = 5;
  cfg.num_classes = 3;
  cfg.kernel_size = 3;
  std::mt19937_64 rng(7);
  const Params p = init_params(cfg, rng);
  const Index expected = 2 * (5 * 6 + 5 + 5 * 5 + 5) + 4 * (3 * 3 * 5 + 3) + 2 * 3;
  CHECK(parameter_count(p) == expected);
  const Vector v = flatten(p);
  CHECK(v.size() == expected);
  Params q = zeros_like(p);
  CHECK(flatten(q).isZero());
  unflatten(v, q);
  CHECK(flatten(q) == v);

  Index covered = 0;
  std::set<std::string> names;
  for (const auto& g : parameter_groups(p)) {
    CHECK(g.offset == covered);
    covered += g.size;
    names.insert(g.name);
  }
  CHECK(covered == expected);
  CHECK(names.count("embed.rgb.w1") == 1);
  CHECK(names.count("head.flow_adv.tap2") == 1);
  CHECK(names.count("fusion.w_flow") == 1);

  CHECK(p.fusion.w_rgb == Vector::Ones(3));
  CHECK(p.embed(Stream::rgb).b1.isZero());
  CHECK(p.embed(Stream::flow).w1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK_THROWS_AS(unflatten(Vector(v.head(3)), q), InvalidInput);
}

TEST_CASE("full forward composes the pieces") {
  ModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.embed_dim = 5;
  cfg.num_classes = 3;
  cfg.kernel_size = 3;
  cfg.erase_ratio = 3.0;
  std::mt19937_64 rng(8);
  Params p = init_params(cfg, rng);
  p.fusion.w_rgb = gaussian_vec(3, rng);
  const VideoSample v = random_video(4, 9, 3, rng);
  const SampleForward fw = forward(v, p, cfg);
  const Tensor2 xr = embed(v.rgb, p.embed(Stream::rgb));
  CHECK(fw.features(Stream::rgb) == xr);
  const Tensor2 cr = tcam(xr, p.head(Branch::rgb));
  CHECK(fw.branch_tcam(Branch::rgb) == cr);
  CHECK((fw.branch_tcam(Branch::rgb_adv) - adversarial_tcam(xr, cr, p.head(Branch::rgb_adv), 3.0)).isZero());
  const Tensor2 want = fuse(fw.tcam[0], fw.tcam[1], fw.tcam[2], fw.tcam[3], p.fusion, cfg.omega);
  CHECK((fw.final_tcam - want).cwiseAbs().maxCoeff() < 1e-12);

  cfg.adversarial = false;
  const SampleForward plain = forward(v, p, cfg);
  const Tensor2 zero = Tensor2::Zero(3, 9);
  CHECK((plain.final_tcam - fuse(plain.tcam[0], zero, plain.tcam[2], zero, p.fusion, 0.0)).isZero());
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(validate_model_config(cfg));
  cfg.kernel_size = 2;
  CHECK_THROWS_AS(validate_model_config(cfg), InvalidInput);
  cfg = ModelConfig{};
  cfg.erase_ratio = 0.5;
  CHECK_THROWS_AS(validate_model_config(cfg), InvalidInput);
  cfg = ModelConfig{};
  cfg.num_classes = 0;
  CHECK_THROWS_AS(validate_model_config(cfg), InvalidInput);
}
