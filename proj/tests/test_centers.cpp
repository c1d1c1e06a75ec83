#include <doctest.h>

#include "a2clpt/centers.hpp"
#include "a2clpt/loss.hpp"
#include "center_oracle.hpp"
#include "support.hpp"

using namespace a2clpt;
using namespace testsupport;

TEST_CASE("initial centers are unit rows per branch") {
  std::mt19937_64 rng(1);
  const CenterBank bank = init_centers(4, 6, rng);
  for (Branch b : kAllBranches) {
    CHECK(bank.set(b).rows() == 4);
    CHECK(bank.set(b).cols() == 6);
  }
  CHECK(max_unit_norm_deviation(bank) < 1e-12);
  CHECK_FALSE(bank.set(Branch::rgb).isApprox(bank.set(Branch::flow)));
}

TEST_CASE("nearest negative excludes the own class and breaks ties low") {
  Tensor2 c(3, 2);
  c << 1, 0,  //
      0, 1,   //
      0, -1;
  Vector f(2);
  f << 1, 0;
  CHECK(nearest_negative(f, c, 0) == 1);  // classes 1 and 2 are equally far
  f << 0.1, -1;
  CHECK(nearest_negative(f, c, 0) == 2);
  CHECK(nearest_negative(f, c, 2) == 0);
  CHECK_THROWS_AS(nearest_negative(f, Tensor2(c.topRows(1)), 0), InvalidInput);
}

TEST_CASE("center gradients match the per-sample oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Index nc = uniform_int(rng, 2, 5), e = uniform_int(rng, 2, 6);
    const int n = uniform_int(rng, 1, 4);
    const Tensor2 centers = unit_rows(nc, e, rng);
    TripletHyper h;
    h.m1 = uniform(rng, 0.0, 3.0);
    h.m2 = uniform(rng, 0.0, 2.0);
    h.gamma = uniform(rng, 0.1, 1.0);
    std::vector<OracleSample> batch;
    std::vector<TripletRecord> records;
    for (int i = 0; i < n; ++i) {
      OracleSample s;
      const Index l = uniform_int(rng, 1, 9);
      s.xe = gaussian(e, l, rng).cwiseMax(0.0);
      s.tcam = gaussian(nc, l, rng, 2.0);
      s.labels = random_labels(nc, rng, 0.5);
      s.beta = uniform(rng, 0.001, 0.1);
      h.beta = s.beta;
      const BranchLoss bl = aclpt_loss({&s.xe, &s.tcam, &s.labels, &centers, h});
      records.insert(records.end(), bl.records.begin(), bl.records.end());
      batch.push_back(std::move(s));
    }
    for (bool scaled : {true, false}) {
      const Tensor2 got = center_grads(records, centers, CenterGradOptions{h.gamma, scaled}, n);
      const Tensor2 want = naive_center_delta(batch, centers, h.m1, h.m2, scaled ? h.gamma : 1.0);
      REQUIRE((got - want).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("an inactive batch leaves the centers alone") {
  std::mt19937_64 rng(3);
  const Tensor2 centers = unit_rows(3, 4, rng);
  TripletRecord r;
  r.cls = 0;
  r.negative = 1;
  r.attended = gaussian_vec(4, rng);
  r.tempered = gaussian_vec(4, rng);
  CHECK(center_grads({r}, centers, {}, 1).isZero());
  CHECK_THROWS_AS(center_grads({r}, centers, {}, 0), InvalidInput);
}

TEST_CASE("property: updates keep every center on the unit sphere") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor2 c = unit_rows(uniform_int(rng, 2, 6), uniform_int(rng, 2, 8), rng);
    const Tensor2 delta = gaussian(c.rows(), c.cols(), rng, uniform(rng, 0.0, 3.0));
    update_centers(c, delta, uniform(rng, 0.0, 0.5));
    REQUIRE((c.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  Tensor2 c(1, 2);
  c << 1, 0;
  Tensor2 collapse(1, 2);
  collapse << 1, 0;
  CHECK_THROWS(update_centers(c, collapse, 1.0));
}

TEST_CASE("bank update uses the per-stream learning rate") {
  std::mt19937_64 rng(5);
  CenterBank bank = init_centers(3, 4, rng);
  const CenterBank before = bank;
  std::array<Tensor2, 4> deltas;
  for (auto& d : deltas) d = gaussian(3, 4, rng);
  update_bank(bank, deltas, 0.1, 0.2);
  for (Branch b : kAllBranches) {
    const double lr = stream_of(b) == Stream::rgb ? 0.1 : 0.2;
    Tensor2 want = before.set(b) - lr * deltas[static_cast<std::size_t>(index_of(b))];
    want.rowwise().normalize();
    CHECK((bank.set(b) - want).cwiseAbs().maxCoeff() < 1e-14);
  }
}
