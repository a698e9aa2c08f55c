#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gf/glance.hpp"
#include "gf/matching.hpp"
#include "testutil.hpp"

using namespace gf;

namespace {

// A bank with exact probability rows and spans, for fixture-driven tests.
MemoryBank fixture_bank(const std::vector<std::vector<Real>>& probs,
                        const std::vector<Span>& spans) {
  const std::size_t n = probs.size(), c = probs.front().size();
  std::vector<Real> pv, sv, logits;
  for (const auto& row : probs) {
    for (Real p : row) {
      pv.push_back(p);
      logits.push_back(std::log(std::max(p, 1e-30)));
    }
  }
  for (const Span& s : spans) {
    sv.push_back(s.center);
    sv.push_back(s.width);
  }
  MemoryBank bank;
  bank.memories = Tensor::zeros({n, 4});
  bank.class_logits = Tensor::from({n, c}, std::move(logits));
  bank.class_probs = Tensor::from({n, c}, std::move(pv));
  bank.spans = Tensor::from({n, 2}, std::move(sv));
  return bank;
}

}  // namespace

TEST_CASE("temporal_iou basics") {
  CHECK(temporal_iou({0.5, 0.4}, {0.5, 0.4}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(temporal_iou({0.25, 0.5}, {0.75, 0.5}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(temporal_iou({0.3, 0.4}, {0.5, 0.4}) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  // symmetry on random spans
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    Span a{rng.uniform(), rng.uniform()};
    Span b{rng.uniform(), rng.uniform()};
    const Real ab = temporal_iou(a, b);
    CHECK(ab == temporal_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
  // zero-width spans stay defined
  CHECK(temporal_iou({0.5, 0.0}, {0.5, 0.0}) == 0.0);
}

TEST_CASE("matching cost matrix per the bipartite cost definition") {
  MemoryBank bank = fixture_bank({{0.1, 0.1, 0.8}}, {{0.6, 0.2}});
  // no-event row is identically zero
  auto cost0 = matching_cost_matrix({GroundTruthEvent::no_event()}, bank, 1.0, 5.0);
  CHECK(cost0[0][0] == 0.0);
  // -l_cls * p_hat + l_l1 * (|dc| + |dw|)
  auto cost = matching_cost_matrix({GroundTruthEvent::of(2, 0.5, 0.2)}, bank, 1.0, 5.0);
  CHECK(cost[0][0] == doctest::Approx(-0.3).epsilon(1e-9));
  // perfect prediction costs exactly -l_cls
  MemoryBank perfect = fixture_bank({{0, 0, 1}}, {{0.5, 0.2}});
  auto cost2 = matching_cost_matrix({GroundTruthEvent::of(2, 0.5, 0.2)}, perfect, 1.0, 5.0);
  CHECK(cost2[0][0] == doctest::Approx(-1.0).epsilon(1e-9));

  CHECK_THROWS_AS(matching_cost_matrix({}, bank, 1.0, 5.0), ContractError);
}

TEST_CASE("hungarian on pinned examples") {
  Assignment diag = hungarian({{0, 1}, {1, 0}});
  CHECK(diag.perm == std::vector<std::size_t>{0, 1});
  CHECK(diag.cost == 0.0);

  Assignment a = hungarian({{4, 1, 3}, {2, 0, 5}, {3, 2, 2}});
  CHECK(a.perm == std::vector<std::size_t>{1, 0, 2});
  CHECK(a.cost == doctest::Approx(5.0).epsilon(1e-12));

  CHECK_THROWS_AS(hungarian({{1, 2}, {3}}), ContractError);
  CHECK_THROWS_AS(hungarian({{std::numeric_limits<Real>::infinity()}}), ContractError);
}

TEST_CASE("hungarian equals brute force on random matrices") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.index(5);  // up to 6x6
    std::vector<std::vector<Real>> cost(n, std::vector<Real>(n));
    for (auto& row : cost) {
      for (Real& v : row) v = rng.uniform(-5.0, 5.0);
    }
    auto oracle = gftest::brute_force_assignment(cost);
    Assignment got = hungarian(cost);
    CHECK(got.cost == oracle.cost);
    CHECK(got.perm == oracle.perm);
  }
}

TEST_CASE("hungarian picks the lexicographically smallest tie") {
  // Every permutation of this matrix costs 2.
  Assignment tie = hungarian({{1, 1}, {1, 1}});
  CHECK(tie.perm == std::vector<std::size_t>{0, 1});

  std::vector<std::vector<Real>> all_same(4, std::vector<Real>(4, 3.0));
  Assignment tie4 = hungarian(all_same);
  CHECK(tie4.perm == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("hungarian invariant to row and column shifts") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5;
    std::vector<std::vector<Real>> cost(n, std::vector<Real>(n));
    for (auto& row : cost) {
      for (Real& v : row) v = rng.uniform(-2.0, 2.0);
    }
    Assignment base = hungarian(cost);

    auto shifted = cost;
    const Real row_shift = rng.uniform(-3.0, 3.0);
    const Real col_shift = rng.uniform(-3.0, 3.0);
    for (std::size_t j = 0; j < n; ++j) shifted[2][j] += row_shift;
    for (std::size_t i = 0; i < n; ++i) shifted[i][3] += col_shift;
    Assignment moved = hungarian(shifted);
    CHECK(moved.perm == base.perm);
    CHECK(moved.cost == doctest::Approx(base.cost + row_shift + col_shift).epsilon(1e-9));
  }
}

TEST_CASE("permuting predictions permutes the assignment, cost unchanged") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5;
    std::vector<std::vector<Real>> cost(n, std::vector<Real>(n));
    for (auto& row : cost) {
      for (Real& v : row) v = rng.uniform(0.0, 1.0);
    }
    std::vector<std::size_t> shuffle(n);
    for (std::size_t i = 0; i < n; ++i) shuffle[i] = i;
    rng.shuffle(shuffle);  // shuffle[j] = new position of old column j

    std::vector<std::vector<Real>> permuted(n, std::vector<Real>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) permuted[i][shuffle[j]] = cost[i][j];
    }
    Assignment base = hungarian(cost);
    Assignment perm = hungarian(permuted);
    CHECK(perm.cost == doctest::Approx(base.cost).epsilon(1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(perm.perm[i] == shuffle[base.perm[i]]);
    }
  }
}

TEST_CASE("supervised losses on a perfect match vanish") {
  MemoryBank bank = fixture_bank(
      {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}},
      {{0.2, 0.1}, {0.6, 0.2}, {0.5, 0.5}});
  std::vector<GroundTruthEvent> gt = {GroundTruthEvent::of(0, 0.2, 0.1),
                                      GroundTruthEvent::of(1, 0.6, 0.2),
                                      GroundTruthEvent::no_event()};
  Assignment asg{{0, 1, 2}, 0.0};
  SupervisedLosses l = supervised_losses(gt, bank, asg);
  CHECK(l.l_cls.item() < 1e-9);
  CHECK(l.l_l1.item() == 0.0);
}

TEST_CASE("all no-event slots with uniform predictions give ln(C+1)") {
  const std::size_t cp1 = 5;  // C = 4 plus the no-event class
  MemoryBank bank = fixture_bank(
      {{0.2, 0.2, 0.2, 0.2, 0.2}, {0.2, 0.2, 0.2, 0.2, 0.2}},
      {{0.3, 0.1}, {0.7, 0.1}});
  std::vector<GroundTruthEvent> gt = {GroundTruthEvent::no_event(),
                                      GroundTruthEvent::no_event()};
  Assignment asg{{0, 1}, 0.0};
  SupervisedLosses l = supervised_losses(gt, bank, asg);
  CHECK(l.l_cls.item() == doctest::Approx(std::log(static_cast<Real>(cp1))).epsilon(1e-9));
  CHECK(l.l_l1.item() == 0.0);
}

TEST_CASE("span L1 on a single off-by event") {
  MemoryBank bank = fixture_bank({{0.5, 0.5}, {0.5, 0.5}},
                                 {{0.4, 0.25}, {0.9, 0.05}});
  std::vector<GroundTruthEvent> gt = {GroundTruthEvent::of(0, 0.3, 0.2),
                                      GroundTruthEvent::no_event()};
  Assignment asg{{0, 1}, 0.0};
  SupervisedLosses l = supervised_losses(gt, bank, asg);
  CHECK(l.l_l1.item() == doctest::Approx(0.15).epsilon(1e-9));
}

TEST_CASE("supervised losses differentiate through the bank") {
  Rng rng(13);
  Tensor logits = gftest::random_tensor({3, 4}, rng);
  std::vector<GroundTruthEvent> gt = {GroundTruthEvent::of(1, 0.3, 0.2),
                                      GroundTruthEvent::of(2, 0.7, 0.1),
                                      GroundTruthEvent::no_event()};
  auto loss_of = [&](const Tensor& raw) {
    MemoryBank bank;
    bank.memories = Tensor::zeros({3, 4});
    bank.class_logits = raw;
    bank.class_probs = softmax_rows(raw);
    bank.spans = sigmoid(slice_cols(raw, 0, 2));
    Assignment asg{{0, 1, 2}, 0.0};
    SupervisedLosses l = supervised_losses(gt, bank, asg);
    return add(l.l_cls, l.l_l1);
  };
  Real err = finite_diff_check(loss_of, logits, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("pad_events fills with no-event and rejects overflow") {
  auto padded = pad_events({GroundTruthEvent::of(0, 0.5, 0.1)}, 3);
  CHECK(padded.size() == 3);
  CHECK(padded[0].is_event());
  CHECK_FALSE(padded[1].is_event());
  CHECK_FALSE(padded[2].is_event());
  CHECK_THROWS_AS(pad_events(padded, 2), ContractError);
}
