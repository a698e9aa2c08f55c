#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gf/glance.hpp"
#include "gf/trainer.hpp"
#include "testutil.hpp"

using namespace gf;

namespace {

Tensor probs(const std::vector<std::vector<Real>>& rows) {
  std::vector<Real> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), rows.front().size()}, std::move(flat));
}

Tensor spans_of(const std::vector<Span>& spans) {
  std::vector<Real> flat;
  for (const Span& s : spans) {
    flat.push_back(s.center);
    flat.push_back(s.width);
  }
  return Tensor::from({spans.size(), 2}, std::move(flat));
}

}  // namespace

TEST_CASE("glance_forward produces a well-formed memory bank") {
  Rng rng(1);
  AttentionConfig cfg{32, 4, 2, 0.0};
  GlanceParams params = GlanceParams::init(cfg, 6, 5, rng);
  Tensor video = gftest::random_tensor({40, 32}, rng);
  MemoryBank bank = glance_forward(video, params);
  CHECK(bank.memories.shape() == Shape{6, 32});
  CHECK(bank.class_logits.shape() == Shape{6, 5});
  CHECK(bank.spans.shape() == Shape{6, 2});
  for (std::size_t i = 0; i < 6; ++i) {
    Real row_sum = 0;
    for (std::size_t c = 0; c < 5; ++c) row_sum += bank.class_probs.at(i, c);
    CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    Span s = bank.span(i);
    CHECK(s.center >= 0.0);
    CHECK(s.center <= 1.0);
    CHECK(s.width >= 0.0);
    CHECK(s.width <= 1.0);
  }
}

TEST_CASE("glance_forward stays finite on degenerate repeated frames") {
  Rng rng(2);
  AttentionConfig cfg{16, 4, 2, 0.0};
  GlanceParams params = GlanceParams::init(cfg, 4, 3, rng);
  Tensor frame = gftest::random_tensor({1, 16}, rng);
  Tensor video = concat_rows(std::vector<Tensor>(12, frame));
  MemoryBank bank = glance_forward(video, params);
  for (Real v : bank.class_logits.values()) CHECK(std::isfinite(v));
  for (Real v : bank.spans.values()) CHECK(std::isfinite(v));
}

TEST_CASE("gradients reach the memory queries") {
  Rng rng(3);
  AttentionConfig cfg{16, 4, 1, 0.0};
  GlanceParams params = GlanceParams::init(cfg, 4, 3, rng);
  Tensor video = gftest::random_tensor({8, 16}, rng);
  {
    Tape tape;
    params.memory_queries.zero_grad();
    MemoryBank bank = glance_forward(video, params);
    Tensor loss = add(loss_certainty(bank), loss_temporal_overlap(bank));
    tape.backward(loss);
  }
  Real norm = 0;
  for (Real g : params.memory_queries.grad()) norm += std::fabs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("loss_certainty fixtures") {
  CHECK(loss_certainty(probs({{1, 0, 0, 0}, {0, 0, 1, 0}})).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss_certainty(probs({{0.25, 0.25, 0.25, 0.25}})).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(loss_certainty(probs({{0.5, 0.5, 0, 0}})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  // non-negative on random distributions
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    Tensor l = gftest::random_tensor({5, 6}, rng);
    CHECK(loss_certainty(softmax_rows(l)).item() >= 0.0);
  }
}

TEST_CASE("loss_semantic_diversity fixtures") {
  CHECK(loss_semantic_diversity(probs({{1, 0, 0}, {1, 0, 0}})).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss_semantic_diversity(probs({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})).item() ==
        doctest::Approx(-std::log(3.0)).epsilon(1e-9));
  CHECK(loss_semantic_diversity(probs({{1, 0}, {0.5, 0.5}})).item() ==
        doctest::Approx(0.75 * std::log(0.75) + 0.25 * std::log(0.25)).epsilon(1e-9));
  CHECK(loss_semantic_diversity(probs({{1, 0}, {0.5, 0.5}})).item() ==
        doctest::Approx(-0.56234).epsilon(1e-4));
  // bounded in [-ln C, 0]
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Tensor l = gftest::random_tensor({4, 7}, rng);
    const Real v = loss_semantic_diversity(softmax_rows(l)).item();
    CHECK(v <= 1e-12);
    CHECK(v >= -std::log(7.0) - 1e-12);
  }
}

TEST_CASE("loss_temporal_overlap fixtures") {
  CHECK(loss_temporal_overlap(spans_of({{0.4, 0.3}, {0.4, 0.3}})).item() ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(loss_temporal_overlap(spans_of({{0.25, 0.5}, {0.75, 0.5}})).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss_temporal_overlap(spans_of({{0.3, 0.4}, {0.5, 0.4}})).item() ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK_THROWS_AS(loss_temporal_overlap(spans_of({{0.5, 0.5}})), ContractError);
  // bounded in [0, 1]
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    Tensor s = sigmoid(gftest::random_tensor({5, 2}, rng));
    const Real v = loss_temporal_overlap(s).item();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("loss_diversity is the weighted sum") {
  Rng rng(7);
  AttentionConfig cfg{16, 4, 1, 0.0};
  GlanceParams params = GlanceParams::init(cfg, 4, 3, rng);
  Tensor video = gftest::random_tensor({8, 16}, rng);
  MemoryBank bank = glance_forward(video, params);
  const Real sem = loss_semantic_diversity(bank).item();
  const Real iou = loss_temporal_overlap(bank).item();
  CHECK(loss_diversity(bank, 0.0, 2.0).item() == doctest::Approx(2.0 * iou).epsilon(1e-12));
  CHECK(loss_diversity(bank, 3.0, 0.0).item() == doctest::Approx(3.0 * sem).epsilon(1e-12));
  CHECK(loss_diversity(bank, 1.0, 1.0).item() == doctest::Approx(sem + iou).epsilon(1e-12));
  CHECK_THROWS_AS(loss_diversity(bank, -1.0, 0.0), ContractError);
}

TEST_CASE("all three glance losses pass finite differences") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor raw = gftest::random_tensor({4, 6}, rng);
    CHECK(finite_diff_check(
              [](const Tensor& t) { return loss_certainty(softmax_rows(t)); },
              raw.clone(), 1e-4) < 1e-3);
    CHECK(finite_diff_check(
              [](const Tensor& t) { return loss_semantic_diversity(softmax_rows(t)); },
              raw.clone(), 1e-4) < 1e-3);
    Tensor raw_spans = gftest::random_tensor({4, 2}, rng);
    CHECK(finite_diff_check(
              [](const Tensor& t) { return loss_temporal_overlap(sigmoid(t)); },
              raw_spans.clone(), 1e-4) < 1e-3);
  }
}

TEST_CASE("information maximization drives one-hot rows with a uniform marginal") {
  const std::size_t n = 8, c = 8;
  Rng rng(17);
  Tensor logits = gftest::random_tensor({n, c}, rng, 0.5);
  logits.set_requires_grad(true);
  ParamMap params{{"logits", logits}};
  AdamState adam;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    logits.zero_grad();
    Tensor p = softmax_rows(logits);
    Tensor loss = add(loss_certainty(p), loss_semantic_diversity(p));
    tape.backward(loss);
    adam.apply(params, 0.1);
  }
  Tensor p = softmax_rows(logits);
  CHECK(loss_certainty(p).item() < 0.05);
  // marginal entropy = -loss_semantic_diversity
  CHECK(-loss_semantic_diversity(p).item() > std::log(8.0) - 0.05);
}

TEST_CASE("memory bank is identical regardless of batch company") {
  // Forward passes are per-sequence; computing another video in between must
  // not perturb the first one's bank.
  Rng rng(9);
  AttentionConfig cfg{16, 4, 2, 0.0};
  GlanceParams params = GlanceParams::init(cfg, 4, 3, rng);
  Tensor a = gftest::random_tensor({10, 16}, rng);
  Tensor b = gftest::random_tensor({7, 16}, rng);
  MemoryBank alone = glance_forward(a, params);
  glance_forward(b, params);
  MemoryBank again = glance_forward(a, params);
  CHECK(alone.class_logits.values() == again.class_logits.values());
  CHECK(alone.spans.values() == again.spans.values());
}
