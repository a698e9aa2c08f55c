#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gf/transformer.hpp"
#include "testutil.hpp"

using namespace gf;

namespace {
AttentionConfig tiny{16, 4, 2, 0.0};
}

TEST_CASE("attention config validation") {
  AttentionConfig bad{30, 4, 2, 0.0};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  CHECK_THROWS_AS((AttentionConfig{16, 4, 2, 1.0}).validate(), ContractError);
  CHECK_NOTHROW(tiny.validate());
}

TEST_CASE("multi_head_attention shapes and row-stochastic weights") {
  Rng rng(1);
  AttentionBlock block = AttentionBlock::init(16, rng);
  Tensor q = gftest::random_tensor({5, 16}, rng);
  Tensor kv = gftest::random_tensor({4, 16}, rng);
  AttentionResult res = multi_head_attention(block, q, kv, kv, nullptr, 4);
  CHECK(res.output.rows() == 5);
  CHECK(res.output.cols() == 16);
  CHECK(res.head_weights.size() == 4);
  Tensor stacked = res.stacked_weights();
  CHECK(stacked.shape() == Shape{4, 5, 4});
  for (const Tensor& w : res.head_weights) {
    CHECK(w.rows() == 5);
    CHECK(w.cols() == 4);
    for (std::size_t i = 0; i < 5; ++i) {
      Real s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("all-equal keys give uniform attention rows") {
  Rng rng(2);
  AttentionBlock block = AttentionBlock::init(16, rng);
  Tensor q = gftest::random_tensor({3, 16}, rng);
  Tensor one_key = gftest::random_tensor({1, 16}, rng);
  Tensor keys = concat_rows({one_key, one_key, one_key, one_key, one_key});
  AttentionResult res = multi_head_attention(block, q, keys, keys, nullptr, 4);
  for (const Tensor& w : res.head_weights) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(w.at(i, j) == doctest::Approx(0.2).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("mask forbids keys exactly and renormalizes") {
  Rng rng(3);
  AttentionBlock block = AttentionBlock::init(16, rng);
  Tensor q = gftest::random_tensor({2, 16}, rng);
  Tensor kv = gftest::random_tensor({4, 16}, rng);
  AttentionMask mask = AttentionMask::all_allowed(2, 4);
  for (std::size_t i = 0; i < 2; ++i) mask.allowed[i * 4 + 0] = 0;
  AttentionResult res = multi_head_attention(block, q, kv, kv, &mask, 4);
  for (const Tensor& w : res.head_weights) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(w.at(i, 0) == 0.0);  // exactly zero
      Real s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  AttentionMask all_banned = AttentionMask::all_allowed(2, 4);
  std::fill(all_banned.allowed.begin(), all_banned.allowed.begin() + 4, 0);
  CHECK_THROWS_AS(multi_head_attention(block, q, kv, kv, &all_banned, 4),
                  ContractError);
}

TEST_CASE("attention shape errors") {
  Rng rng(4);
  AttentionBlock block = AttentionBlock::init(16, rng);
  Tensor q = gftest::random_tensor({2, 16}, rng);
  Tensor bad = gftest::random_tensor({3, 8}, rng);
  CHECK_THROWS_AS(multi_head_attention(block, q, bad, bad, nullptr, 4), ShapeError);
}

TEST_CASE("encoder preserves shape and matches the degenerate trace") {
  Rng rng(5);
  EncoderParams enc = EncoderParams::init(tiny, rng);
  Tensor x = gftest::random_tensor({7, 16}, rng);
  Tensor y = enc.forward(x);
  CHECK(y.shape() == x.shape());

  // Zero every projection: the residual stream is untouched, so the output
  // is exactly the final layernorm of the input.
  for (auto& layer : enc.layers) {
    for (Tensor* t : {&layer.attn.wq, &layer.attn.bq, &layer.attn.wk, &layer.attn.bk,
                      &layer.attn.wv, &layer.attn.bv, &layer.attn.wo, &layer.attn.bo,
                      &layer.ff.w1, &layer.ff.b1, &layer.ff.w2, &layer.ff.b2}) {
      std::fill(t->values().begin(), t->values().end(), 0.0);
    }
  }
  Tensor traced = enc.forward(x);
  Tensor expect = layernorm(x, enc.final_ln.gain, enc.final_ln.bias);
  CHECK(gftest::all_close(traced.values(), expect.values(), 1e-12));
}

TEST_CASE("encoder gradient w.r.t. input passes finite differences") {
  Rng rng(6);
  AttentionConfig small{8, 2, 1, 0.0};
  EncoderParams enc = EncoderParams::init(small, rng);
  Tensor x = gftest::random_tensor({4, 8}, rng);
  Real err = finite_diff_check(
      [&](const Tensor& t) { return mean(enc.forward(t)); }, x, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("encoder is permutation-equivariant without positions") {
  Rng rng(7);
  EncoderParams enc = EncoderParams::init(tiny, rng);
  Tensor x = gftest::random_tensor({6, 16}, rng);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor y = enc.forward(x);
  Tensor y_perm = enc.forward(gather_rows(x, perm));
  Tensor expect = gather_rows(y, perm);
  CHECK(gftest::all_close(y_perm.values(), expect.values(), 1e-9));
}

TEST_CASE("decoder cross-attends and keeps query count") {
  Rng rng(8);
  DecoderParams dec = DecoderParams::init(tiny, rng);
  EncoderParams enc = EncoderParams::init(tiny, rng);
  Tensor video = gftest::random_tensor({9, 16}, rng);
  Tensor queries = gftest::random_tensor({4, 16}, rng);
  Tensor out = dec.forward(queries, enc.forward(video));
  CHECK(out.shape() == Shape{4, 16});
}

TEST_CASE("dropout off means train equals eval forward") {
  Rng rng(9);
  EncoderParams enc = EncoderParams::init(tiny, rng);
  Tensor x = gftest::random_tensor({5, 16}, rng);
  Rng drop_rng(123);
  Tensor with_rng = enc.forward(x, nullptr, &drop_rng);  // dropout rate is 0
  Tensor without = enc.forward(x, nullptr, nullptr);
  CHECK(with_rng.values() == without.values());
}

TEST_CASE("sinusoidal positional table") {
  Tensor pe = sinusoidal_pe(5, 16);
  CHECK(pe.shape() == Shape{5, 16});
  for (std::size_t j = 0; j < 16; j += 2) CHECK(pe.at(0, j) == 0.0);
  for (std::size_t j = 1; j < 16; j += 2) CHECK(pe.at(0, j) == 1.0);
  for (Real v : pe.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // Positions 1 and 2 differ in every frequency band.
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(pe.at(1, j) != pe.at(2, j));
  }
  CHECK_THROWS_AS(sinusoidal_pe(4, 7), ContractError);
}

TEST_CASE("xavier init stays inside the glorot bound") {
  Rng rng(10);
  Tensor w = xavier({32, 48}, rng);
  const Real bound = std::sqrt(6.0 / (32 + 48));
  for (Real v : w.values()) {
    CHECK(std::fabs(v) <= bound);
  }
  CHECK(w.requires_grad());
}
