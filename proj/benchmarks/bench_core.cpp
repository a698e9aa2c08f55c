#include <benchmark/benchmark.h>

#include "gf/matching.hpp"
#include "gf/model.hpp"
#include "gf/trainer.hpp"

using namespace gf;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Real& v : t.values()) v = rng.normal();
  return t;
}

void BM_MatmulForward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128);

void BM_EncoderForwardBackward(benchmark::State& state) {
  Rng rng(2);
  AttentionConfig cfg{64, 4, 2, 0.0};
  EncoderParams enc = EncoderParams::init(cfg, rng);
  Tensor x = random_tensor({40, 64}, rng);
  x.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    x.zero_grad();
    Tensor loss = mean(enc.forward(x));
    tape.backward(loss);
    benchmark::DoNotOptimize(x.node()->grad.data());
  }
}
BENCHMARK(BM_EncoderForwardBackward);

void BM_Hungarian(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<std::vector<std::vector<Real>>> costs;
  for (int k = 0; k < 64; ++k) {
    std::vector<std::vector<Real>> c(n, std::vector<Real>(n));
    for (auto& row : c) {
      for (Real& v : row) v = rng.uniform();
    }
    costs.push_back(std::move(c));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    Assignment a = hungarian(costs[i++ % costs.size()]);
    benchmark::DoNotOptimize(a.cost);
  }
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(10);

void BM_QAForward(benchmark::State& state) {
  Rng rng(4);
  ModelConfig cfg;
  cfg.data_dim = 32;
  cfg.model_dim = 64;
  cfg.num_memories = 8;
  cfg.classes = 6;
  cfg.vocab_size = 24;
  cfg.answer_count = 9;
  cfg.dropout = 0.0;
  GlanceFocusModel model = GlanceFocusModel::init(cfg, rng);
  Tensor video = random_tensor({40, 32}, rng);
  std::vector<std::size_t> question = {0, 2, 10};
  for (auto _ : state) {
    QAForward f = model.forward_qa(video, question, nullptr);
    benchmark::DoNotOptimize(f.answer.logits.values().data());
  }
}
BENCHMARK(BM_QAForward);

}  // namespace

BENCHMARK_MAIN();
