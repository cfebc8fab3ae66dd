#include <benchmark/benchmark.h>

#include <vector>

#include "adareg/dataset.hpp"
#include "adareg/metrics.hpp"
#include "adareg/model.hpp"
#include "adareg/optim.hpp"
#include "adareg/random.hpp"

namespace {

using namespace adareg;

struct Fixture {
  Dataset data;
  Model model;
  std::vector<Batch> batches;

  explicit Fixture(std::size_t batch_size) {
    SynthSpec spec;
    spec.num_samples = 16 * batch_size;
    spec.features = {{50, 1.0, 0.5}, {50, 1.0, 0.5}, {50000, 1.1, 0.0}};
    data = generate_synthetic(spec);
    ArchConfig arch;
    arch.hidden_layers = {64, 32};
    arch.embedding_dims = {16, 16, 16};
    model = init_model(arch, data.feature_cards, 1);
    batches = batch_iter(data, batch_size, 2, 1);
  }
};

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    auto g = compute_gradients(f.model, f.batches[i++ % f.batches.size()]);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(256)->Arg(2048);

void BM_OptimizerStep(benchmark::State& state) {
  Fixture f(512);
  OptimizerConfig cfg;
  cfg.family = static_cast<Family>(state.range(0));
  cfg.alpha = 0.01;
  cfg.weight_decay = 0.01;
  std::vector<SparseGrads> grads;
  for (const auto& b : f.batches) grads.push_back(compute_gradients(f.model, b).grads);
  auto st = init_optimizer_state(f.model.mlp);
  std::size_t i = 0;
  for (auto _ : state) {
    auto d = optimizer_step(f.model, st, grads[i++ % grads.size()], cfg);
    benchmark::DoNotOptimize(d.touched_rows);
  }
  state.SetLabel(std::string(to_string(cfg.family)));
}
BENCHMARK(BM_OptimizerStep)
    ->Arg(static_cast<int>(Family::adam))
    ->Arg(static_cast<int>(Family::adamw))
    ->Arg(static_cast<int>(Family::adam_ar))
    ->Arg(static_cast<int>(Family::adagrad))
    ->Arg(static_cast<int>(Family::adagrad_ar));

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SplitMix64 rng(5);
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.uniform();
    y[i] = static_cast<std::uint8_t>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(s, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
