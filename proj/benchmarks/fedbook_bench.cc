#include <random>
#include <vector>

#include "app/verify.h"
#include "benchmark/benchmark.h"
#include "fedbook/aggregation.h"
#include "fedbook/gvq_mae.h"
#include "fedbook/tensor.h"

namespace fedbook {
namespace {

Tensor Gaussian(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : t.data()) v = g(rng);
  return t;
}

void BM_MatMul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = Gaussian({n, n}, rng), b = Gaussian({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(MatMulValue(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_MatMul)->RangeMultiplier(2)->Range(16, 128);

void BM_NearestTokens(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const Tensor z = Gaussian({256, 16}, rng), tokens = Gaussian({2, n, 16}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(NearestTokens(z, tokens, 0));
    benchmark::DoNotOptimize(NearestTokens(z, tokens, 1));
  }
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_NearestTokens)->Arg(8)->Arg(32)->Arg(128);

void BM_Phase1Aggregation(benchmark::State& state) {
  std::mt19937_64 rng(3);
  app::UploadShape shape;
  shape.clients = static_cast<std::size_t>(state.range(0));
  shape.heads = 2;
  shape.tokens = 16;
  shape.dim = 16;
  const auto uploads = app::RandomUploads(shape, rng);
  for (auto _ : state) benchmark::DoNotOptimize(RunPhase1(uploads, 0.5));
}
BENCHMARK(BM_Phase1Aggregation)->Arg(2)->Arg(6)->Arg(12);

void BM_Phase2Aggregation(benchmark::State& state) {
  std::mt19937_64 rng(4);
  app::UploadShape shape;
  shape.clients = static_cast<std::size_t>(state.range(0));
  shape.heads = 2;
  shape.tokens = 16;
  shape.dim = 16;
  const auto uploads = app::RandomUploads(shape, rng);
  for (auto _ : state) benchmark::DoNotOptimize(RunPhase2(uploads));
}
BENCHMARK(BM_Phase2Aggregation)->Arg(2)->Arg(6)->Arg(12);

// One local epoch on a random graph of the given size.
void BM_PretrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  ModelConfig model;
  TextAttributedGraph g;
  g.node_count = n;
  g.node_features = Gaussian({n, model.feature_dim}, rng);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t e = 0; e < 3 * n; ++e) g.edges.push_back({pick(rng), pick(rng)});
  g.node_labels.assign(n, 0);
  const std::vector<TextAttributedGraph> data = {g};
  const ParamSet params = InitParams(model, 6);
  TrainConfig train;
  train.epochs = 1;
  for (auto _ : state) {
    std::mt19937_64 local(7);
    benchmark::DoNotOptimize(LocalTrain(data, params, model, train, local));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_PretrainStep)->Arg(30)->Arg(60)->Arg(120)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fedbook

BENCHMARK_MAIN();
