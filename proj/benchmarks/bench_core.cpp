#include <benchmark/benchmark.h>

#include "upcr/data/datagen.hpp"
#include "upcr/eval/evalbench.hpp"
#include "upcr/features/invariant_features.hpp"
#include "upcr/geom/chamfer.hpp"
#include "upcr/geom/knn.hpp"
#include "upcr/model/separation.hpp"
#include "upcr/training/training.hpp"

namespace {

using namespace upcr;

geom::PointCloud shape(std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  return data::synth_shape(seed % data::kCategoryCount, n, rng);
}

model::ModelConfig desk(features::FeatureKind kind = features::FeatureKind::distance) {
  model::ModelConfig c;
  c.encoder = model::EncoderConfig::desk();
  c.features.kind = kind;
  return c;
}

void BM_Knn(benchmark::State& state) {
  const auto cloud = shape(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(geom::knn(cloud, 24));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Knn)->RangeMultiplier(2)->Range(256, 2048)->Complexity();

void BM_KnnGramFeatureSpace(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 64;
  Rng rng(2);
  std::vector<double> rows(n * dim);
  for (auto& v : rows) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(geom::knn_gram(rows, dim, 24));
}
BENCHMARK(BM_KnnGramFeatureSpace)->Arg(256)->Arg(1024);

void BM_Chamfer(benchmark::State& state) {
  const auto a = shape(static_cast<std::size_t>(state.range(0)), 3), b = shape(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(geom::chamfer(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(256)->Arg(1024);

void BM_EdgeFeatures(benchmark::State& state) {
  const auto cloud = shape(1024);
  features::FeatureSpec spec;
  spec.kind = static_cast<features::FeatureKind>(state.range(0));
  state.SetLabel(std::string(features::to_string(spec.kind)));
  for (auto _ : state) benchmark::DoNotOptimize(features::compute_edge_features(cloud, spec, 24));
}
BENCHMARK(BM_EdgeFeatures)
    ->Arg(static_cast<int>(features::FeatureKind::distance))
    ->Arg(static_cast<int>(features::FeatureKind::ppf))
    ->Arg(static_cast<int>(features::FeatureKind::spfh))
    ->Arg(static_cast<int>(features::FeatureKind::pfh))
    ->Unit(benchmark::kMillisecond);

void BM_RegisterPair(benchmark::State& state) {
  Rng init(5);
  const model::ModelParams params(desk(static_cast<features::FeatureKind>(state.range(1))), init);
  const auto source = shape(static_cast<std::size_t>(state.range(0)), 6);
  Rng rng(7);
  const auto target = geom::apply_transform(data::sample_transform(data::PoseRegime::modelnet_style, rng), source);
  state.SetLabel(std::string(features::to_string(params.config().features.kind)));
  for (auto _ : state) benchmark::DoNotOptimize(model::register_pair(source, target, params));
}
BENCHMARK(BM_RegisterPair)
    ->Args({256, static_cast<int>(features::FeatureKind::distance)})
    ->Args({1024, static_cast<int>(features::FeatureKind::distance)})
    ->Args({1024, static_cast<int>(features::FeatureKind::pfh)})
    ->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  Rng init(8);
  const model::ModelParams params(desk(), init);
  const auto source = model::prepare(shape(256, 9), params.config());
  const auto target = model::prepare(shape(256, 10), params.config());
  std::vector<std::vector<double>> grads;
  for (auto _ : state) benchmark::DoNotOptimize(training::pair_loss_and_grad(params, source, target, &grads));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_Icp(benchmark::State& state) {
  const auto source = shape(static_cast<std::size_t>(state.range(0)), 11);
  Rng rng(12);
  const auto target = geom::apply_transform(data::sample_transform(data::PoseRegime::modelnet_style, rng), source);
  for (auto _ : state) benchmark::DoNotOptimize(eval::icp(source, target, {}));
}
BENCHMARK(BM_Icp)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
