// Serial reference convolution against the OpenMP kernels, plus the grid
// evaluation that dominates reconstruction time. Thread counts are arguments.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "occ/extract.hpp"
#include "occ/pcnn.hpp"
#include "occ/train.hpp"

using namespace occ;

namespace {

struct Problem {
  pcnn::FeatureSet source;
  pcnn::LayerParams params;
  std::vector<Vec3> targets;
};

// A 300-point cloud on a sphere feeding 8 channels into 8, read at `targets`
// queries spread through the unit box.
Problem make_problem(std::size_t targets) {
  Rng rng(3);
  const auto cloud = sample_shape_surface(ShapeSpec::sphere(0.35), 300, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Problem p;
  p.source.points = cloud.points;
  p.source.features = Matrix::NullaryExpr(300, 8, [&] { return u(rng); });
  p.params = pcnn::LayerParams::zeros(8, 8, 1.0 / 300);
  p.params.weights = Matrix::NullaryExpr(pcnn::kKernelSize * 8, 8, [&] { return u(rng); });
  for (std::size_t i = 0; i < targets; ++i) p.targets.emplace_back(u(rng), u(rng), u(rng));
  return p;
}

void BM_ConvReference(benchmark::State& state) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pcnn::reference::extend_conv_restrict(p.source, p.params, p.targets));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void conv(benchmark::State& state, pcnn::ConvMode mode) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  omp_set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(pcnn::extend_conv_restrict(p.source, p.params, p.targets, mode));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ConvExact(benchmark::State& state) { conv(state, pcnn::ConvMode::Exact); }
void BM_ConvTruncated(benchmark::State& state) { conv(state, pcnn::ConvMode::Truncated); }

// Untrained desk network over a 32 -> 64 hierarchical grid.
void BM_HierarchicalGrid(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto net = NetworkConfig::desk();
  const auto params = init_params(net, 1);
  Rng rng(4);
  const auto cloud = sample_shape_surface(ShapeSpec::sphere(0.35), 300, rng);
  Encoder enc(net, params, cloud.points);
  const FieldEvaluator field = [&enc](std::span<const Vec3> pts) { return enc.interior(pts); };
  const Aabb box = Aabb::of(cloud.points).padded(0.1);
  std::size_t evaluations = 0;
  for (auto _ : state) {
    const auto grid = evaluate_hierarchical(field, box, {32, 64});
    evaluations += grid.evaluations;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(evaluations));
}

// 1 and the machine's thread count, once each on a single-core host.
std::vector<std::int64_t> thread_counts() {
  const int n = omp_get_max_threads();
  return n > 1 ? std::vector<std::int64_t>{1, n} : std::vector<std::int64_t>{1};
}

}  // namespace

BENCHMARK(BM_ConvReference)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvExact)->ArgsProduct({{256, 2048}, thread_counts()})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTruncated)->ArgsProduct({{256, 2048}, thread_counts()})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HierarchicalGrid)->ArgsProduct({thread_counts()})->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
