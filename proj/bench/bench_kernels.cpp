// Blocked and parallel kernels against their serial references.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "shapecon/encoder.hpp"
#include "shapecon/evaluation.hpp"
#include "shapecon/kernels.hpp"

using namespace shapecon;

namespace {

DenseLayer random_layer(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer l(in, out);
  for (auto& w : l.weight) w = rng.uniform(-0.1, 0.1);
  for (auto& b : l.bias) b = rng.uniform(-0.1, 0.1);
  return l;
}

std::vector<double> random_input(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

std::vector<PointCloud> random_clouds(std::size_t count, std::size_t points, Rng& rng) {
  std::vector<PointCloud> clouds;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<Vec3> pts(points);
    for (auto& p : pts) p = {rng.normal(), rng.normal(), rng.normal()};
    clouds.push_back(normalize_bounding_sphere(PointCloud(pts)));
  }
  return clouds;
}

template <bool Blocked>
void BM_DenseForward(benchmark::State& state) {
  Rng rng(1);
  const std::size_t rows = static_cast<std::size_t>(state.range(0));
  const auto layer = random_layer(64, 128, rng);
  const auto x = random_input(rows * 64, rng);
  std::vector<double> y(rows * 128);
  for (auto _ : state) {
    if constexpr (Blocked) {
      kernels::dense_forward(x, rows, layer, y, true);
    } else {
      kernels::reference::dense_forward(x, rows, layer, y, true);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * 64 * 128));
}

template <bool Blocked>
void BM_DenseMaxForward(benchmark::State& state) {
  Rng rng(2);
  const std::size_t rows = static_cast<std::size_t>(state.range(0));
  const auto layer = random_layer(128, 1024, rng);
  const auto x = random_input(rows * 128, rng);
  std::vector<double> pooled(1024);
  std::vector<std::uint32_t> argmax(1024);
  for (auto _ : state) {
    if constexpr (Blocked) {
      kernels::dense_max_forward(x, rows, layer, pooled, argmax);
    } else {
      kernels::reference::dense_max_forward(x, rows, layer, pooled, argmax);
    }
    benchmark::DoNotOptimize(pooled.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * 128 * 1024));
}

// Batch forward with one thread versus all available threads.
void BM_ForwardBatch(benchmark::State& state) {
  Rng rng(3);
  const auto params = init_params(rng);
  const auto clouds = random_clouds(16, 512, rng);
  const int threads = state.range(0) == 0 ? omp_get_max_threads() : static_cast<int>(state.range(0));
  const int saved = omp_get_max_threads();
  omp_set_num_threads(threads);
  for (auto _ : state) benchmark::DoNotOptimize(forward_batch(params, clouds));
  omp_set_num_threads(saved);
  state.counters["threads"] = threads;
}

template <bool Parallel>
void BM_KMeans(benchmark::State& state) {
  Rng rng(4);
  const auto x = random_input(2000 * 32, rng);
  KMeansOptions opt;
  opt.clusters = 40;
  opt.n_init = 8;
  for (auto _ : state) {
    Rng r(5);
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(kmeans(x, 32, opt, r));
    } else {
      benchmark::DoNotOptimize(reference::kmeans(x, 32, opt, r));
    }
  }
}

}  // namespace

BENCHMARK(BM_DenseForward<false>)->Name("dense_forward/reference")->Arg(256)->Arg(2048);
BENCHMARK(BM_DenseForward<true>)->Name("dense_forward/blocked")->Arg(256)->Arg(2048);
BENCHMARK(BM_DenseMaxForward<false>)->Name("dense_max_forward/reference")->Arg(256)->Arg(2048);
BENCHMARK(BM_DenseMaxForward<true>)->Name("dense_max_forward/blocked")->Arg(256)->Arg(2048);
BENCHMARK(BM_ForwardBatch)->Name("forward_batch/threads")->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KMeans<false>)->Name("kmeans/serial_restarts")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KMeans<true>)->Name("kmeans/parallel_restarts")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
