// Serial reference kernels vs the OpenMP ones.
#include <benchmark/benchmark.h>

#include <random>

#include "onespike/ann_kernels.hpp"
#include "onespike/calibration.hpp"
#include "onespike/dataset.hpp"
#include "onespike/engine.hpp"
#include "onespike/model_io.hpp"
#include "onespike/snn_kernels.hpp"

namespace {

using namespace onespike;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = d(rng);
  return t;
}

template <bool Parallel>
void BM_AnnConv(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({c, 32, 32}, rng, 0, 1), w = random_tensor({c, c, 3, 3}, rng, -1, 1);
  for (auto _ : state) {
    Tensor y = Parallel ? kernels::parallel::conv2d(x, w, nullptr, 1, 1) : kernels::reference::conv2d(x, w, nullptr, 1, 1);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_AnnConv<false>)->Name("ann_conv/reference")->Arg(16)->Arg(32);
BENCHMARK(BM_AnnConv<true>)->Name("ann_conv/parallel")->Arg(16)->Arg(32);

template <bool Parallel>
void BM_SnnConv(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto c = static_cast<std::size_t>(state.range(0));
  const int T = 16;
  SnnLayer l;
  l.kind = SnnKind::kConv;
  l.in_shape = {c, 32, 32};
  l.out_shape = {c, 32, 32};
  l.geometry = {3, 1, 1};
  l.weights = random_tensor({c, c, 3, 3}, rng, -0.2, 0.2);
  l.threshold.assign(c * 1024, 0.9);
  l.v_init.assign(c * 1024, 0.0);
  l.q_prev = l.q_cur = 1.3;
  LayerActivity in;
  in.shape = l.in_shape;
  in.base = 1.3;
  std::uniform_int_distribution<int> phase(0, T);
  for (std::size_t i = 0; i < c * 1024; ++i) {
    const int p = phase(rng);
    in.masks.push_back(p ? std::uint64_t{1} << (p - 1) : 0);
  }
  for (auto _ : state) {
    LayerActivity out = Parallel ? snn_kernels::parallel::run_layer(l, in, nullptr, T, 8)
                                 : snn_kernels::reference::run_layer(l, in, nullptr, T, 8);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_SnnConv<false>)->Name("snn_conv/reference")->Arg(16)->Arg(32);
BENCHMARK(BM_SnnConv<true>)->Name("snn_conv/parallel")->Arg(16)->Arg(32);

// Whole-network inference on the digits CNN fixture.
template <bool Reference>
void BM_Infer(benchmark::State& state) {
  static const auto setup = [] {
    const std::filesystem::path data = ONESPIKE_TEST_DATA;
    const AnnModel m = load_model(data / "cnn");
    const auto calib = load_batch(data / "digits" / "calib.bin");
    auto test = load_batch(data / "digits" / "test.bin");
    test.resize(32);
    return std::pair{build(normalize(m, collect_stats(m, calib)), 16, 10, BaseSchedule::uniform(1.3)), test};
  }();
  EngineOptions o;
  o.reference_kernels = Reference;
  std::size_t i = 0;
  for (auto _ : state) {
    InferenceResult r = infer(setup.first, setup.second[i++ % setup.second.size()], o);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_Infer<true>)->Name("infer_cnn/reference");
BENCHMARK(BM_Infer<false>)->Name("infer_cnn/parallel");

}  // namespace

BENCHMARK_MAIN();
