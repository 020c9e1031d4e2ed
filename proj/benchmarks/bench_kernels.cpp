// Micro benchmarks for the hot loops: the first encoder convolution, one
// full CAE cost-and-gradient step, mean shift and the 1-D KDE.

#include <benchmark/benchmark.h>

#include <random>

#include "idspace/density.hpp"
#include "idspace/descriptor_metrics.hpp"
#include "idspace/sparse_cae.hpp"

using namespace idspace;

namespace {

Matrix<float> random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

void BM_ConvForward(benchmark::State& state) {
  const CaeModel cae = make_cae<float>(CaeArchitecture{}, 1);
  const auto& conv = cae.encoder.layers().front();
  const Matrix<float> in = random_batch(conv.input_size(), static_cast<std::size_t>(state.range(0)), 2);
  Matrix<float> out;
  for (auto _ : state) {
    layer_forward(conv, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvForward)->Arg(1)->Arg(64);

void BM_ConvBackward(benchmark::State& state) {
  const CaeModel cae = make_cae<float>(CaeArchitecture{}, 1);
  const auto& conv = cae.encoder.layers().front();
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix<float> in = random_batch(conv.input_size(), n, 2);
  Matrix<float> out;
  layer_forward(conv, in, out);
  const Matrix<float> dout = random_batch(conv.output_size(), n, 3);
  LayerGradient<float> grad{Tensor<float>(conv.weights.shape()), Tensor<float>(conv.bias.shape())};
  Matrix<float> din;
  for (auto _ : state) {
    layer_backward(conv, in, out, dout, &grad, &din);
    benchmark::DoNotOptimize(din.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvBackward)->Arg(1)->Arg(64);

// One minibatch of the default run: forward, costs and the full gradient.
void BM_CaeStep(benchmark::State& state) {
  const CaeArchitecture arch{};
  const CaeModel cae = make_cae<float>(arch, 1);
  const Matrix<float> in = random_batch(arch.input_size(), 64, 4);
  CaeGradients<float> grads;
  for (auto _ : state) {
    const CostTerms c = cae_cost(cae, in, 1.0, 1.0, SparsityPenalty::Ratio, &grads);
    benchmark::DoNotOptimize(c.total);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_CaeStep)->Unit(benchmark::kMillisecond);

void BM_MeanShift(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> points(static_cast<std::size_t>(state.range(0)), Vector(24));
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double& v : points[i]) v = normal(gen) + 6.0 * static_cast<double>(i % 4);
  }
  const MeanShiftOptions options{.bandwidth = default_bandwidth(points)};
  for (auto _ : state) benchmark::DoNotOptimize(mean_shift(points, options).modes.size());
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MeanShift)->RangeMultiplier(2)->Range(64, 512)->Complexity()->Unit(benchmark::kMillisecond);

void BM_EstimateDensity(benchmark::State& state) {
  std::mt19937_64 gen(6);
  std::gamma_distribution<double> gamma(4.0, 2.0);
  std::vector<double> samples(static_cast<std::size_t>(state.range(0)));
  for (double& s : samples) s = gamma(gen);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_density(samples).values.data());
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EstimateDensity)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

}  // namespace

BENCHMARK_MAIN();
