// Serial reference kernels against their OpenMP versions, plus one TCNet
// forward/backward pass at a typical batch shape.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tcnet/data.hpp"
#include "tcnet/kernels.hpp"
#include "tcnet/model.hpp"
#include "tcnet/training.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Kernel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64;
  const auto x = random_vector(rows * cols, 3);
  std::vector<unsigned char> live(rows * cols, 1);
  for (std::size_t i = 0; i < live.size(); i += 7) live[i] = 0;
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Kernel(x, live, y, rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_TCNetStep(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const std::size_t n = 30, d = 8;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("i" + std::to_string(i));
  tcnet::ItemCatalog cat(names, d, random_vector(n * d, 5));
  std::vector<tcnet::ChoiceObservation> obs;
  for (int k = 0; k < 256; ++k) {
    tcnet::ItemSet s;
    for (std::size_t i = 0; i < n; ++i)
      if (rng() % 2) s.push_back(i);
    if (s.empty()) s.push_back(0);
    tcnet::ItemSet c(s.begin(), s.begin() + static_cast<std::ptrdiff_t>((s.size() + 1) / 2));
    obs.push_back(tcnet::ChoiceObservation::sequential(c.front(), c, s));
  }
  const auto batch = tcnet::make_batch(cat, obs, 0);
  tcnet::TCNetConfig cfg;
  cfg.input_dim = d;
  cfg.hidden_dim = static_cast<std::size_t>(state.range(0));
  cfg.n_heads = 4;
  tcnet::TCNet net(cfg);
  for (auto _ : state) {
    auto r = net.forward(batch);
    tcnet::backward(tcnet::ce_loss(r.probabilities, batch.labels));
    for (auto p : net.parameters()) p.tensor.zero_grad();
  }
}

}  // namespace

BENCHMARK(BM_Gemm<tcnet::kernels::gemm_serial>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<tcnet::kernels::gemm>)->Name("gemm/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<tcnet::kernels::gemm_nt_serial>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(BM_Gemm<tcnet::kernels::gemm_nt>)->Name("gemm_nt/openmp")->Arg(128);
BENCHMARK(BM_Gemm<tcnet::kernels::gemm_tn_serial>)->Name("gemm_tn/serial")->Arg(128);
BENCHMARK(BM_Gemm<tcnet::kernels::gemm_tn>)->Name("gemm_tn/openmp")->Arg(128);
BENCHMARK(BM_Softmax<tcnet::kernels::masked_softmax_rows_serial>)->Name("masked_softmax/serial")->Arg(4096);
BENCHMARK(BM_Softmax<tcnet::kernels::masked_softmax_rows>)->Name("masked_softmax/openmp")->Arg(4096);
BENCHMARK(BM_TCNetStep)->Name("tcnet_forward_backward/batch256")->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
