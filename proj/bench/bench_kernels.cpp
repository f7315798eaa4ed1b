// Serial reference vs OpenMP kernels. Thread count follows OPINET_THREADS
// (default: all cores); on a single core the two should be level.

#include <benchmark/benchmark.h>

#include <vector>

#include "opinet/kernels.hpp"
#include "opinet/parallel.hpp"
#include "opinet/rng.hpp"

namespace {

namespace k = opinet::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  opinet::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <void (*Gemm)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool)>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
  state.counters["threads"] = opinet::num_threads();
}

template <void (*Gram)(std::size_t, std::size_t, const double*, double*)>
void BM_gram(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t p = 2000;
  const auto j = random_vec(n * p, 3);
  std::vector<double> g(n * n);
  for (auto _ : state) {
    Gram(n, p, j.data(), g.data());
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * p));
  state.counters["threads"] = opinet::num_threads();
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gemm<k::omp::gemm_nn>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gemm<k::omp::gemm_nt>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gemm<k::omp::gemm_tn>)->Name("gemm_tn/omp")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_gram<k::serial::gram>)->Name("gram/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gram<k::omp::gram>)->Name("gram/omp")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
