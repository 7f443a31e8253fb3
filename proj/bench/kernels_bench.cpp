#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "scan/attention.hpp"
#include "scan/check/oracles.hpp"
#include "scan/kernels.hpp"

using namespace scan;

namespace {

struct SscCase {
  SparseTensor t;
  SscWeights w;
  NeighborMap nm;
};

const SscCase& ssc_case(std::size_t n) {
  static std::map<std::size_t, SscCase> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::mt19937_64 rng(n);
    SscCase c;
    c.t = oracle::random_tensor(rng, n, 64, 0, 120);
    c.w = oracle::random_ssc(rng, 64, 64);
    c.nm = build_neighbor_map(c.t.coords(), 3);
    it = cache.emplace(n, std::move(c)).first;
  }
  return it->second;
}

void BM_SscParallel(benchmark::State& state) {
  const auto& c = ssc_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ssc_forward(c.t, c.w, Activation::kRelu, &c.nm));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SscSerial(benchmark::State& state) {
  const auto& c = ssc_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::ssc_forward(c.t, c.w, Activation::kRelu));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

Linear random_linear(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  return {in, out, oracle::random_matrix(rng, in, out, 0.1).data(), oracle::random_matrix(rng, 1, out, 0.1).data(),
          Activation::kRelu};
}

void BM_LinearParallel(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(rng, static_cast<std::size_t>(state.range(0)), 256);
  const Linear l = random_linear(rng, 256, 64);
  for (auto _ : state) benchmark::DoNotOptimize(linear_forward(x, l));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LinearSerial(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(rng, static_cast<std::size_t>(state.range(0)), 256);
  const Linear l = random_linear(rng, 256, 64);
  for (auto _ : state) benchmark::DoNotOptimize(serial::linear_forward(x, l));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct GkaCase {
  Matrix q, k, v, rf;
};

GkaCase gka_case(std::size_t n) {
  std::mt19937_64 rng(2);
  return {oracle::random_matrix(rng, n, 16, 0.4), oracle::random_matrix(rng, n, 16, 0.4),
          oracle::random_matrix(rng, n, 16), draw_random_features(64, 16, 3)};
}

void BM_GkaParallel(benchmark::State& state) {
  const GkaCase c = gka_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gka_attention(c.q, c.k, c.v, c.rf));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GkaSerial(benchmark::State& state) {
  const GkaCase c = gka_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::gka_attention(c.q, c.k, c.v, c.rf));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_SscParallel)->Arg(10000)->Arg(40000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SscSerial)->Arg(10000)->Arg(40000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_LinearParallel)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_LinearSerial)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GkaParallel)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GkaSerial)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
