// Memory-bank microbenchmarks: exact top-K retrieval across bank sizes, bank
// construction, and value refresh.
#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <random>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/memory_bank.hpp"
#include "ravl/util.hpp"

namespace {

ravl::EncoderConfig bench_encoder_config() {
  ravl::EncoderConfig cfg;
  cfg.dim = 256;
  cfg.query_dim = 256;
  cfg.image_grid = 2;
  cfg.text_buckets = 128;
  cfg.seed = 42;
  return cfg;
}

const ravl::EncoderBundle& bench_bundle() {
  static const ravl::EncoderBundle bundle = ravl::EncoderBundle::make(bench_encoder_config());
  return bundle;
}

ravl::Dataset silent_dataset(int n_silent) {
  ravl::SynthSpec spec;
  spec.n_narrative = 1;
  spec.n_silent = n_silent;
  spec.clips_per_video = 1;
  spec.n_concepts = 8;
  spec.image_size = 16;
  spec.frames_per_clip = 2;
  return ravl::synthesize_dataset(spec, 11);
}

const ravl::MemoryBank& bank_of(int n_silent) {
  static std::map<int, ravl::MemoryBank> cache;
  auto it = cache.find(n_silent);
  if (it == cache.end()) {
    const ravl::Dataset ds = silent_dataset(n_silent);
    it = cache
             .emplace(n_silent,
                      ravl::MemoryBank::build(ds, ds.videos_of_kind(ravl::VideoKind::silent),
                                              bench_bundle(), 1))
             .first;
  }
  return it->second;
}

ravl::Embedding random_query(int dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ravl::Embedding q(dim);
  for (int i = 0; i < dim; ++i) q(i) = ravl::gaussian(rng);
  q.normalize();
  return q;
}

void BM_Retrieve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const ravl::MemoryBank& bank = bank_of(n);
  const ravl::Embedding q = random_query(bank.key_dim(), 7);
  for (auto _ : state) benchmark::DoNotOptimize(bank.retrieve(q, k));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Retrieve)
    ->Args({1000, 1})
    ->Args({1000, 50})
    ->Args({10000, 1})
    ->Args({10000, 50});

void BM_BankBuild(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ravl::Dataset ds = silent_dataset(n);
  const auto silent = ds.videos_of_kind(ravl::VideoKind::silent);
  for (auto _ : state)
    benchmark::DoNotOptimize(ravl::MemoryBank::build(ds, silent, bench_bundle(), 1));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BankBuild)->Arg(250)->Arg(1000);

void BM_RefreshValues(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ravl::MemoryBank bank = bank_of(n);  // copy; refresh mutates
  for (auto _ : state) bank.refresh_values(bench_bundle());
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RefreshValues)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
