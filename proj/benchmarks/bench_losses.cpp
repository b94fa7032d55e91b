// Contrastive-loss microbenchmarks at full-scale batch sizes and embedding
// dimension, value-only and with gradients.
#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "ravl/losses.hpp"
#include "ravl/util.hpp"

namespace {

Eigen::MatrixXd unit_rows(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = ravl::gaussian(rng);
    m.row(r).normalize();
  }
  return m;
}

std::vector<ravl::RetrievedSet> retrieved_sets(int b, int k, int d, uint64_t seed) {
  std::vector<ravl::RetrievedSet> sets(b);
  for (int q = 0; q < b; ++q) {
    sets[q].visual = unit_rows(k, d, seed + static_cast<uint64_t>(2 * q));
    sets[q].text = unit_rows(k, d, seed + static_cast<uint64_t>(2 * q + 1));
  }
  return sets;
}

void BM_ClipPairLoss(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const Eigen::MatrixXd a = unit_rows(b, d, 1);
  const Eigen::MatrixXd t = unit_rows(b, d, 2);
  const ravl::LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ravl::clip_vl_loss(a, t, cfg));
}
BENCHMARK(BM_ClipPairLoss)->Args({8, 768})->Args({32, 768})->Args({120, 768});

void BM_ClipPairLossGrad(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const Eigen::MatrixXd a = unit_rows(b, d, 3);
  const Eigen::MatrixXd t = unit_rows(b, d, 4);
  const ravl::LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ravl::clip_vl_loss_grad(a, t, cfg));
}
BENCHMARK(BM_ClipPairLossGrad)->Args({8, 768})->Args({32, 768})->Args({120, 768});

void BM_VideoSilentLoss(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int d = 768;
  const Eigen::MatrixXd video = unit_rows(b, d, 5);
  const auto retrieved = retrieved_sets(b, k, d, 600);
  const ravl::LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ravl::video_silent_loss(video, retrieved, cfg));
}
BENCHMARK(BM_VideoSilentLoss)->Args({8, 1})->Args({8, 5})->Args({32, 5});

void BM_VideoSilentLossGrad(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int d = 768;
  const Eigen::MatrixXd video = unit_rows(b, d, 6);
  const auto retrieved = retrieved_sets(b, k, d, 700);
  const ravl::LossConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(ravl::video_silent_loss_grad(video, retrieved, cfg));
}
BENCHMARK(BM_VideoSilentLossGrad)->Args({8, 1})->Args({8, 5})->Args({32, 5});

}  // namespace

BENCHMARK_MAIN();
