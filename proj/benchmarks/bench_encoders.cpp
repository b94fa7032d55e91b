// Encoder and augmentation microbenchmarks at full-scale input sizes
// (224x224 frames, 8-frame clips, 768-dimensional embeddings).
#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ravl/encoders.hpp"
#include "ravl/image.hpp"
#include "ravl/util.hpp"

namespace {

const ravl::EncoderBundle& full_scale_bundle() {
  static const ravl::EncoderBundle bundle = ravl::EncoderBundle::make(ravl::EncoderConfig{});
  return bundle;
}

std::vector<ravl::Image> synth_frames(int n, int size) {
  std::vector<ravl::Image> frames;
  for (int f = 0; f < n; ++f) {
    ravl::SynthFrameKey key;
    key.seed = 3;
    key.concept_id = f % 4;
    key.video_idx = 0;
    key.clip_idx = 0;
    key.frame_idx = f;
    key.size = size;
    frames.push_back(ravl::render_synth_frame(key));
  }
  return frames;
}

void BM_ImageFeatures(benchmark::State& state) {
  const ravl::Image img = synth_frames(1, 224)[0];
  for (auto _ : state) benchmark::DoNotOptimize(ravl::image_features(img, 4));
}
BENCHMARK(BM_ImageFeatures);

void BM_EncodeClip(benchmark::State& state) {
  const int n_frames = static_cast<int>(state.range(0));
  const auto frames = synth_frames(n_frames, 224);
  const auto& bundle = full_scale_bundle();
  for (auto _ : state) benchmark::DoNotOptimize(bundle.visual.encode_clip(frames));
  state.SetItemsProcessed(state.iterations() * n_frames);
}
BENCHMARK(BM_EncodeClip)->Arg(4)->Arg(8);

void BM_TextEncode(benchmark::State& state) {
  const auto& bundle = full_scale_bundle();
  const std::string text =
      "surgical training narration describing concept_3 instrument handling in video_12 clip_4";
  for (auto _ : state) benchmark::DoNotOptimize(bundle.text.encode(text));
}
BENCHMARK(BM_TextEncode);

void BM_RandomAugment(benchmark::State& state) {
  const ravl::Image img = synth_frames(1, 224)[0];
  ravl::AugmentConfig cfg;
  cfg.out_size = 224;
  std::mt19937_64 rng(19);
  for (auto _ : state) benchmark::DoNotOptimize(ravl::random_augment(img, cfg, rng));
}
BENCHMARK(BM_RandomAugment);

void BM_AggregateVideo(benchmark::State& state) {
  const int n_clips = static_cast<int>(state.range(0));
  std::mt19937_64 rng(23);
  std::vector<ravl::Embedding> clips;
  for (int i = 0; i < n_clips; ++i) {
    ravl::Embedding e(768);
    for (int j = 0; j < e.size(); ++j) e(j) = ravl::gaussian(rng);
    e.normalize();
    clips.push_back(e);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ravl::aggregate_video(clips));
}
BENCHMARK(BM_AggregateVideo)->Arg(4)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
