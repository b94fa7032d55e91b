#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/image.hpp"
#include "ravl/losses.hpp"
#include "ravl/memory_bank.hpp"

namespace ravl {

enum class Stage { CLIP, VIDEO };

std::string to_string(Stage stage);

struct StageLabel {
  Stage stage = Stage::CLIP;
  int epoch = 0;

  bool operator==(const StageLabel&) const = default;
};

// Full training configuration. Field defaults are the full-scale settings;
// desk-scale runs override via YAML/CLI. The encoder seed and text length are
// kept in sync with `seed`/`text_len` when configs are finalized.
struct TrainConfig {
  int total_epochs = 60;
  int warmup_clip_epochs = 40;
  int alt_clip_epochs = 3;
  int alt_video_epochs = 2;
  int batch_clip = 120;
  int batch_video = 140;
  double lr = 8e-5;
  std::string scheduler = "cosine";
  std::string optimizer = "adam";
  double momentum = 0.9;  // Adam beta1
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int k_retrieved = 1;
  int n_frames = 8;
  int image_size = 224;
  int text_len = 77;
  int checkpoint_interval = 10;
  uint64_t seed = 0;
  LossConfig loss;
  EncoderConfig encoder;
  AugmentConfig augment;

  void validate() const;
  // Propagates shared fields (seed, text_len, image_size) into the nested
  // encoder/augment configs. Called by all parsing paths.
  void sync_nested();
};

// Flat YAML file mirroring TrainConfig (see data/configs/). Unknown keys are
// rejected. Values not present keep their defaults.
TrainConfig train_config_from_yaml_file(const std::filesystem::path& path);
TrainConfig train_config_from_yaml_string(const std::string& text);
// Canonical JSON echo (sorted keys); its FNV-1a hash identifies a config.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);
uint64_t train_config_hash(const TrainConfig& cfg);

// warmup_clip_epochs CLIP labels, then repeated blocks of alt_clip_epochs
// CLIP + alt_video_epochs VIDEO, truncated to exactly total_epochs labels.
std::vector<StageLabel> alternating_schedule(const TrainConfig& cfg);

// Cosine decay from lr_max at epoch 0 to 0 at the final epoch.
double cosine_lr(double lr_max, int epoch, int total_epochs);

// Adam moments for the two trainable parameter matrices, with a shared step
// counter. Stored in checkpoints so a resumed run continues the exact
// optimizer trajectory.
struct OptimizerState {
  Eigen::MatrixXd m_visual, v_visual;
  Eigen::MatrixXd m_text, v_text;
  int64_t step = 0;

  static OptimizerState init(const EncoderBundle& bundle);
};

struct StepResult {
  double loss = 0.0;
};

struct MetricsRecord {
  int epoch = 0;
  Stage stage = Stage::CLIP;
  double mean_loss = 0.0;
  double lr = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> metrics_from_jsonl(const std::string& text);

// Owns the dataset, encoder bundle, and optimizer state for one pretraining
// run. Deterministic for a fixed config: batch order and augmentation draws
// are derived from (seed, epoch), never from global state, which is also what
// makes resume-from-checkpoint reproduce the uninterrupted trajectory.
class Trainer {
 public:
  Trainer(Dataset dataset, TrainConfig cfg);

  // Deterministic per-epoch batching (seeded Fisher-Yates shuffle, chunked).
  std::vector<std::vector<const ClipRecord*>> clip_batches(int epoch) const;
  std::vector<std::vector<const VideoRecord*>> video_batches(int epoch) const;
  std::mt19937_64 augment_rng(int epoch) const;

  // One optimizer update on the clip-level objective: two augmented views per
  // clip plus its narration. Throws SilentClipInBatch on a clip without
  // narration.
  StepResult train_step_clip(const std::vector<const ClipRecord*>& batch, std::mt19937_64& aug_rng,
                             double lr);

  // One optimizer update on the video-level objective: aggregated video
  // embeddings vs titles, plus the retrieval-augmented silent term. Retrieved
  // bank values are treated as constants (no gradient into the bank).
  StepResult train_step_video(const std::vector<const VideoRecord*>& batch, const MemoryBank& bank,
                              double lr);

  struct RunResult {
    std::filesystem::path checkpoint_path;
    std::vector<MetricsRecord> metrics;
  };

  // Executes the alternating schedule, refreshing bank values at the start of
  // every VIDEO epoch, writing checkpoints every checkpoint_interval epochs
  // (and at the end) plus a line-delimited metrics log in out_dir. With
  // resume=true, continues from out_dir/ckpt_latest.bin.
  RunResult run_pretraining(const std::filesystem::path& out_dir, bool resume = false);

  Checkpoint make_checkpoint(int64_t epoch_completed) const;
  void restore(const Checkpoint& ckpt);

  const EncoderBundle& encoders() const { return bundle_; }
  EncoderBundle& encoders() { return bundle_; }
  const TrainConfig& config() const { return cfg_; }
  const Dataset& data() const { return dataset_; }

 private:
  void apply_update(const Eigen::MatrixXd& grad_visual, const Eigen::MatrixXd& grad_text,
                    double lr);

  Dataset dataset_;
  TrainConfig cfg_;
  EncoderBundle bundle_;
  OptimizerState opt_;
  std::vector<const ClipRecord*> narrative_clips_;   // sorted by clip_id
  std::vector<const VideoRecord*> narrative_videos_; // sorted by video_id
};

// Convenience for evaluation paths: deterministic (augmentation-free) clip
// and video embeddings.
Embedding embed_clip_eval(const EncoderBundle& bundle, const ClipRecord& clip, int n_frames);
Embedding embed_video_eval(const EncoderBundle& bundle, const Dataset& dataset,
                           const VideoRecord& video, int n_frames);

}  // namespace ravl
