#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ravl/image.hpp"

namespace ravl {

// Embeddings are unit-norm real vectors; inner product == cosine similarity.
using Embedding = Eigen::VectorXd;

// Normalizes to unit L2 norm; throws DegenerateEmbedding on (near-)zero input.
Embedding l2_normalize(const Eigen::VectorXd& v);

// Vector-Jacobian product of l2_normalize at pre-normalization vector z:
// given d(loss)/d(normalized), returns d(loss)/dz.
Eigen::VectorXd l2_normalize_vjp(const Eigen::VectorXd& z, const Eigen::VectorXd& grad_normalized);

// Desk-scale trainable encoders: a seeded random linear map over hand-rolled
// features, followed by L2 normalization. Discriminative enough to train
// contrastively at toy scale, cheap enough for CPU tests, and a pure function
// of (input bytes, seed). Heavier backbones can be slotted in behind the same
// bundle shape; nothing downstream depends on the featurizers.
struct EncoderConfig {
  int dim = 768;          // shared visual/text embedding dimension D
  int query_dim = 768;    // retrieval-space dimension (frozen query encoder)
  int image_grid = 4;     // visual features: grid x grid per-channel block means
  int text_buckets = 512; // text features: hashed token counts
  int text_len = 77;      // token truncation length
  uint64_t seed = 0;      // base seed; per-encoder streams are derived from it

  int visual_features() const { return image_grid * image_grid * 3 + 1; }
  int text_features() const { return text_buckets + 1; }
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

std::string encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const std::string& json_text);

// Lowercased maximal runs of [a-z0-9_], truncated to max_tokens. Underscores
// are token characters so composite tokens like "concept_3" stay atomic.
std::vector<std::string> tokenize(const std::string& text, int max_tokens);

// Featurizers (no trainable parameters):
//   visual — per-channel block means over a grid x grid tiling, plus a
//            constant bias term (grid*grid*3 + 1 values, any input size);
//   text   — token counts hashed into `buckets` bins, plus bias.
Eigen::VectorXd image_features(const Image& img, int grid);
Eigen::VectorXd text_features(const std::string& text, int buckets, int max_tokens);

// Trainable linear projection W (dim x features) initialized N(0, 1/features)
// from a seeded, platform-stable generator. encode = l2_normalize(W * phi).
class LinearEncoder {
 public:
  LinearEncoder(int dim, int features, uint64_t seed);

  Embedding encode_features(const Eigen::VectorXd& features) const;
  // Chains d(loss)/d(embedding) through the normalization and accumulates
  // d(loss)/dW into grad_w (same shape as weights).
  void accumulate_weight_grad(const Eigen::VectorXd& features,
                              const Eigen::VectorXd& grad_embedding,
                              Eigen::MatrixXd& grad_w) const;

  const Eigen::MatrixXd& weights() const { return w_; }
  Eigen::MatrixXd& weights() { return w_; }

 private:
  Eigen::MatrixXd w_;
};

class VisualEncoder {
 public:
  explicit VisualEncoder(const EncoderConfig& cfg);

  // Mean of per-frame features across the clip; frames may be any size.
  Eigen::VectorXd clip_features(const std::vector<Image>& frames) const;
  Embedding encode_clip(const std::vector<Image>& frames) const;
  Embedding encode_features(const Eigen::VectorXd& features) const;
  void accumulate_weight_grad(const Eigen::VectorXd& features,
                              const Eigen::VectorXd& grad_embedding, Eigen::MatrixXd& grad_w) const;
  const Eigen::MatrixXd& weights() const { return proj_.weights(); }
  Eigen::MatrixXd& weights() { return proj_.weights(); }

 private:
  int grid_;
  LinearEncoder proj_;
};

class TextEncoder {
 public:
  explicit TextEncoder(const EncoderConfig& cfg);

  Eigen::VectorXd features(const std::string& text) const;
  Embedding encode(const std::string& text) const;
  Embedding encode_features(const Eigen::VectorXd& features) const;
  void accumulate_weight_grad(const Eigen::VectorXd& features,
                              const Eigen::VectorXd& grad_embedding, Eigen::MatrixXd& grad_w) const;
  const Eigen::MatrixXd& weights() const { return proj_.weights(); }
  Eigen::MatrixXd& weights() { return proj_.weights(); }

 private:
  int buckets_;
  int max_tokens_;
  LinearEncoder proj_;
};

// Frozen text encoder producing retrieval keys/queries. Its weights are fixed
// at construction (derived from EncoderConfig.seed) and there is deliberately
// no mutable access.
class QueryEncoder {
 public:
  explicit QueryEncoder(const EncoderConfig& cfg);

  Embedding encode(const std::string& title) const;
  const Eigen::MatrixXd& weights() const { return proj_.weights(); }

 private:
  int buckets_;
  int max_tokens_;
  LinearEncoder proj_;
};

// The three encoders trained/used together. visual and text map into the same
// D-dimensional space; query maps into its own retrieval space and never
// receives gradient updates.
struct EncoderBundle {
  EncoderConfig config;
  VisualEncoder visual;
  TextEncoder text;
  QueryEncoder query;

  static EncoderBundle make(const EncoderConfig& cfg);
};

// Elementwise mean of clip embeddings, re-normalized to unit norm.
Embedding aggregate_video(const std::vector<Embedding>& clip_embeddings);
// VJP pair for the video aggregate: distributes d(loss)/d(video embedding)
// back to the individual clip embeddings.
std::vector<Eigen::VectorXd> aggregate_video_vjp(const std::vector<Embedding>& clip_embeddings,
                                                 const Eigen::VectorXd& grad_video);

// Versioned binary checkpoint: named parameter arrays plus the JSON-encoded
// configuration they belong to. Round-trips are bit-exact.
struct Checkpoint {
  uint32_t format_version = 1;
  std::string tool_version;
  uint64_t config_hash = 0;
  std::string config_json;
  int64_t epoch_completed = -1;  // -1 = untrained
  std::map<std::string, Eigen::MatrixXd> arrays;
  std::map<std::string, double> scalars;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameter marshalling between a bundle and checkpoint arrays.
void store_encoder_params(const EncoderBundle& bundle, Checkpoint& ckpt);
void load_encoder_params(const Checkpoint& ckpt, EncoderBundle& bundle);

}  // namespace ravl
