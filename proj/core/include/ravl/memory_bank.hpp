#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/losses.hpp"

namespace ravl {

// One silent video in the knowledge base. The key is produced by the frozen
// query encoder at build time and never changes; the values are re-encoded
// ("refreshed") as training updates the visual/text encoders, with a
// generation counter recording how many refreshes have happened.
struct MemoryEntry {
  std::string entry_id;  // silent video_id
  Embedding key;
  Embedding value_text;
  Embedding value_visual;
  uint64_t generation = 0;
};

struct RetrievalHit {
  std::string entry_id;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<RetrievalHit> entries;  // scores non-increasing
};

// Exact top-K maximum-inner-product store over silent-video embeddings.
// Retrieval is a full scan with deterministic tie-breaking, so results are
// identical across runs and platforms; bank sizes here make an ANN index
// unnecessary. Reads are safe concurrently; refresh requires exclusive
// access.
class MemoryBank {
 public:
  MemoryBank() = default;

  // One entry per silent video: key = query encoding of the title, values =
  // text encoding of the title and the aggregated visual encoding over the
  // video's clips (n_frames sampled per clip). Throws NonSilentVideo if a
  // narrative video is passed.
  static MemoryBank build(const Dataset& dataset,
                          const std::vector<const VideoRecord*>& silent_videos,
                          const EncoderBundle& encoders, int n_frames);

  // Top-min(k, size) entries by key-query inner product, scores
  // non-increasing, exact ties broken by ascending entry_id. Scores are
  // computed with a plain sequential loop so the ordering is bit-reproducible.
  RetrievalResult retrieve(const Embedding& query, int k) const;

  // Re-encodes all value embeddings with the given (typically newer) encoder
  // parameters. Keys are untouched; every generation counter increments.
  void refresh_values(const EncoderBundle& encoders);

  // Stacks the value embeddings of a retrieval result into K x D matrices in
  // result order, ready for the silent-video loss.
  RetrievedSet gather_values(const RetrievalResult& result) const;

  size_t size() const { return entries_.size(); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  const MemoryEntry& entry(const std::string& entry_id) const;
  int key_dim() const;
  int value_dim() const;
  int frames_per_clip() const { return n_frames_; }
  // JSON of the EncoderConfig the bank was built with; lets a reader
  // reconstruct the frozen query encoder from the bank file alone.
  const std::string& encoder_config_json() const { return encoder_config_json_; }

  void save(const std::filesystem::path& path) const;
  // expect_value_dim guards against mixing a bank with encoders of a
  // different embedding dimension (DimensionMismatch).
  static MemoryBank load(const std::filesystem::path& path,
                         std::optional<int> expect_value_dim = std::nullopt);

 private:
  // What refresh_values needs to re-encode an entry.
  struct Source {
    std::string title;
    std::vector<std::vector<std::string>> clip_frame_refs;  // sampled at build
  };

  std::vector<MemoryEntry> entries_;
  std::vector<Source> sources_;
  std::string encoder_config_json_;
  int n_frames_ = 8;
};

}  // namespace ravl
