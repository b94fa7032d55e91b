#include "ravl/memory_bank.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ravl/error.hpp"
#include "ravl/image.hpp"
#include "ravl/serialize.hpp"
#include "ravl/version.hpp"

namespace ravl {

namespace {

constexpr const char* kBankMagic = "RVLBANK1";

Embedding encode_video_visual(const Dataset& dataset, const VideoRecord& video,
                              const EncoderBundle& encoders, int n_frames,
                              std::vector<std::vector<std::string>>* sampled_out) {
  std::vector<Embedding> clip_embeddings;
  for (const ClipRecord* clip : dataset.clips_of(video)) {
    std::vector<std::string> refs = sample_frames(*clip, n_frames);
    std::vector<Image> frames;
    frames.reserve(refs.size());
    for (const std::string& ref : refs) frames.push_back(load_frame(ref));
    clip_embeddings.push_back(encoders.visual.encode_clip(frames));
    if (sampled_out) sampled_out->push_back(std::move(refs));
  }
  return aggregate_video(clip_embeddings);
}

Embedding encode_refs_visual(const std::vector<std::vector<std::string>>& clip_frame_refs,
                             const EncoderBundle& encoders) {
  std::vector<Embedding> clip_embeddings;
  for (const auto& refs : clip_frame_refs) {
    std::vector<Image> frames;
    frames.reserve(refs.size());
    for (const std::string& ref : refs) frames.push_back(load_frame(ref));
    clip_embeddings.push_back(encoders.visual.encode_clip(frames));
  }
  return aggregate_video(clip_embeddings);
}

}  // namespace

MemoryBank MemoryBank::build(const Dataset& dataset,
                             const std::vector<const VideoRecord*>& silent_videos,
                             const EncoderBundle& encoders, int n_frames) {
  if (n_frames < 1) throw Error("InvalidConfig", "n_frames must be >= 1");
  MemoryBank bank;
  bank.n_frames_ = n_frames;
  bank.encoder_config_json_ = encoder_config_to_json(encoders.config);
  for (const VideoRecord* video : silent_videos) {
    if (video->kind != VideoKind::silent) {
      throw Error("NonSilentVideo", "bank entries must be silent videos: " + video->video_id);
    }
    MemoryEntry entry;
    entry.entry_id = video->video_id;
    entry.key = encoders.query.encode(video->title);
    entry.value_text = encoders.text.encode(video->title);
    Source source;
    source.title = video->title;
    entry.value_visual = encode_video_visual(dataset, *video, encoders, n_frames,
                                             &source.clip_frame_refs);
    bank.entries_.push_back(std::move(entry));
    bank.sources_.push_back(std::move(source));
  }
  return bank;
}

RetrievalResult MemoryBank::retrieve(const Embedding& query, int k) const {
  if (entries_.empty()) throw Error("EmptyBank", "retrieval on an empty bank");
  if (k < 1) throw Error("InvalidConfig", "retrieval k must be >= 1");
  if (query.size() != entries_.front().key.size()) {
    throw Error("DimensionMismatch", "query dimension differs from bank keys");
  }
  // Sequential-loop dot products: bit-stable ordering across platforms.
  std::vector<double> scores(entries_.size());
  for (size_t i = 0; i < entries_.size(); ++i) {
    const Embedding& key = entries_[i].key;
    double s = 0.0;
    for (Eigen::Index d = 0; d < key.size(); ++d) s += key(d) * query(d);
    scores[i] = s;
  }
  std::vector<size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t take = std::min(static_cast<size_t>(k), entries_.size());
  auto better = [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return entries_[a].entry_id < entries_[b].entry_id;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);
  RetrievalResult result;
  result.entries.reserve(take);
  for (size_t i = 0; i < take; ++i) {
    result.entries.push_back({entries_[order[i]].entry_id, scores[order[i]]});
  }
  return result;
}

void MemoryBank::refresh_values(const EncoderBundle& encoders) {
  for (size_t i = 0; i < entries_.size(); ++i) {
    entries_[i].value_text = encoders.text.encode(sources_[i].title);
    entries_[i].value_visual = encode_refs_visual(sources_[i].clip_frame_refs, encoders);
    entries_[i].generation += 1;
  }
}

RetrievedSet MemoryBank::gather_values(const RetrievalResult& result) const {
  if (result.entries.empty()) throw Error("EmptyBank", "cannot gather an empty retrieval result");
  RetrievedSet set;
  set.visual.resize(static_cast<Eigen::Index>(result.entries.size()), value_dim());
  set.text.resize(static_cast<Eigen::Index>(result.entries.size()), value_dim());
  for (size_t i = 0; i < result.entries.size(); ++i) {
    const MemoryEntry& e = entry(result.entries[i].entry_id);
    set.visual.row(static_cast<Eigen::Index>(i)) = e.value_visual.transpose();
    set.text.row(static_cast<Eigen::Index>(i)) = e.value_text.transpose();
  }
  return set;
}

const MemoryEntry& MemoryBank::entry(const std::string& entry_id) const {
  for (const MemoryEntry& e : entries_) {
    if (e.entry_id == entry_id) return e;
  }
  throw Error("IntegrityError", "unknown bank entry: " + entry_id);
}

int MemoryBank::key_dim() const {
  return entries_.empty() ? 0 : static_cast<int>(entries_.front().key.size());
}

int MemoryBank::value_dim() const {
  return entries_.empty() ? 0 : static_cast<int>(entries_.front().value_text.size());
}

void MemoryBank::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  out.write(kBankMagic, 8);
  write_u32(out, 1);  // format version
  write_string(out, kVersionString);
  write_string(out, encoder_config_json_);
  write_u64(out, static_cast<uint64_t>(n_frames_));
  write_u64(out, entries_.size());
  for (size_t i = 0; i < entries_.size(); ++i) {
    const MemoryEntry& e = entries_[i];
    write_string(out, e.entry_id);
    write_u64(out, e.generation);
    write_vector(out, e.key);
    write_vector(out, e.value_text);
    write_vector(out, e.value_visual);
    const Source& s = sources_[i];
    write_string(out, s.title);
    write_u64(out, s.clip_frame_refs.size());
    for (const auto& refs : s.clip_frame_refs) {
      write_u64(out, refs.size());
      for (const std::string& ref : refs) write_string(out, ref);
    }
  }
  atomic_write_file(path, out.str());
}

MemoryBank MemoryBank::load(const std::filesystem::path& path, std::optional<int> expect_value_dim) {
  if (!std::filesystem::exists(path)) {
    throw Error("MissingFile", "bank not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open bank: " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 8) != kBankMagic) {
    throw Error("VersionMismatch", "not a bank file: " + path.string());
  }
  uint32_t version = read_u32(in);
  if (version != 1) {
    throw Error("VersionMismatch", "unsupported bank version " + std::to_string(version));
  }
  MemoryBank bank;
  try {
    read_string(in);  // writing tool version; informational
    bank.encoder_config_json_ = read_string(in);
    bank.n_frames_ = static_cast<int>(read_u64(in));
    uint64_t n = read_u64(in);
    for (uint64_t i = 0; i < n; ++i) {
      MemoryEntry e;
      e.entry_id = read_string(in);
      e.generation = read_u64(in);
      e.key = read_vector(in);
      e.value_text = read_vector(in);
      e.value_visual = read_vector(in);
      Source s;
      s.title = read_string(in);
      uint64_t n_clips = read_u64(in);
      for (uint64_t c = 0; c < n_clips; ++c) {
        uint64_t n_refs = read_u64(in);
        std::vector<std::string> refs;
        refs.reserve(n_refs);
        for (uint64_t r = 0; r < n_refs; ++r) refs.push_back(read_string(in));
        s.clip_frame_refs.push_back(std::move(refs));
      }
      bank.entries_.push_back(std::move(e));
      bank.sources_.push_back(std::move(s));
    }
  } catch (const Error& e) {
    // A header that parsed but a body that ran short is a malformed file, not
    // a version problem.
    throw Error("SchemaError", "corrupt bank file: " + e.detail());
  }
  if (expect_value_dim.has_value() && bank.size() > 0 && bank.value_dim() != *expect_value_dim) {
    throw Error("DimensionMismatch", "bank value dimension " + std::to_string(bank.value_dim()) +
                                         " != expected " + std::to_string(*expect_value_dim));
  }
  return bank;
}

}  // namespace ravl
