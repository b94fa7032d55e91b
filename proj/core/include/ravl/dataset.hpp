#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ravl {

// A short temporal segment of a video. Narrated clips carry the spoken text
// aligned to [t_start, t_end]; clips of silent videos have no narration.
struct ClipRecord {
  std::string clip_id;
  std::string video_id;
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<std::string> narration;
  std::vector<std::string> frame_refs;

  bool operator==(const ClipRecord&) const = default;
};

enum class VideoKind { narrative, silent };

std::string to_string(VideoKind kind);
VideoKind video_kind_from_string(const std::string& s);

struct VideoRecord {
  std::string video_id;
  VideoKind kind = VideoKind::narrative;
  std::string title;
  std::vector<std::string> clip_ids;  // temporally ordered

  bool operator==(const VideoRecord&) const = default;
};

// The full collection: narrated videos (clip-level supervision) plus silent
// videos (title-only supervision). Immutable once loaded/validated, so it is
// safe to share across threads.
struct Dataset {
  std::map<std::string, VideoRecord> videos;
  std::map<std::string, ClipRecord> clips;

  bool operator==(const Dataset&) const = default;

  // Sorted by video_id for deterministic iteration.
  std::vector<const VideoRecord*> videos_of_kind(VideoKind kind) const;
  std::vector<const ClipRecord*> clips_of(const VideoRecord& video) const;
  const VideoRecord& video(const std::string& video_id) const;
  const ClipRecord& clip(const std::string& clip_id) const;

  // Checks every structural invariant; throws IntegrityError on violation.
  void validate() const;
};

// Manifest file format: one JSON record per line, two kinds.
//   {"type":"video","video_id":s,"kind":"narrative"|"silent","title":s,"clip_ids":[s,...]}
//   {"type":"clip","clip_id":s,"video_id":s,"t_start":f,"t_end":f,"narration":s|null,"frames":[s,...]}
// Any invalid record rejects the whole file (SchemaError carries the line and
// field). Extra keys are rejected; record order is free.
Dataset load_manifest(const std::filesystem::path& path);
Dataset parse_manifest(const std::string& content);
std::string manifest_to_string(const Dataset& dataset);
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

struct TranscriptSegment {
  std::string text;
  double t_start = 0.0;
  double t_end = 0.0;

  bool operator==(const TranscriptSegment&) const = default;
};

struct MergeConfig {
  std::string terminal_punctuation = ".?!";
  std::vector<std::string> linking_words = {"and", "which", "so", "then", "because", "but"};
};

// Merges adjacent segments left-to-right when the earlier text does not end
// in terminal punctuation OR the later text begins with a linking word.
// Merged text is joined with a single space and spans the union of the two
// time ranges. A single left-to-right pass is already a fixpoint for this
// rule (a merge never changes whether the next boundary merges), and the
// operation is idempotent.
std::vector<TranscriptSegment> merge_transcript_segments(
    const std::vector<TranscriptSegment>& segments, const MergeConfig& cfg = {});

// Desk-scale synthetic data: every video gets a latent concept; frames are
// procedural images whose pixel statistics encode the concept (see image.hpp)
// and all text (titles, narrations) names the concept plus unique video/clip
// tokens. Text tokens use underscores (video_3, concept_1) so they survive
// tokenization as single units.
struct SynthSpec {
  int n_narrative = 1;
  int n_silent = 1;
  int clips_per_video = 1;
  int n_concepts = 1;
  int image_size = 224;
  int frames_per_clip = 8;
  double clip_seconds = 16.0;
};

Dataset synthesize_dataset(const SynthSpec& spec, uint64_t seed);

// Exactly n_frames references at evenly spaced indices: index i maps to
// frame_refs[(i * N) / n_frames] (integer division, N = available frames).
// Short clips therefore repeat frames in temporal order; N == n_frames is the
// identity.
std::vector<std::string> sample_frames(const ClipRecord& clip, int n_frames);

}  // namespace ravl
