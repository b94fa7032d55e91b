#include "ravl/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "ravl/error.hpp"
#include "ravl/image.hpp"
#include "ravl/serialize.hpp"

namespace ravl {

using nlohmann::json;

std::string to_string(VideoKind kind) {
  return kind == VideoKind::narrative ? "narrative" : "silent";
}

VideoKind video_kind_from_string(const std::string& s) {
  if (s == "narrative") return VideoKind::narrative;
  if (s == "silent") return VideoKind::silent;
  throw Error("SchemaError", "unknown video kind: " + s);
}

std::vector<const VideoRecord*> Dataset::videos_of_kind(VideoKind kind) const {
  std::vector<const VideoRecord*> out;
  for (const auto& [id, video] : videos) {
    if (video.kind == kind) out.push_back(&video);
  }
  return out;
}

std::vector<const ClipRecord*> Dataset::clips_of(const VideoRecord& video) const {
  std::vector<const ClipRecord*> out;
  out.reserve(video.clip_ids.size());
  for (const std::string& id : video.clip_ids) out.push_back(&clip(id));
  return out;
}

const VideoRecord& Dataset::video(const std::string& video_id) const {
  auto it = videos.find(video_id);
  if (it == videos.end()) throw Error("IntegrityError", "unknown video_id: " + video_id);
  return it->second;
}

const ClipRecord& Dataset::clip(const std::string& clip_id) const {
  auto it = clips.find(clip_id);
  if (it == clips.end()) throw Error("IntegrityError", "unknown clip_id: " + clip_id);
  return it->second;
}

void Dataset::validate() const {
  for (const auto& [id, video] : videos) {
    if (id != video.video_id) throw Error("IntegrityError", "video map key mismatch: " + id);
    if (video.title.empty()) throw Error("IntegrityError", "empty title: " + id);
    if (video.clip_ids.empty()) throw Error("IntegrityError", "video without clips: " + id);
    double prev_end = -1.0;
    double prev_start = -1.0;
    for (const std::string& cid : video.clip_ids) {
      const ClipRecord& c = clip(cid);  // throws on unknown clip
      if (c.video_id != id) {
        throw Error("IntegrityError", "clip " + cid + " listed by " + id + " but names video " +
                                          c.video_id);
      }
      if (c.t_start < prev_start || (prev_end >= 0.0 && c.t_start < prev_end)) {
        throw Error("IntegrityError", "clips of " + id + " not temporally ordered/disjoint");
      }
      prev_start = c.t_start;
      prev_end = c.t_end;
      bool narrated = c.narration.has_value() && !c.narration->empty();
      if (video.kind == VideoKind::narrative && !narrated) {
        throw Error("IntegrityError", "narrative clip without narration: " + cid);
      }
      if (video.kind == VideoKind::silent && c.narration.has_value()) {
        throw Error("IntegrityError", "silent clip with narration: " + cid);
      }
    }
  }
  for (const auto& [id, c] : clips) {
    if (id != c.clip_id) throw Error("IntegrityError", "clip map key mismatch: " + id);
    if (c.t_end <= c.t_start) throw Error("IntegrityError", "clip with t_end <= t_start: " + id);
    if (c.frame_refs.empty()) throw Error("IntegrityError", "clip without frames: " + id);
    auto vit = videos.find(c.video_id);
    if (vit == videos.end()) {
      throw Error("IntegrityError", "orphan clip " + id + " references unknown video " +
                                        c.video_id);
    }
    const auto& ids = vit->second.clip_ids;
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      throw Error("IntegrityError", "clip " + id + " not listed by its video " + c.video_id);
    }
  }
}

namespace {

[[noreturn]] void schema_error(size_t line, const std::string& field, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line << ", field '" << field << "': " << what;
  throw Error("SchemaError", msg.str());
}

void check_keys(const json& rec, size_t line, const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : rec.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      schema_error(line, key, "unknown field");
    }
  }
}

std::string require_string(const json& rec, size_t line, const std::string& field) {
  if (!rec.contains(field) || !rec[field].is_string()) schema_error(line, field, "string required");
  std::string v = rec[field].get<std::string>();
  if (v.empty()) schema_error(line, field, "must be non-empty");
  return v;
}

double require_number(const json& rec, size_t line, const std::string& field) {
  if (!rec.contains(field) || !rec[field].is_number()) schema_error(line, field, "number required");
  return rec[field].get<double>();
}

std::vector<std::string> require_string_array(const json& rec, size_t line,
                                              const std::string& field) {
  if (!rec.contains(field) || !rec[field].is_array()) schema_error(line, field, "array required");
  std::vector<std::string> out;
  for (const auto& v : rec[field]) {
    if (!v.is_string()) schema_error(line, field, "array elements must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Dataset parse_manifest(const std::string& content) {
  Dataset ds;
  std::istringstream in(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Skip blank lines (trailing newline produces one).
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      schema_error(line_no, "-", std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) schema_error(line_no, "-", "record must be a JSON object");
    std::string type = require_string(rec, line_no, "type");
    if (type == "video") {
      check_keys(rec, line_no, {"type", "video_id", "kind", "title", "clip_ids"});
      VideoRecord v;
      v.video_id = require_string(rec, line_no, "video_id");
      std::string kind = require_string(rec, line_no, "kind");
      if (kind != "narrative" && kind != "silent") schema_error(line_no, "kind", "must be 'narrative' or 'silent'");
      v.kind = video_kind_from_string(kind);
      v.title = require_string(rec, line_no, "title");
      v.clip_ids = require_string_array(rec, line_no, "clip_ids");
      if (v.clip_ids.empty()) schema_error(line_no, "clip_ids", "must be non-empty");
      if (!ds.videos.emplace(v.video_id, v).second) {
        throw Error("IntegrityError", "duplicate video_id: " + v.video_id);
      }
    } else if (type == "clip") {
      check_keys(rec, line_no,
                 {"type", "clip_id", "video_id", "t_start", "t_end", "narration", "frames"});
      ClipRecord c;
      c.clip_id = require_string(rec, line_no, "clip_id");
      c.video_id = require_string(rec, line_no, "video_id");
      c.t_start = require_number(rec, line_no, "t_start");
      c.t_end = require_number(rec, line_no, "t_end");
      if (c.t_start < 0.0) schema_error(line_no, "t_start", "must be >= 0");
      if (!rec.contains("narration")) schema_error(line_no, "narration", "required (may be null)");
      if (rec["narration"].is_string()) {
        c.narration = rec["narration"].get<std::string>();
        if (c.narration->empty()) schema_error(line_no, "narration", "must be null or non-empty");
      } else if (!rec["narration"].is_null()) {
        schema_error(line_no, "narration", "must be string or null");
      }
      c.frame_refs = require_string_array(rec, line_no, "frames");
      if (c.frame_refs.empty()) schema_error(line_no, "frames", "must be non-empty");
      if (!ds.clips.emplace(c.clip_id, c).second) {
        throw Error("IntegrityError", "duplicate clip_id: " + c.clip_id);
      }
    } else {
      schema_error(line_no, "type", "must be 'video' or 'clip'");
    }
  }
  ds.validate();
  return ds;
}

Dataset load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("MissingFile", "manifest not found: " + path.string());
  }
  return parse_manifest(read_file(path));
}

std::string manifest_to_string(const Dataset& dataset) {
  std::ostringstream out;
  for (const auto& [id, v] : dataset.videos) {
    json rec;
    rec["type"] = "video";
    rec["video_id"] = v.video_id;
    rec["kind"] = to_string(v.kind);
    rec["title"] = v.title;
    rec["clip_ids"] = v.clip_ids;
    out << rec.dump() << "\n";
  }
  for (const auto& [id, c] : dataset.clips) {
    json rec;
    rec["type"] = "clip";
    rec["clip_id"] = c.clip_id;
    rec["video_id"] = c.video_id;
    rec["t_start"] = c.t_start;
    rec["t_end"] = c.t_end;
    if (c.narration.has_value()) {
      rec["narration"] = *c.narration;
    } else {
      rec["narration"] = nullptr;
    }
    rec["frames"] = c.frame_refs;
    out << rec.dump() << "\n";
  }
  return out.str();
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  atomic_write_file(path, manifest_to_string(dataset));
}

namespace {

bool ends_with_terminal(const std::string& text, const std::string& terminals) {
  for (auto it = text.rbegin(); it != text.rend(); ++it) {
    if (std::isspace(static_cast<unsigned char>(*it))) continue;
    return terminals.find(*it) != std::string::npos;
  }
  return false;
}

bool begins_with_linking_word(const std::string& text, const std::vector<std::string>& words) {
  size_t start = 0;
  while (start < text.size() && !std::isalnum(static_cast<unsigned char>(text[start]))) ++start;
  size_t end = start;
  while (end < text.size() && std::isalnum(static_cast<unsigned char>(text[end]))) ++end;
  std::string first = text.substr(start, end - start);
  std::transform(first.begin(), first.end(), first.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(words.begin(), words.end(), first) != words.end();
}

}  // namespace

std::vector<TranscriptSegment> merge_transcript_segments(
    const std::vector<TranscriptSegment>& segments, const MergeConfig& cfg) {
  if (segments.empty()) throw Error("EmptyInput", "no transcript segments");
  std::vector<TranscriptSegment> out;
  for (const TranscriptSegment& seg : segments) {
    if (seg.text.empty()) throw Error("EmptyInput", "transcript segment with empty text");
    bool merge = !out.empty() && (!ends_with_terminal(out.back().text, cfg.terminal_punctuation) ||
                                  begins_with_linking_word(seg.text, cfg.linking_words));
    if (merge) {
      out.back().text += " " + seg.text;
      out.back().t_end = seg.t_end;
    } else {
      out.push_back(seg);
    }
  }
  return out;
}

Dataset synthesize_dataset(const SynthSpec& spec, uint64_t seed) {
  if (spec.n_narrative < 1 || spec.n_silent < 1 || spec.clips_per_video < 1 ||
      spec.n_concepts < 1 || spec.frames_per_clip < 1 || spec.image_size < 1) {
    throw Error("InvalidSpec", "all synthesis counts must be >= 1");
  }
  Dataset ds;
  const int n_videos = spec.n_narrative + spec.n_silent;
  for (int g = 0; g < n_videos; ++g) {
    const bool narrative = g < spec.n_narrative;
    const int concept_id = g % spec.n_concepts;
    VideoRecord video;
    video.kind = narrative ? VideoKind::narrative : VideoKind::silent;
    {
      std::ostringstream id;
      id << (narrative ? "nv_" : "sv_") << std::setw(3) << std::setfill('0') << g;
      video.video_id = id.str();
    }
    {
      std::ostringstream title;
      title << (narrative ? "Surgical training video_" : "Recorded procedure video_") << g
            << " covering concept_" << concept_id << " techniques";
      video.title = title.str();
    }
    for (int j = 0; j < spec.clips_per_video; ++j) {
      ClipRecord clip;
      {
        std::ostringstream id;
        id << video.video_id << "_c" << std::setw(2) << std::setfill('0') << j;
        clip.clip_id = id.str();
      }
      clip.video_id = video.video_id;
      clip.t_start = j * spec.clip_seconds;
      clip.t_end = (j + 1) * spec.clip_seconds;
      if (narrative) {
        std::ostringstream narration;
        narration << "Segment clip_" << g << "_" << j << " of video_" << g
                  << " demonstrates concept_" << concept_id << " step " << j << ".";
        clip.narration = narration.str();
      }
      for (int f = 0; f < spec.frames_per_clip; ++f) {
        SynthFrameKey key{seed, concept_id, g, j, f, spec.image_size};
        clip.frame_refs.push_back(synth_frame_ref(key));
      }
      video.clip_ids.push_back(clip.clip_id);
      ds.clips.emplace(clip.clip_id, std::move(clip));
    }
    ds.videos.emplace(video.video_id, std::move(video));
  }
  ds.validate();
  return ds;
}

std::vector<std::string> sample_frames(const ClipRecord& clip, int n_frames) {
  if (clip.frame_refs.empty()) throw Error("IntegrityError", "clip has no frames: " + clip.clip_id);
  if (n_frames < 1) throw Error("InvalidSpec", "n_frames must be >= 1");
  const size_t n_avail = clip.frame_refs.size();
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    size_t idx = (static_cast<size_t>(i) * n_avail) / static_cast<size_t>(n_frames);
    out.push_back(clip.frame_refs[idx]);
  }
  return out;
}

}  // namespace ravl
