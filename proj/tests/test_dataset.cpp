#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "ravl/dataset.hpp"
#include "ravl/error.hpp"
#include "support.hpp"

using namespace ravl;

namespace {

// Minimal valid manifest: one narrated video with two clips.
const char* kSmallManifest = R"({"type":"video","video_id":"v1","kind":"narrative","title":"a title","clip_ids":["c1","c2"]}
{"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":2.0,"narration":"first part","frames":["f1.ppm"]}
{"type":"clip","clip_id":"c2","video_id":"v1","t_start":2.0,"t_end":4.0,"narration":"second part","frames":["f2.ppm"]}
)";

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("parse_manifest builds a dataset from valid records") {
  Dataset ds = parse_manifest(kSmallManifest);
  CHECK(ds.videos.size() == 1);
  CHECK(ds.clips.size() == 2);
  CHECK(ds.video("v1").kind == VideoKind::narrative);
  CHECK(ds.clip("c1").narration.value() == "first part");
  CHECK(ds.clips_of(ds.video("v1")).size() == 2);
}

TEST_CASE("parse_manifest rejects a clip referencing an unknown video") {
  std::string text = kSmallManifest;
  text += R"({"type":"clip","clip_id":"c9","video_id":"ghost","t_start":0.0,"t_end":1.0,"narration":"x","frames":["f.ppm"]})";
  text += "\n";
  CHECK(error_code([&] { parse_manifest(text); }) == "IntegrityError");
}

TEST_CASE("parse_manifest rejects duplicate ids") {
  std::string text = kSmallManifest;
  text += R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":4.0,"t_end":5.0,"narration":"x","frames":["f.ppm"]})";
  text += "\n";
  CHECK(error_code([&] { parse_manifest(text); }) == "IntegrityError");
}

TEST_CASE("parse_manifest reports the offending line and field") {
  // t_end as a string, on line 2.
  std::string text =
      R"({"type":"video","video_id":"v1","kind":"narrative","title":"t","clip_ids":["c1"]})"
      "\n"
      R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":"oops","narration":"x","frames":["f.ppm"]})"
      "\n";
  try {
    parse_manifest(text);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.code() == "SchemaError");
    CHECK(e.detail().find("line 2") != std::string::npos);
    CHECK(e.detail().find("t_end") != std::string::npos);
  }
}

TEST_CASE("parse_manifest rejects unknown keys") {
  std::string text =
      R"({"type":"video","video_id":"v1","kind":"narrative","title":"t","clip_ids":["c1"],"label":3})"
      "\n"
      R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":1.0,"narration":"x","frames":["f.ppm"]})"
      "\n";
  CHECK(error_code([&] { parse_manifest(text); }) == "SchemaError");
}

TEST_CASE("parse_manifest enforces narration by video kind") {
  // Silent video with a narrated clip.
  std::string silent_with_narration =
      R"({"type":"video","video_id":"v1","kind":"silent","title":"t","clip_ids":["c1"]})"
      "\n"
      R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":1.0,"narration":"x","frames":["f.ppm"]})"
      "\n";
  CHECK(error_code([&] { parse_manifest(silent_with_narration); }) == "IntegrityError");

  // Narrative video with a silent clip.
  std::string narrative_without =
      R"({"type":"video","video_id":"v1","kind":"narrative","title":"t","clip_ids":["c1"]})"
      "\n"
      R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":1.0,"narration":null,"frames":["f.ppm"]})"
      "\n";
  CHECK(error_code([&] { parse_manifest(narrative_without); }) == "IntegrityError");
}

TEST_CASE("parse_manifest rejects overlapping or unordered clips") {
  std::string text =
      R"({"type":"video","video_id":"v1","kind":"narrative","title":"t","clip_ids":["c1","c2"]})"
      "\n"
      R"({"type":"clip","clip_id":"c1","video_id":"v1","t_start":0.0,"t_end":3.0,"narration":"a","frames":["f.ppm"]})"
      "\n"
      R"({"type":"clip","clip_id":"c2","video_id":"v1","t_start":2.0,"t_end":4.0,"narration":"b","frames":["f.ppm"]})"
      "\n";
  CHECK(error_code([&] { parse_manifest(text); }) == "IntegrityError");
}

TEST_CASE("load_manifest on a missing path reports MissingFile") {
  CHECK(error_code([] { load_manifest("/nonexistent/manifest.jsonl"); }) == "MissingFile");
}

TEST_CASE("the bundled fixture has 8 narrative and 4 silent videos") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  CHECK(ds.videos_of_kind(VideoKind::narrative).size() == 8);
  CHECK(ds.videos_of_kind(VideoKind::silent).size() == 4);

  // Independent check: one record per line, videos + clips.
  std::ifstream in(testsupport::fixture_manifest());
  int lines = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == static_cast<int>(ds.videos.size() + ds.clips.size()));
}

TEST_CASE("manifest round-trips through save and load") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  auto dir = testsupport::scratch_dir("manifest_roundtrip");
  save_manifest(ds, dir / "copy.jsonl");
  Dataset back = load_manifest(dir / "copy.jsonl");
  CHECK(back == ds);
}

TEST_CASE("merge joins a segment lacking terminal punctuation with its successor") {
  std::vector<TranscriptSegment> in = {{"The anterior chamber is", 0, 2}, {"under-filled.", 2, 4}};
  auto out = merge_transcript_segments(in);
  REQUIRE(out.size() == 1);
  CHECK(out[0].text == "The anterior chamber is under-filled.");
  CHECK(out[0].t_start == 0);
  CHECK(out[0].t_end == 4);
}

TEST_CASE("merge keeps segments that terminate and do not link") {
  std::vector<TranscriptSegment> in = {{"Incision complete.", 0, 2},
                                       {"Next we inject viscoelastic.", 2, 5}};
  auto out = merge_transcript_segments(in);
  CHECK(out == in);
}

TEST_CASE("merge joins on a linking word even after terminal punctuation") {
  std::vector<TranscriptSegment> in = {{"Done.", 0, 1}, {"and we proceed.", 1, 3}};
  auto out = merge_transcript_segments(in);
  REQUIRE(out.size() == 1);
  CHECK(out[0].text == "Done. and we proceed.");
  CHECK(out[0].t_start == 0);
  CHECK(out[0].t_end == 3);
}

TEST_CASE("merge is idempotent and preserves spans and text mass") {
  std::vector<TranscriptSegment> in = {
      {"We begin with", 0, 1},   {"the incision.", 1, 2}, {"Then viscoelastic", 2, 3},
      {"is injected.", 3, 4},    {"Complete.", 4, 5},     {"but watch the pressure", 5, 6},
      {"during removal.", 6, 7},
  };
  auto once = merge_transcript_segments(in);
  auto twice = merge_transcript_segments(once);
  CHECK(twice == once);

  CHECK(once.front().t_start == in.front().t_start);
  CHECK(once.back().t_end == in.back().t_end);
  size_t before = 0, after = 0;
  for (const auto& s : in) {
    std::string t = s.text;
    t.erase(std::remove(t.begin(), t.end(), ' '), t.end());
    before += t.size();
  }
  for (const auto& s : once) {
    std::string t = s.text;
    t.erase(std::remove(t.begin(), t.end(), ' '), t.end());
    after += t.size();
  }
  CHECK(after == before);
}

TEST_CASE("merge of an empty list reports EmptyInput") {
  CHECK(error_code([] { merge_transcript_segments({}); }) == "EmptyInput");
}

TEST_CASE("synthesize_dataset is deterministic in spec and seed") {
  SynthSpec spec;
  spec.n_narrative = 1;
  spec.n_silent = 1;
  spec.clips_per_video = 2;
  spec.n_concepts = 4;
  Dataset a = synthesize_dataset(spec, 7);
  Dataset b = synthesize_dataset(spec, 7);
  CHECK(a == b);
  CHECK(manifest_to_string(a) == manifest_to_string(b));
}

TEST_CASE("synthesize_dataset produces the requested cardinalities") {
  SynthSpec spec;
  spec.n_narrative = 8;
  spec.n_silent = 4;
  spec.clips_per_video = 3;
  spec.n_concepts = 4;
  Dataset ds = synthesize_dataset(spec, 0);
  CHECK(ds.videos.size() == 12);
  CHECK(ds.clips.size() == 36);
}

TEST_CASE("videos sharing a concept share a concept token in their titles") {
  SynthSpec spec;
  spec.n_narrative = 8;
  spec.n_silent = 4;
  spec.clips_per_video = 1;
  spec.n_concepts = 4;
  Dataset ds = synthesize_dataset(spec, 3);

  // Group titles by the concept token they contain; 12 videos over 4 concepts
  // must form 4 groups of 3.
  std::map<std::string, int> groups;
  for (const auto& [id, video] : ds.videos) {
    auto pos = video.title.find("concept_");
    REQUIRE(pos != std::string::npos);
    auto end = video.title.find(' ', pos);
    groups[video.title.substr(pos, end - pos)]++;
  }
  CHECK(groups.size() == 4);
  for (const auto& [token, count] : groups) CHECK(count == 3);
}

TEST_CASE("synthesize_dataset rejects non-positive counts") {
  SynthSpec spec;
  spec.n_narrative = 0;
  CHECK(error_code([&] { synthesize_dataset(spec, 0); }) == "InvalidSpec");
}

TEST_CASE("sample_frames spaces indices evenly") {
  ClipRecord clip;
  clip.clip_id = "c";
  clip.video_id = "v";
  clip.t_end = 1.0;
  for (int i = 0; i < 16; ++i) clip.frame_refs.push_back("f" + std::to_string(i));

  auto out = sample_frames(clip, 8);
  std::vector<std::string> expect = {"f0", "f2", "f4", "f6", "f8", "f10", "f12", "f14"};
  CHECK(out == expect);
}

TEST_CASE("sample_frames repeats frames in order when the clip is short") {
  ClipRecord clip;
  clip.clip_id = "c";
  clip.video_id = "v";
  clip.t_end = 1.0;
  clip.frame_refs = {"f0", "f1", "f2"};
  // index i -> (i * 3) / 8
  std::vector<std::string> expect = {"f0", "f0", "f0", "f1", "f1", "f1", "f2", "f2"};
  CHECK(sample_frames(clip, 8) == expect);
}

TEST_CASE("sample_frames with matching counts is the identity") {
  ClipRecord clip;
  clip.clip_id = "c";
  clip.video_id = "v";
  clip.t_end = 1.0;
  for (int i = 0; i < 8; ++i) clip.frame_refs.push_back("f" + std::to_string(i));
  CHECK(sample_frames(clip, 8) == clip.frame_refs);
}
