#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/error.hpp"
#include "ravl/memory_bank.hpp"
#include "support.hpp"

using namespace ravl;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.dim = 32;
  cfg.query_dim = 32;
  cfg.image_grid = 2;
  cfg.text_buckets = 64;
  cfg.seed = 9;
  return cfg;
}

// A valid silent-only dataset where several videos share a title (and hence a
// retrieval key), to exercise tie-breaking.
Dataset tied_dataset(int n_tied) {
  Dataset ds;
  for (int i = 0; i < n_tied; ++i) {
    std::string vid = "tie_" + std::to_string(i);
    VideoRecord video;
    video.video_id = vid;
    video.kind = VideoKind::silent;
    video.title = "shared calibration recording";
    video.clip_ids = {vid + "_c0"};
    ds.videos.emplace(vid, video);
    ClipRecord clip;
    clip.clip_id = vid + "_c0";
    clip.video_id = vid;
    clip.t_start = 0.0;
    clip.t_end = 4.0;
    clip.frame_refs = {"synth:5:0:0:0:0:16", "synth:5:0:0:0:1:16"};
    ds.clips.emplace(clip.clip_id, clip);
  }
  return ds;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("bank build over the fixture's silent videos matches a hand recompute") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  auto silents = ds.videos_of_kind(VideoKind::silent);
  REQUIRE(silents.size() == 4);

  EncoderConfig cfg;  // full-size defaults
  EncoderBundle bundle = EncoderBundle::make(cfg);
  MemoryBank bank = MemoryBank::build(ds, silents, bundle, 8);

  CHECK(bank.size() == 4);
  CHECK(bank.key_dim() == cfg.query_dim);
  CHECK(bank.value_dim() == cfg.dim);
  CHECK(bank.frames_per_clip() == 8);
  CHECK(bank.encoder_config_json() == encoder_config_to_json(cfg));

  // Recompute every entry through the public encoder API.
  for (const VideoRecord* video : silents) {
    const MemoryEntry& e = bank.entry(video->video_id);
    CHECK(e.generation == 0);
    CHECK(e.key == bundle.query.encode(video->title));
    CHECK(e.value_text == bundle.text.encode(video->title));
    std::vector<Embedding> clip_embs;
    for (const ClipRecord* clip : ds.clips_of(*video)) {
      std::vector<Image> frames;
      for (const std::string& ref : sample_frames(*clip, 8)) frames.push_back(load_frame(ref));
      clip_embs.push_back(bundle.visual.encode_clip(frames));
    }
    CHECK(e.value_visual == aggregate_video(clip_embs));
  }
}

TEST_CASE("narrative videos are rejected as bank entries") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  auto narr = ds.videos_of_kind(VideoKind::narrative);
  REQUIRE(!narr.empty());
  EncoderBundle bundle = EncoderBundle::make(small_config());
  CHECK_THROWS_WITH_AS(MemoryBank::build(ds, {narr[0]}, bundle, 2),
                       doctest::Contains("silent"), Error);
}

TEST_CASE("empty bank and bad k are rejected at retrieval time") {
  MemoryBank empty;
  Embedding q = Embedding::Zero(32);
  q[0] = 1.0;
  CHECK_THROWS_WITH_AS(empty.retrieve(q, 1), doctest::Contains("empty"), Error);

  Dataset ds = tied_dataset(2);
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 2);
  CHECK_THROWS_WITH_AS(bank.retrieve(q, 0), doctest::Contains("k"), Error);
  CHECK_THROWS_AS(bank.retrieve(Embedding::Ones(7), 1), Error);  // DimensionMismatch
}

TEST_CASE("exact score ties resolve by ascending entry id") {
  Dataset ds = tied_dataset(6);
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 2);
  REQUIRE(bank.size() == 6);

  Eigen::MatrixXd q = testsupport::random_unit_rows(1, 32, 77);
  for (int k : {1, 3, 6}) {
    RetrievalResult r = bank.retrieve(q.row(0).transpose(), k);
    REQUIRE(r.entries.size() == static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      CHECK(r.entries[static_cast<size_t>(i)].entry_id == "tie_" + std::to_string(i));
      CHECK(r.entries[static_cast<size_t>(i)].score == r.entries[0].score);
    }
  }
}

TEST_CASE("k larger than the bank clamps to the bank size") {
  Dataset ds = tied_dataset(4);
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 1);
  Eigen::MatrixXd q = testsupport::random_unit_rows(1, 32, 3);
  RetrievalResult r = bank.retrieve(q.row(0).transpose(), 10);
  CHECK(r.entries.size() == 4);
}

TEST_CASE("retrieval agrees with an independent exhaustive oracle at scale") {
  SynthSpec spec;
  spec.n_narrative = 1;
  spec.n_silent = 1000;
  spec.clips_per_video = 1;
  spec.n_concepts = 5;
  spec.image_size = 16;
  spec.frames_per_clip = 2;
  Dataset ds = synthesize_dataset(spec, 17);
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 1);
  REQUIRE(bank.size() == 1000);
  REQUIRE(bank.key_dim() == 32);

  Eigen::MatrixXd queries = testsupport::random_unit_rows(100, 32, 4242);
  for (int qi = 0; qi < 100; ++qi) {
    Embedding q = queries.row(qi).transpose();
    // Oracle: same sequential-loop dot product, full stable sort by
    // (score desc, entry_id asc).
    std::vector<std::pair<double, std::string>> oracle;
    oracle.reserve(bank.size());
    for (const MemoryEntry& e : bank.entries()) {
      double s = 0.0;
      for (Eigen::Index d = 0; d < e.key.size(); ++d) s += e.key(d) * q(d);
      oracle.emplace_back(s, e.entry_id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int k : {1, 5, 50}) {
      RetrievalResult r = bank.retrieve(q, k);
      REQUIRE(r.entries.size() == static_cast<size_t>(k));
      for (int i = 0; i < k; ++i) {
        CHECK(r.entries[static_cast<size_t>(i)].entry_id == oracle[static_cast<size_t>(i)].second);
        CHECK(r.entries[static_cast<size_t>(i)].score == oracle[static_cast<size_t>(i)].first);
        if (i > 0) {
          CHECK(r.entries[static_cast<size_t>(i)].score <=
                r.entries[static_cast<size_t>(i - 1)].score);
        }
      }
    }
  }
}

TEST_CASE("refresh keeps keys and ordering, re-derives values, bumps generations") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  EncoderConfig cfg = small_config();
  EncoderBundle bundle = EncoderBundle::make(cfg);
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 4);

  std::vector<MemoryEntry> before = bank.entries();

  // Refresh with unchanged encoders: values must reproduce bit-for-bit.
  bank.refresh_values(bundle);
  for (size_t i = 0; i < before.size(); ++i) {
    const MemoryEntry& e = bank.entries()[i];
    CHECK(e.entry_id == before[i].entry_id);
    CHECK(e.generation == 1);
    CHECK(e.key == before[i].key);
    CHECK(e.value_text == before[i].value_text);
    CHECK(e.value_visual == before[i].value_visual);
  }

  // Refresh after a parameter update: keys and entry order stay fixed, values
  // move, generations advance again.
  bundle.visual.weights().array() += 0.01;
  bundle.text.weights().array() -= 0.02;
  bank.refresh_values(bundle);
  for (size_t i = 0; i < before.size(); ++i) {
    const MemoryEntry& e = bank.entries()[i];
    CHECK(e.entry_id == before[i].entry_id);
    CHECK(e.generation == 2);
    CHECK(e.key == before[i].key);
    CHECK(e.value_text != before[i].value_text);
    CHECK(e.value_visual != before[i].value_visual);
  }
}

TEST_CASE("gathered value matrices follow retrieval order") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 2);

  Embedding q = bank.entries()[2].key;  // guarantees a known best hit
  RetrievalResult r = bank.retrieve(q, 3);
  RetrievedSet set = bank.gather_values(r);
  REQUIRE(set.visual.rows() == 3);
  REQUIRE(set.text.rows() == 3);
  CHECK(r.entries[0].entry_id == bank.entries()[2].entry_id);
  for (int i = 0; i < 3; ++i) {
    const MemoryEntry& e = bank.entry(r.entries[static_cast<size_t>(i)].entry_id);
    CHECK(set.visual.row(i) == e.value_visual.transpose());
    CHECK(set.text.row(i) == e.value_text.transpose());
  }

  CHECK_THROWS_AS(bank.gather_values(RetrievalResult{}), Error);
  CHECK_THROWS_WITH_AS(bank.entry("no_such_video"), doctest::Contains("unknown"), Error);
}

TEST_CASE("bank files round-trip bit-exactly") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 3);
  bank.refresh_values(bundle);  // non-zero generations should survive the trip

  auto dir = testsupport::scratch_dir("bank-roundtrip");
  auto p1 = dir / "a.bank";
  auto p2 = dir / "b.bank";
  bank.save(p1);
  MemoryBank loaded = MemoryBank::load(p1);

  CHECK(loaded.size() == bank.size());
  CHECK(loaded.frames_per_clip() == bank.frames_per_clip());
  CHECK(loaded.encoder_config_json() == bank.encoder_config_json());
  for (size_t i = 0; i < bank.size(); ++i) {
    const MemoryEntry& a = bank.entries()[i];
    const MemoryEntry& b = loaded.entries()[i];
    CHECK(a.entry_id == b.entry_id);
    CHECK(a.generation == b.generation);
    CHECK(a.key == b.key);
    CHECK(a.value_text == b.value_text);
    CHECK(a.value_visual == b.value_visual);
  }

  // Saving the loaded bank must produce byte-identical output.
  loaded.save(p2);
  CHECK(read_bytes(p1) == read_bytes(p2));

  // A reloaded bank still refreshes: sources must have survived too.
  loaded.refresh_values(bundle);
  CHECK(loaded.entries()[0].value_visual == bank.entries()[0].value_visual);
}

TEST_CASE("foreign, truncated, and mismatched bank files fail loudly") {
  auto dir = testsupport::scratch_dir("bank-bad-files");

  auto foreign = dir / "foreign.bank";
  {
    std::ofstream out(foreign, std::ios::binary);
    out << "NOTABANKxxxxxxxxxxxxxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_WITH_AS(MemoryBank::load(foreign), doctest::Contains("not a bank"), Error);

  CHECK_THROWS_WITH_AS(MemoryBank::load(dir / "absent.bank"), doctest::Contains("not found"),
                       Error);

  Dataset ds = tied_dataset(3);
  EncoderBundle bundle = EncoderBundle::make(small_config());
  MemoryBank bank = MemoryBank::build(ds, ds.videos_of_kind(VideoKind::silent), bundle, 1);
  auto good = dir / "good.bank";
  bank.save(good);

  // Valid header, body cut short -> schema failure, not a version complaint.
  std::string bytes = read_bytes(good);
  REQUIRE(bytes.size() > 64);
  auto truncated = dir / "truncated.bank";
  {
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    MemoryBank::load(truncated);
    FAIL("truncated bank must not load");
  } catch (const Error& e) {
    CHECK(e.code() == "SchemaError");
  }

  try {
    MemoryBank::load(good, 999);
    FAIL("dimension guard must fire");
  } catch (const Error& e) {
    CHECK(e.code() == "DimensionMismatch");
  }
  CHECK(MemoryBank::load(good, 32).size() == 3);
}
