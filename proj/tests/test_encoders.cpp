#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <vector>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/error.hpp"
#include "support.hpp"

using namespace ravl;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.dim = 32;
  cfg.query_dim = 32;
  cfg.image_grid = 2;
  cfg.text_buckets = 64;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("tokenize lowercases and keeps underscore tokens atomic") {
  auto tokens = tokenize("Surgical video_3 covering Concept_1, step 2!", 77);
  std::vector<std::string> expect = {"surgical", "video_3", "covering", "concept_1", "step", "2"};
  CHECK(tokens == expect);
}

TEST_CASE("tokenize truncates to the token limit") {
  std::string text;
  for (int i = 0; i < 100; ++i) text += "tok" + std::to_string(i) + " ";
  auto tokens = tokenize(text, 77);
  CHECK(tokens.size() == 77);
  CHECK(tokens.front() == "tok0");
  CHECK(tokens.back() == "tok76");
}

TEST_CASE("every encoder output is unit norm") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  Image frame = render_synth_frame({0, 1, 0, 0, 0, 32});
  CHECK(bundle.visual.encode_clip({frame}).norm() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(bundle.text.encode("a narration about concept_2").norm() ==
        doctest::Approx(1.0).epsilon(1e-5));
  CHECK(bundle.query.encode("a title").norm() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("encode_clip of identical frames equals the single-frame encoding") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  Image frame = render_synth_frame({2, 0, 1, 0, 0, 32});
  Embedding one = bundle.visual.encode_clip({frame});
  Embedding eight = bundle.visual.encode_clip(std::vector<Image>(8, frame));
  CHECK((one - eight).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("encode_clip is invariant to frame order") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  std::vector<Image> frames;
  for (int f = 0; f < 6; ++f) frames.push_back(render_synth_frame({2, 0, 1, 0, f, 32}));
  Embedding forward = bundle.visual.encode_clip(frames);
  std::reverse(frames.begin(), frames.end());
  Embedding reversed = bundle.visual.encode_clip(frames);
  CHECK((forward - reversed).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("encode_clip rejects frames of mixed sizes") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  std::vector<Image> frames = {render_synth_frame({0, 0, 0, 0, 0, 32}),
                               render_synth_frame({0, 0, 0, 0, 1, 16})};
  CHECK_THROWS_WITH_AS(bundle.visual.encode_clip(frames),
                       doctest::Contains("spatial size"), Error);
}

TEST_CASE("encoding the fixture's first clip reproduces the committed golden vector") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  const ClipRecord& c0 = ds.clip("nv_000_c00");
  std::vector<Image> frames;
  for (const std::string& ref : c0.frame_refs) frames.push_back(load_frame(ref));
  VisualEncoder visual{EncoderConfig{}};
  Embedding e = visual.encode_clip(frames);

  std::ifstream golden(testsupport::test_data("golden_clip_c0.txt"));
  REQUIRE(golden.good());
  std::vector<double> expect;
  for (double v; golden >> v;) expect.push_back(v);
  REQUIRE(static_cast<Eigen::Index>(expect.size()) == e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    CHECK(e[i] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-6));
  }
}

TEST_CASE("encode_text is deterministic and truncation-consistent") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  CHECK(bundle.text.encode("same string") == bundle.text.encode("same string"));

  // 80 tokens vs its first-77-token prefix.
  std::string long_text, prefix;
  for (int i = 0; i < 80; ++i) {
    std::string tok = "w" + std::to_string(i) + " ";
    long_text += tok;
    if (i < 77) prefix += tok;
  }
  CHECK(bundle.text.encode(long_text) == bundle.text.encode(prefix));
}

TEST_CASE("encode_text rejects empty and tokenless input") {
  EncoderBundle bundle = EncoderBundle::make(small_config());
  CHECK_THROWS_WITH_AS(bundle.text.encode(""), doctest::Contains("empty"), Error);
  CHECK_THROWS_AS(bundle.text.encode("!!! ???"), Error);  // no tokens survive
}

TEST_CASE("shared concept tokens dominate text similarity") {
  // Same-concept pairs must score above every cross-concept pair.
  EncoderBundle bundle = EncoderBundle::make(EncoderConfig{});
  Embedding c3a = bundle.text.encode("concept-3 phacoemulsification");
  Embedding c3b = bundle.text.encode("concept-3 incision");
  Embedding c1a = bundle.text.encode("concept-1 irrigation");
  Embedding c1b = bundle.text.encode("concept-1 suturing");
  double same = c3a.dot(c3b);
  for (const Embedding* other : {&c1a, &c1b}) {
    CHECK(same > c3a.dot(*other));
    CHECK(same > c3b.dot(*other));
  }
}

TEST_CASE("query encoder ignores trainable-parameter updates") {
  EncoderConfig cfg = small_config();
  EncoderBundle bundle = EncoderBundle::make(cfg);
  Embedding before = bundle.query.encode("The same title");
  bundle.visual.weights().array() += 0.25;
  bundle.text.weights().array() -= 0.5;
  Embedding after = bundle.query.encode("The same title");
  CHECK(before == after);

  // Identical config -> bit-identical frozen weights.
  EncoderBundle second = EncoderBundle::make(cfg);
  CHECK(bundle.query.weights() == second.query.weights());
}

TEST_CASE("fixture title similarities match a brute-force recompute") {
  Dataset ds = load_manifest(testsupport::fixture_manifest());
  EncoderConfig cfg = small_config();
  QueryEncoder query(cfg);

  std::vector<std::string> titles;
  for (const auto& [id, video] : ds.videos) titles.push_back(video.title);

  // Recompute each embedding from raw features; similarity matrices must
  // agree exactly.
  LinearEncoder reference(cfg.query_dim, cfg.text_features(),
                          splitmix64(cfg.seed ^ fnv1a64("query-encoder")));
  for (const std::string& a : titles) {
    Embedding qa = query.encode(a);
    Embedding ra = reference.encode_features(text_features(a, cfg.text_buckets, cfg.text_len));
    CHECK(qa == ra);
  }
}

TEST_CASE("aggregate_video averages and renormalizes") {
  Embedding e1(2), e2(2);
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  Embedding agg = aggregate_video({e1, e2});
  CHECK(agg[0] == doctest::Approx(0.7071067811865476).epsilon(1e-12));
  CHECK(agg[1] == doctest::Approx(0.7071067811865476).epsilon(1e-12));

  CHECK(aggregate_video({e1, e1}) == e1);

  Embedding ab = aggregate_video({e1, e2});
  Embedding ba = aggregate_video({e2, e1});
  CHECK(ab == ba);
}

TEST_CASE("aggregate_video rejects an empty list") {
  CHECK_THROWS_WITH_AS(aggregate_video({}), doctest::Contains("zero"), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  EncoderConfig cfg = small_config();
  EncoderBundle bundle = EncoderBundle::make(cfg);
  Checkpoint ckpt;
  ckpt.config_json = encoder_config_to_json(cfg);
  ckpt.config_hash = fnv1a64(ckpt.config_json);
  ckpt.epoch_completed = 12;
  store_encoder_params(bundle, ckpt);
  ckpt.scalars["adam_step"] = 37.0;

  auto dir = testsupport::scratch_dir("ckpt");
  save_checkpoint(ckpt, dir / "c.bin");
  Checkpoint back = load_checkpoint(dir / "c.bin");

  CHECK(back.format_version == ckpt.format_version);
  CHECK(back.config_hash == ckpt.config_hash);
  CHECK(back.config_json == ckpt.config_json);
  CHECK(back.epoch_completed == 12);
  CHECK(back.scalars.at("adam_step") == 37.0);
  REQUIRE(back.arrays.size() == ckpt.arrays.size());
  for (const auto& [name, array] : ckpt.arrays) {
    REQUIRE(back.arrays.count(name) == 1);
    CHECK(back.arrays.at(name) == array);  // bit-exact
  }

  // Loading the parameters back reproduces identical encodings.
  EncoderBundle restored = EncoderBundle::make(cfg);
  restored.visual.weights().setZero();
  restored.text.weights().setZero();
  load_encoder_params(back, restored);
  CHECK(restored.visual.weights() == bundle.visual.weights());
  CHECK(restored.text.weights() == bundle.text.weights());
}

TEST_CASE("checkpoint loading rejects foreign and truncated files") {
  auto dir = testsupport::scratch_dir("ckpt_bad");
  {
    std::ofstream out(dir / "not_a_ckpt.bin", std::ios::binary);
    out << "garbage";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "not_a_ckpt.bin"),
                       doctest::Contains("checkpoint"), Error);

  EncoderBundle bundle = EncoderBundle::make(small_config());
  Checkpoint ckpt;
  ckpt.config_json = encoder_config_to_json(small_config());
  store_encoder_params(bundle, ckpt);
  save_checkpoint(ckpt, dir / "full.bin");
  auto full = std::filesystem::file_size(dir / "full.bin");
  {
    std::ifstream in(dir / "full.bin", std::ios::binary);
    std::vector<char> head(static_cast<size_t>(full) / 2);
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    std::ofstream out(dir / "cut.bin", std::ios::binary);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), Error);
}

TEST_CASE("encoder config serializes to JSON and back") {
  EncoderConfig cfg = small_config();
  EncoderConfig back = encoder_config_from_json(encoder_config_to_json(cfg));
  CHECK(back == cfg);
}

TEST_CASE("l2_normalize_vjp matches finite differences") {
  std::mt19937_64 rng(17);
  Eigen::VectorXd z(6), g(6);
  for (int i = 0; i < 6; ++i) {
    z[i] = gaussian(rng) + 0.1;
    g[i] = gaussian(rng);
  }
  Eigen::VectorXd analytic = l2_normalize_vjp(z, g);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    double fp = g.dot(l2_normalize(zp));
    double fm = g.dot(l2_normalize(zm));
    CHECK(analytic[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
  }
}
