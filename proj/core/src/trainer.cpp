#include "ravl/trainer.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "ravl/error.hpp"
#include "ravl/serialize.hpp"
#include "ravl/util.hpp"
#include "ravl/version.hpp"

namespace ravl {

using nlohmann::json;

std::string to_string(Stage stage) { return stage == Stage::CLIP ? "CLIP" : "VIDEO"; }

namespace {

Stage stage_from_string(const std::string& s) {
  if (s == "CLIP") return Stage::CLIP;
  if (s == "VIDEO") return Stage::VIDEO;
  throw Error("SchemaError", "unknown stage label: " + s);
}

// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

uint64_t epoch_stream_seed(uint64_t base_seed, int epoch, const char* stream) {
  return splitmix64(base_seed ^ fnv1a64(stream) ^ splitmix64(static_cast<uint64_t>(epoch)));
}

}  // namespace

void TrainConfig::validate() const {
  if (total_epochs < 1) throw Error("InvalidConfig", "total_epochs must be >= 1");
  if (warmup_clip_epochs < 0 || warmup_clip_epochs > total_epochs) {
    throw Error("InvalidConfig", "warmup_clip_epochs must be in [0, total_epochs]");
  }
  if (alt_clip_epochs < 0 || alt_video_epochs < 0 || alt_clip_epochs + alt_video_epochs < 1) {
    throw Error("InvalidConfig", "alternating block must contain at least one epoch");
  }
  if (batch_clip < 1 || batch_video < 1) throw Error("InvalidConfig", "batch sizes must be >= 1");
  if (lr < 0.0) throw Error("InvalidConfig", "lr must be >= 0");
  if (scheduler != "cosine") throw Error("InvalidConfig", "unknown scheduler: " + scheduler);
  if (optimizer != "adam") throw Error("InvalidConfig", "unknown optimizer: " + optimizer);
  if (momentum < 0.0 || momentum >= 1.0) throw Error("InvalidConfig", "momentum must be in [0,1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw Error("InvalidConfig", "beta2 must be in [0,1)");
  if (k_retrieved < 1) throw Error("InvalidConfig", "k_retrieved must be >= 1");
  if (n_frames < 1) throw Error("InvalidConfig", "n_frames must be >= 1");
  if (image_size < 1) throw Error("InvalidConfig", "image_size must be >= 1");
  if (text_len < 1) throw Error("InvalidConfig", "text_len must be >= 1");
  if (checkpoint_interval < 1) throw Error("InvalidConfig", "checkpoint_interval must be >= 1");
  loss.validate();
  encoder.validate();
}

void TrainConfig::sync_nested() {
  encoder.seed = seed;
  encoder.text_len = text_len;
  augment.out_size = image_size;
}

namespace {

// Field table shared by the YAML and JSON readers so both reject unknown keys
// against the same schema.
template <typename Get>
void assign_config_field(TrainConfig& cfg, const std::string& key, const Get& get) {
  if (key == "total_epochs") cfg.total_epochs = get.integer();
  else if (key == "warmup_clip_epochs") cfg.warmup_clip_epochs = get.integer();
  else if (key == "alt_clip_epochs") cfg.alt_clip_epochs = get.integer();
  else if (key == "alt_video_epochs") cfg.alt_video_epochs = get.integer();
  else if (key == "batch_clip") cfg.batch_clip = get.integer();
  else if (key == "batch_video") cfg.batch_video = get.integer();
  else if (key == "lr") cfg.lr = get.real();
  else if (key == "scheduler") cfg.scheduler = get.text();
  else if (key == "optimizer") cfg.optimizer = get.text();
  else if (key == "momentum") cfg.momentum = get.real();
  else if (key == "beta2") cfg.beta2 = get.real();
  else if (key == "adam_eps") cfg.adam_eps = get.real();
  else if (key == "k_retrieved") cfg.k_retrieved = get.integer();
  else if (key == "n_frames") cfg.n_frames = get.integer();
  else if (key == "image_size") cfg.image_size = get.integer();
  else if (key == "text_len") cfg.text_len = get.integer();
  else if (key == "checkpoint_interval") cfg.checkpoint_interval = get.integer();
  else if (key == "seed") cfg.seed = get.unsigned_integer();
  else if (key == "temperature") cfg.loss.temperature = get.real();
  else if (key == "w_vl") cfg.loss.w_vl = get.real();
  else if (key == "w_vv") cfg.loss.w_vv = get.real();
  else if (key == "symmetric") cfg.loss.symmetric = get.boolean();
  else if (key == "cross_query_negatives") cfg.loss.cross_query_negatives = get.boolean();
  else if (key == "dim") cfg.encoder.dim = get.integer();
  else if (key == "query_dim") cfg.encoder.query_dim = get.integer();
  else if (key == "image_grid") cfg.encoder.image_grid = get.integer();
  else if (key == "text_buckets") cfg.encoder.text_buckets = get.integer();
  else if (key == "min_scale") cfg.augment.min_scale = get.real();
  else if (key == "max_scale") cfg.augment.max_scale = get.real();
  else if (key == "flip_prob") cfg.augment.flip_prob = get.real();
  else if (key == "max_brightness") cfg.augment.max_brightness = get.real();
  else if (key == "max_contrast") cfg.augment.max_contrast = get.real();
  else throw Error("InvalidConfig", "unknown config key: " + key);
}

struct YamlGetter {
  const YAML::Node& node;
  const std::string& key;
  int integer() const { return value<int>(); }
  uint64_t unsigned_integer() const { return value<uint64_t>(); }
  double real() const { return value<double>(); }
  bool boolean() const { return value<bool>(); }
  std::string text() const { return value<std::string>(); }
  template <typename T>
  T value() const {
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      throw Error("InvalidConfig", "bad value for config key: " + key);
    }
  }
};

struct JsonGetter {
  const json& node;
  const std::string& key;
  int integer() const { return value<int>(); }
  uint64_t unsigned_integer() const { return value<uint64_t>(); }
  double real() const { return value<double>(); }
  bool boolean() const { return value<bool>(); }
  std::string text() const { return value<std::string>(); }
  template <typename T>
  T value() const {
    try {
      return node.get<T>();
    } catch (const json::exception&) {
      throw Error("InvalidConfig", "bad value for config key: " + key);
    }
  }
};

}  // namespace

TrainConfig train_config_from_yaml_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error("InvalidConfig", std::string("bad YAML: ") + e.what());
  }
  TrainConfig cfg;
  if (root.IsNull() || !root.IsDefined()) {
    cfg.sync_nested();
    cfg.validate();
    return cfg;
  }
  if (!root.IsMap()) throw Error("InvalidConfig", "config must be a flat key/value document");
  for (const auto& item : root) {
    std::string key = item.first.as<std::string>();
    assign_config_field(cfg, key, YamlGetter{item.second, key});
  }
  cfg.sync_nested();
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_yaml_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("MissingFile", "config not found: " + path.string());
  }
  return train_config_from_yaml_string(read_file(path));
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["total_epochs"] = cfg.total_epochs;
  j["warmup_clip_epochs"] = cfg.warmup_clip_epochs;
  j["alt_clip_epochs"] = cfg.alt_clip_epochs;
  j["alt_video_epochs"] = cfg.alt_video_epochs;
  j["batch_clip"] = cfg.batch_clip;
  j["batch_video"] = cfg.batch_video;
  j["lr"] = cfg.lr;
  j["scheduler"] = cfg.scheduler;
  j["optimizer"] = cfg.optimizer;
  j["momentum"] = cfg.momentum;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["k_retrieved"] = cfg.k_retrieved;
  j["n_frames"] = cfg.n_frames;
  j["image_size"] = cfg.image_size;
  j["text_len"] = cfg.text_len;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["seed"] = cfg.seed;
  j["temperature"] = cfg.loss.temperature;
  j["w_vl"] = cfg.loss.w_vl;
  j["w_vv"] = cfg.loss.w_vv;
  j["symmetric"] = cfg.loss.symmetric;
  j["cross_query_negatives"] = cfg.loss.cross_query_negatives;
  j["dim"] = cfg.encoder.dim;
  j["query_dim"] = cfg.encoder.query_dim;
  j["image_grid"] = cfg.encoder.image_grid;
  j["text_buckets"] = cfg.encoder.text_buckets;
  j["min_scale"] = cfg.augment.min_scale;
  j["max_scale"] = cfg.augment.max_scale;
  j["flip_prob"] = cfg.augment.flip_prob;
  j["max_brightness"] = cfg.augment.max_brightness;
  j["max_contrast"] = cfg.augment.max_contrast;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error("SchemaError", std::string("bad config JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error("SchemaError", "config JSON must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : root.items()) {
    assign_config_field(cfg, key, JsonGetter{value, key});
  }
  cfg.sync_nested();
  cfg.validate();
  return cfg;
}

uint64_t train_config_hash(const TrainConfig& cfg) { return fnv1a64(train_config_to_json(cfg)); }

std::vector<StageLabel> alternating_schedule(const TrainConfig& cfg) {
  cfg.validate();
  std::vector<StageLabel> labels;
  labels.reserve(static_cast<size_t>(cfg.total_epochs));
  auto emit = [&](Stage stage, int count) {
    for (int i = 0; i < count && static_cast<int>(labels.size()) < cfg.total_epochs; ++i) {
      labels.push_back({stage, static_cast<int>(labels.size())});
    }
  };
  emit(Stage::CLIP, cfg.warmup_clip_epochs);
  while (static_cast<int>(labels.size()) < cfg.total_epochs) {
    emit(Stage::CLIP, cfg.alt_clip_epochs);
    emit(Stage::VIDEO, cfg.alt_video_epochs);
  }
  return labels;
}

double cosine_lr(double lr_max, int epoch, int total_epochs) {
  if (total_epochs <= 1) return lr_max;
  constexpr double pi = 3.14159265358979323846;
  return lr_max * 0.5 *
         (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(total_epochs - 1)));
}

OptimizerState OptimizerState::init(const EncoderBundle& bundle) {
  OptimizerState s;
  s.m_visual = Eigen::MatrixXd::Zero(bundle.visual.weights().rows(), bundle.visual.weights().cols());
  s.v_visual = s.m_visual;
  s.m_text = Eigen::MatrixXd::Zero(bundle.text.weights().rows(), bundle.text.weights().cols());
  s.v_text = s.m_text;
  return s;
}

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  for (const MetricsRecord& r : records) {
    json j;
    j["epoch"] = r.epoch;
    j["stage"] = to_string(r.stage);
    j["mean_loss"] = r.mean_loss;
    j["lr"] = r.lr;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<MetricsRecord> metrics_from_jsonl(const std::string& text) {
  std::vector<MetricsRecord> records;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      MetricsRecord r;
      r.epoch = j.at("epoch").get<int>();
      r.stage = stage_from_string(j.at("stage").get<std::string>());
      r.mean_loss = j.at("mean_loss").get<double>();
      r.lr = j.at("lr").get<double>();
      records.push_back(r);
    } catch (const json::exception& e) {
      throw Error("SchemaError", std::string("bad metrics record: ") + e.what());
    }
  }
  return records;
}

Trainer::Trainer(Dataset dataset, TrainConfig cfg)
    : dataset_(std::move(dataset)), cfg_(std::move(cfg)), bundle_(EncoderBundle::make([&] {
        cfg_.sync_nested();
        cfg_.validate();
        return cfg_.encoder;
      }())),
      opt_(OptimizerState::init(bundle_)) {
  for (const VideoRecord* video : dataset_.videos_of_kind(VideoKind::narrative)) {
    narrative_videos_.push_back(video);
    for (const ClipRecord* clip : dataset_.clips_of(*video)) narrative_clips_.push_back(clip);
  }
  std::sort(narrative_clips_.begin(), narrative_clips_.end(),
            [](const ClipRecord* a, const ClipRecord* b) { return a->clip_id < b->clip_id; });
}

std::vector<std::vector<const ClipRecord*>> Trainer::clip_batches(int epoch) const {
  std::vector<const ClipRecord*> order = narrative_clips_;
  std::mt19937_64 rng(epoch_stream_seed(cfg_.seed, epoch, "clip-order"));
  seeded_shuffle(order, rng);
  std::vector<std::vector<const ClipRecord*>> batches;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(cfg_.batch_clip)) {
    size_t end = std::min(order.size(), i + static_cast<size_t>(cfg_.batch_clip));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<const VideoRecord*>> Trainer::video_batches(int epoch) const {
  std::vector<const VideoRecord*> order = narrative_videos_;
  std::mt19937_64 rng(epoch_stream_seed(cfg_.seed, epoch, "video-order"));
  seeded_shuffle(order, rng);
  std::vector<std::vector<const VideoRecord*>> batches;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(cfg_.batch_video)) {
    size_t end = std::min(order.size(), i + static_cast<size_t>(cfg_.batch_video));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::mt19937_64 Trainer::augment_rng(int epoch) const {
  return std::mt19937_64(epoch_stream_seed(cfg_.seed, epoch, "augment"));
}

StepResult Trainer::train_step_clip(const std::vector<const ClipRecord*>& batch,
                                    std::mt19937_64& aug_rng, double lr) {
  if (batch.empty()) throw Error("BatchMismatch", "empty clip batch");
  const Eigen::Index bsz = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index dim = cfg_.encoder.dim;

  std::vector<Eigen::VectorXd> feat_a(batch.size()), feat_b(batch.size()), feat_text(batch.size());
  Eigen::MatrixXd emb_a(bsz, dim), emb_b(bsz, dim), emb_text(bsz, dim);
  for (size_t i = 0; i < batch.size(); ++i) {
    const ClipRecord* clip = batch[i];
    if (!clip->narration.has_value() || clip->narration->empty()) {
      throw Error("SilentClipInBatch", "clip without narration: " + clip->clip_id);
    }
    std::vector<Image> frames;
    for (const std::string& ref : sample_frames(*clip, cfg_.n_frames)) {
      frames.push_back(load_frame(ref));
    }
    // Two independently augmented views of the same frame set.
    std::vector<Image> view_a, view_b;
    view_a.reserve(frames.size());
    view_b.reserve(frames.size());
    for (const Image& f : frames) view_a.push_back(random_augment(f, cfg_.augment, aug_rng));
    for (const Image& f : frames) view_b.push_back(random_augment(f, cfg_.augment, aug_rng));
    feat_a[i] = bundle_.visual.clip_features(view_a);
    feat_b[i] = bundle_.visual.clip_features(view_b);
    feat_text[i] = bundle_.text.features(*clip->narration);
    emb_a.row(static_cast<Eigen::Index>(i)) = bundle_.visual.encode_features(feat_a[i]).transpose();
    emb_b.row(static_cast<Eigen::Index>(i)) = bundle_.visual.encode_features(feat_b[i]).transpose();
    emb_text.row(static_cast<Eigen::Index>(i)) =
        bundle_.text.encode_features(feat_text[i]).transpose();
  }

  PairLossGrad vl = clip_vl_loss_grad(emb_a, emb_text, cfg_.loss);
  PairLossGrad vv = clip_vv_loss_grad(emb_a, emb_b, cfg_.loss);
  const double loss = clip_total_loss(vl.value, vv.value, cfg_.loss);

  Eigen::MatrixXd grad_a = cfg_.loss.w_vl * vl.grad_a + cfg_.loss.w_vv * vv.grad_a;
  Eigen::MatrixXd grad_b = cfg_.loss.w_vv * vv.grad_b;
  Eigen::MatrixXd grad_t = cfg_.loss.w_vl * vl.grad_b;

  Eigen::MatrixXd grad_wv = Eigen::MatrixXd::Zero(bundle_.visual.weights().rows(),
                                                  bundle_.visual.weights().cols());
  Eigen::MatrixXd grad_wt =
      Eigen::MatrixXd::Zero(bundle_.text.weights().rows(), bundle_.text.weights().cols());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    bundle_.visual.accumulate_weight_grad(feat_a[i], grad_a.row(r).transpose(), grad_wv);
    bundle_.visual.accumulate_weight_grad(feat_b[i], grad_b.row(r).transpose(), grad_wv);
    bundle_.text.accumulate_weight_grad(feat_text[i], grad_t.row(r).transpose(), grad_wt);
  }
  apply_update(grad_wv, grad_wt, lr);
  return {loss};
}

StepResult Trainer::train_step_video(const std::vector<const VideoRecord*>& batch,
                                     const MemoryBank& bank, double lr) {
  if (batch.empty()) throw Error("BatchMismatch", "empty video batch");
  if (bank.size() == 0) throw Error("EmptyBank", "video-level step requires a non-empty bank");
  const Eigen::Index bsz = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index dim = cfg_.encoder.dim;
  const int k = std::min<int>(cfg_.k_retrieved, static_cast<int>(bank.size()));

  std::vector<std::vector<Eigen::VectorXd>> clip_feats(batch.size());
  std::vector<std::vector<Embedding>> clip_embs(batch.size());
  std::vector<Eigen::VectorXd> title_feats(batch.size());
  Eigen::MatrixXd emb_video(bsz, dim), emb_title(bsz, dim);
  std::vector<RetrievedSet> retrieved;
  retrieved.reserve(batch.size());

  for (size_t i = 0; i < batch.size(); ++i) {
    const VideoRecord* video = batch[i];
    if (video->kind != VideoKind::narrative) {
      throw Error("NonNarrativeVideo", "video-level batches are narrative-only: " + video->video_id);
    }
    for (const ClipRecord* clip : dataset_.clips_of(*video)) {
      std::vector<Image> frames;
      for (const std::string& ref : sample_frames(*clip, cfg_.n_frames)) {
        frames.push_back(load_frame(ref));
      }
      clip_feats[i].push_back(bundle_.visual.clip_features(frames));
      clip_embs[i].push_back(bundle_.visual.encode_features(clip_feats[i].back()));
    }
    title_feats[i] = bundle_.text.features(video->title);
    emb_video.row(static_cast<Eigen::Index>(i)) = aggregate_video(clip_embs[i]).transpose();
    emb_title.row(static_cast<Eigen::Index>(i)) =
        bundle_.text.encode_features(title_feats[i]).transpose();
    Embedding query = bundle_.query.encode(video->title);
    retrieved.push_back(bank.gather_values(bank.retrieve(query, k)));
  }

  PairLossGrad narrative = video_narrative_loss_grad(emb_video, emb_title, cfg_.loss);
  SilentLossGrad silent = video_silent_loss_grad(emb_video, retrieved, cfg_.loss);
  const double loss = video_total_loss(narrative.value, silent.value);

  Eigen::MatrixXd grad_video = narrative.grad_a + silent.grad_video;
  Eigen::MatrixXd grad_wv = Eigen::MatrixXd::Zero(bundle_.visual.weights().rows(),
                                                  bundle_.visual.weights().cols());
  Eigen::MatrixXd grad_wt =
      Eigen::MatrixXd::Zero(bundle_.text.weights().rows(), bundle_.text.weights().cols());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    std::vector<Eigen::VectorXd> clip_grads =
        aggregate_video_vjp(clip_embs[i], grad_video.row(r).transpose());
    for (size_t c = 0; c < clip_embs[i].size(); ++c) {
      bundle_.visual.accumulate_weight_grad(clip_feats[i][c], clip_grads[c], grad_wv);
    }
    bundle_.text.accumulate_weight_grad(title_feats[i], narrative.grad_b.row(r).transpose(),
                                        grad_wt);
  }
  apply_update(grad_wv, grad_wt, lr);
  return {loss};
}

void Trainer::apply_update(const Eigen::MatrixXd& grad_visual, const Eigen::MatrixXd& grad_text,
                           double lr) {
  opt_.step += 1;
  const double b1 = cfg_.momentum;
  const double b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(opt_.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(opt_.step));
  auto adam = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                  const Eigen::MatrixXd& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.array().square().matrix();
    Eigen::ArrayXXd m_hat = m.array() / bias1;
    Eigen::ArrayXXd v_hat = v.array() / bias2;
    w.array() -= lr * m_hat / (v_hat.sqrt() + cfg_.adam_eps);
  };
  adam(bundle_.visual.weights(), opt_.m_visual, opt_.v_visual, grad_visual);
  adam(bundle_.text.weights(), opt_.m_text, opt_.v_text, grad_text);
}

Checkpoint Trainer::make_checkpoint(int64_t epoch_completed) const {
  Checkpoint ckpt;
  ckpt.tool_version = kVersionString;
  ckpt.config_json = train_config_to_json(cfg_);
  ckpt.config_hash = fnv1a64(ckpt.config_json);
  ckpt.epoch_completed = epoch_completed;
  store_encoder_params(bundle_, ckpt);
  ckpt.arrays["adam_m_visual"] = opt_.m_visual;
  ckpt.arrays["adam_v_visual"] = opt_.v_visual;
  ckpt.arrays["adam_m_text"] = opt_.m_text;
  ckpt.arrays["adam_v_text"] = opt_.v_text;
  ckpt.scalars["adam_step"] = static_cast<double>(opt_.step);
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_hash != train_config_hash(cfg_)) {
    throw Error("ConfigMismatch", "checkpoint was written with a different configuration");
  }
  load_encoder_params(ckpt, bundle_);
  auto need = [&ckpt](const char* name) -> const Eigen::MatrixXd& {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) {
      throw Error("SchemaError", std::string("checkpoint missing array: ") + name);
    }
    return it->second;
  };
  opt_.m_visual = need("adam_m_visual");
  opt_.v_visual = need("adam_v_visual");
  opt_.m_text = need("adam_m_text");
  opt_.v_text = need("adam_v_text");
  auto it = ckpt.scalars.find("adam_step");
  if (it == ckpt.scalars.end()) throw Error("SchemaError", "checkpoint missing adam_step");
  opt_.step = static_cast<int64_t>(it->second);
}

Trainer::RunResult Trainer::run_pretraining(const std::filesystem::path& out_dir, bool resume) {
  cfg_.validate();
  std::filesystem::create_directories(out_dir);
  const std::vector<StageLabel> schedule = alternating_schedule(cfg_);

  if (narrative_videos_.empty()) {
    throw Error("IntegrityError", "pretraining needs at least one narrative video");
  }
  const bool has_video_stage =
      std::any_of(schedule.begin(), schedule.end(),
                  [](const StageLabel& l) { return l.stage == Stage::VIDEO; });
  std::vector<const VideoRecord*> silent = dataset_.videos_of_kind(VideoKind::silent);
  if (has_video_stage && silent.empty()) {
    throw Error("EmptyBank", "schedule contains video stages but the dataset has no silent videos");
  }

  const std::filesystem::path latest_path = out_dir / "ckpt_latest.bin";
  const std::filesystem::path metrics_path = out_dir / "metrics.jsonl";

  int start_epoch = 0;
  std::vector<MetricsRecord> metrics;
  if (resume) {
    Checkpoint ckpt = load_checkpoint(latest_path);  // MissingFile if absent
    restore(ckpt);
    start_epoch = static_cast<int>(ckpt.epoch_completed) + 1;
    if (std::filesystem::exists(metrics_path)) {
      for (const MetricsRecord& r : metrics_from_jsonl(read_file(metrics_path))) {
        if (r.epoch < start_epoch) metrics.push_back(r);
      }
    }
  }

  atomic_write_file(out_dir / "effective_config.json", train_config_to_json(cfg_) + "\n");

  MemoryBank bank;
  if (has_video_stage) {
    bank = MemoryBank::build(dataset_, silent, bundle_, cfg_.n_frames);
  }

  for (int epoch = start_epoch; epoch < cfg_.total_epochs; ++epoch) {
    const Stage stage = schedule[static_cast<size_t>(epoch)].stage;
    const double lr = cosine_lr(cfg_.lr, epoch, cfg_.total_epochs);
    double loss_sum = 0.0;
    size_t steps = 0;
    if (stage == Stage::CLIP) {
      std::mt19937_64 aug_rng = augment_rng(epoch);
      for (const auto& batch : clip_batches(epoch)) {
        loss_sum += train_step_clip(batch, aug_rng, lr).loss;
        ++steps;
      }
    } else {
      // Values are refreshed with current parameters at the start of every
      // video epoch; keys are immutable by construction.
      bank.refresh_values(bundle_);
      for (const auto& batch : video_batches(epoch)) {
        loss_sum += train_step_video(batch, bank, lr).loss;
        ++steps;
      }
    }
    metrics.push_back({epoch, stage, steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0, lr});
    atomic_write_file(metrics_path, metrics_to_jsonl(metrics));

    const bool at_interval = (epoch + 1) % cfg_.checkpoint_interval == 0;
    const bool last = epoch + 1 == cfg_.total_epochs;
    if (at_interval || last) {
      Checkpoint ckpt = make_checkpoint(epoch);
      if (at_interval) {
        std::ostringstream name;
        name << "ckpt_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".bin";
        save_checkpoint(ckpt, out_dir / name.str());
      }
      save_checkpoint(ckpt, latest_path);
    }
  }
  return {latest_path, std::move(metrics)};
}

Embedding embed_clip_eval(const EncoderBundle& bundle, const ClipRecord& clip, int n_frames) {
  std::vector<Image> frames;
  for (const std::string& ref : sample_frames(clip, n_frames)) frames.push_back(load_frame(ref));
  return bundle.visual.encode_clip(frames);
}

Embedding embed_video_eval(const EncoderBundle& bundle, const Dataset& dataset,
                           const VideoRecord& video, int n_frames) {
  std::vector<Embedding> clip_embeddings;
  for (const ClipRecord* clip : dataset.clips_of(video)) {
    clip_embeddings.push_back(embed_clip_eval(bundle, *clip, n_frames));
  }
  return aggregate_video(clip_embeddings);
}

}  // namespace ravl
