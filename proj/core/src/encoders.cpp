#include "ravl/encoders.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ravl/error.hpp"
#include "ravl/serialize.hpp"
#include "ravl/util.hpp"
#include "ravl/version.hpp"

namespace ravl {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointMagic = "RVLCKPT1";

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw Error("DegenerateEmbedding", std::string(what) + " is not finite");
}

}  // namespace

Embedding l2_normalize(const Eigen::VectorXd& v) {
  check_finite(v, "embedding input");
  double norm = v.norm();
  if (norm < 1e-12) throw Error("DegenerateEmbedding", "cannot normalize near-zero vector");
  return v / norm;
}

Eigen::VectorXd l2_normalize_vjp(const Eigen::VectorXd& z, const Eigen::VectorXd& grad_normalized) {
  double norm = z.norm();
  if (norm < 1e-12) throw Error("DegenerateEmbedding", "cannot differentiate near-zero normalize");
  Eigen::VectorXd e = z / norm;
  return (grad_normalized - e * e.dot(grad_normalized)) / norm;
}

void EncoderConfig::validate() const {
  if (dim < 1 || query_dim < 1 || image_grid < 1 || text_buckets < 1 || text_len < 1) {
    throw Error("InvalidConfig", "encoder dimensions must all be >= 1");
  }
}

std::string encoder_config_to_json(const EncoderConfig& cfg) {
  json j;
  j["dim"] = cfg.dim;
  j["query_dim"] = cfg.query_dim;
  j["image_grid"] = cfg.image_grid;
  j["text_buckets"] = cfg.text_buckets;
  j["text_len"] = cfg.text_len;
  j["seed"] = cfg.seed;
  return j.dump();
}

EncoderConfig encoder_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error("SchemaError", std::string("bad encoder config JSON: ") + e.what());
  }
  EncoderConfig cfg;
  try {
    cfg.dim = j.at("dim").get<int>();
    cfg.query_dim = j.at("query_dim").get<int>();
    cfg.image_grid = j.at("image_grid").get<int>();
    cfg.text_buckets = j.at("text_buckets").get<int>();
    cfg.text_len = j.at("text_len").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw Error("SchemaError", std::string("bad encoder config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> tokenize(const std::string& text, int max_tokens) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '_') {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
    if (static_cast<int>(tokens.size()) >= max_tokens) return tokens;
  }
  flush();
  if (static_cast<int>(tokens.size()) > max_tokens) tokens.resize(static_cast<size_t>(max_tokens));
  return tokens;
}

Eigen::VectorXd image_features(const Image& img, int grid) {
  if (grid < 1) throw Error("InvalidConfig", "image grid must be >= 1");
  if (img.width < 1 || img.height < 1) throw Error("InvalidImage", "empty image");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(grid * grid * 3 + 1);
  for (int by = 0; by < grid; ++by) {
    int y0 = by * img.height / grid;
    int y1 = (by + 1) * img.height / grid;
    if (y1 <= y0) y1 = y0 + 1;  // degenerate tiny images: 1-pixel blocks
    for (int bx = 0; bx < grid; ++bx) {
      int x0 = bx * img.width / grid;
      int x1 = (bx + 1) * img.width / grid;
      if (x1 <= x0) x1 = x0 + 1;
      double sums[3] = {0.0, 0.0, 0.0};
      for (int y = y0; y < y1 && y < img.height; ++y) {
        for (int x = x0; x < x1 && x < img.width; ++x) {
          for (int c = 0; c < 3; ++c) sums[c] += img.at(y, x, c);
        }
      }
      int count = std::max(1, (std::min(y1, img.height) - y0) * (std::min(x1, img.width) - x0));
      for (int c = 0; c < 3; ++c) phi[(by * grid + bx) * 3 + c] = sums[c] / count;
    }
  }
  phi[grid * grid * 3] = 1.0;
  return phi;
}

Eigen::VectorXd text_features(const std::string& text, int buckets, int max_tokens) {
  if (text.empty()) throw Error("EmptyText", "cannot encode empty text");
  if (buckets < 1) throw Error("InvalidConfig", "text buckets must be >= 1");
  std::vector<std::string> tokens = tokenize(text, max_tokens);
  if (tokens.empty()) throw Error("EmptyText", "text contains no tokens");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(buckets + 1);
  for (const std::string& tok : tokens) {
    phi[static_cast<Eigen::Index>(fnv1a64(tok) % static_cast<uint64_t>(buckets))] += 1.0;
  }
  phi[buckets] = 1.0;
  return phi;
}

LinearEncoder::LinearEncoder(int dim, int features, uint64_t seed) {
  if (dim < 1 || features < 1) throw Error("InvalidConfig", "encoder shape must be positive");
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(features));
  w_.resize(dim, features);
  for (Eigen::Index r = 0; r < w_.rows(); ++r) {
    for (Eigen::Index c = 0; c < w_.cols(); ++c) w_(r, c) = gaussian(rng) * scale;
  }
}

Embedding LinearEncoder::encode_features(const Eigen::VectorXd& features) const {
  if (features.size() != w_.cols()) {
    throw Error("ShapeMismatch", "feature size " + std::to_string(features.size()) +
                                     " != expected " + std::to_string(w_.cols()));
  }
  return l2_normalize(w_ * features);
}

void LinearEncoder::accumulate_weight_grad(const Eigen::VectorXd& features,
                                           const Eigen::VectorXd& grad_embedding,
                                           Eigen::MatrixXd& grad_w) const {
  if (grad_w.rows() != w_.rows() || grad_w.cols() != w_.cols()) {
    throw Error("ShapeMismatch", "gradient accumulator shape mismatch");
  }
  Eigen::VectorXd z = w_ * features;
  Eigen::VectorXd gz = l2_normalize_vjp(z, grad_embedding);
  grad_w.noalias() += gz * features.transpose();
}

VisualEncoder::VisualEncoder(const EncoderConfig& cfg)
    : grid_(cfg.image_grid),
      proj_(cfg.dim, cfg.visual_features(), splitmix64(cfg.seed ^ fnv1a64("visual-encoder"))) {}

Eigen::VectorXd VisualEncoder::clip_features(const std::vector<Image>& frames) const {
  if (frames.empty()) throw Error("EmptyList", "cannot encode a clip with no frames");
  for (const Image& frame : frames) {
    if (frame.width != frames.front().width || frame.height != frames.front().height) {
      throw Error("ShapeMismatch", "clip frames differ in spatial size");
    }
  }
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(grid_ * grid_ * 3 + 1);
  for (const Image& frame : frames) phi += image_features(frame, grid_);
  return phi / static_cast<double>(frames.size());
}

Embedding VisualEncoder::encode_clip(const std::vector<Image>& frames) const {
  return proj_.encode_features(clip_features(frames));
}

Embedding VisualEncoder::encode_features(const Eigen::VectorXd& features) const {
  return proj_.encode_features(features);
}

void VisualEncoder::accumulate_weight_grad(const Eigen::VectorXd& features,
                                           const Eigen::VectorXd& grad_embedding,
                                           Eigen::MatrixXd& grad_w) const {
  proj_.accumulate_weight_grad(features, grad_embedding, grad_w);
}

TextEncoder::TextEncoder(const EncoderConfig& cfg)
    : buckets_(cfg.text_buckets),
      max_tokens_(cfg.text_len),
      proj_(cfg.dim, cfg.text_features(), splitmix64(cfg.seed ^ fnv1a64("text-encoder"))) {}

Eigen::VectorXd TextEncoder::features(const std::string& text) const {
  return text_features(text, buckets_, max_tokens_);
}

Embedding TextEncoder::encode(const std::string& text) const {
  return proj_.encode_features(features(text));
}

Embedding TextEncoder::encode_features(const Eigen::VectorXd& features) const {
  return proj_.encode_features(features);
}

void TextEncoder::accumulate_weight_grad(const Eigen::VectorXd& features,
                                         const Eigen::VectorXd& grad_embedding,
                                         Eigen::MatrixXd& grad_w) const {
  proj_.accumulate_weight_grad(features, grad_embedding, grad_w);
}

QueryEncoder::QueryEncoder(const EncoderConfig& cfg)
    : buckets_(cfg.text_buckets),
      max_tokens_(cfg.text_len),
      proj_(cfg.query_dim, cfg.text_features(), splitmix64(cfg.seed ^ fnv1a64("query-encoder"))) {}

Embedding QueryEncoder::encode(const std::string& title) const {
  return proj_.encode_features(text_features(title, buckets_, max_tokens_));
}

EncoderBundle EncoderBundle::make(const EncoderConfig& cfg) {
  cfg.validate();
  return EncoderBundle{cfg, VisualEncoder(cfg), TextEncoder(cfg), QueryEncoder(cfg)};
}

Embedding aggregate_video(const std::vector<Embedding>& clip_embeddings) {
  if (clip_embeddings.empty()) throw Error("EmptyList", "cannot aggregate zero clip embeddings");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(clip_embeddings.front().size());
  for (const Embedding& e : clip_embeddings) {
    if (e.size() != mean.size()) throw Error("ShapeMismatch", "clip embedding dim mismatch");
    mean += e;
  }
  mean /= static_cast<double>(clip_embeddings.size());
  return l2_normalize(mean);
}

std::vector<Eigen::VectorXd> aggregate_video_vjp(const std::vector<Embedding>& clip_embeddings,
                                                 const Eigen::VectorXd& grad_video) {
  if (clip_embeddings.empty()) throw Error("EmptyList", "cannot aggregate zero clip embeddings");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(clip_embeddings.front().size());
  for (const Embedding& e : clip_embeddings) mean += e;
  const double n = static_cast<double>(clip_embeddings.size());
  mean /= n;
  Eigen::VectorXd grad_mean = l2_normalize_vjp(mean, grad_video);
  std::vector<Eigen::VectorXd> grads(clip_embeddings.size(), grad_mean / n);
  return grads;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, 8);
  write_u32(out, ckpt.format_version);
  write_string(out, ckpt.tool_version);
  write_u64(out, ckpt.config_hash);
  write_string(out, ckpt.config_json);
  write_i64(out, ckpt.epoch_completed);
  write_u64(out, ckpt.arrays.size());
  for (const auto& [name, m] : ckpt.arrays) {
    write_string(out, name);
    write_matrix(out, m);
  }
  write_u64(out, ckpt.scalars.size());
  for (const auto& [name, v] : ckpt.scalars) {
    write_string(out, name);
    write_f64(out, v);
  }
  atomic_write_file(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("MissingFile", "checkpoint not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open checkpoint: " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 8) != kCheckpointMagic) {
    throw Error("VersionMismatch", "not a checkpoint file: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.format_version = read_u32(in);
  if (ckpt.format_version != 1) {
    throw Error("VersionMismatch",
                "unsupported checkpoint version " + std::to_string(ckpt.format_version));
  }
  ckpt.tool_version = read_string(in);
  ckpt.config_hash = read_u64(in);
  ckpt.config_json = read_string(in);
  ckpt.epoch_completed = read_i64(in);
  uint64_t n_arrays = read_u64(in);
  for (uint64_t i = 0; i < n_arrays; ++i) {
    std::string name = read_string(in);
    ckpt.arrays[name] = read_matrix(in);
  }
  uint64_t n_scalars = read_u64(in);
  for (uint64_t i = 0; i < n_scalars; ++i) {
    std::string name = read_string(in);
    ckpt.scalars[name] = read_f64(in);
  }
  return ckpt;
}

void store_encoder_params(const EncoderBundle& bundle, Checkpoint& ckpt) {
  ckpt.arrays["w_visual"] = bundle.visual.weights();
  ckpt.arrays["w_text"] = bundle.text.weights();
}

void load_encoder_params(const Checkpoint& ckpt, EncoderBundle& bundle) {
  auto need = [&ckpt](const char* name) -> const Eigen::MatrixXd& {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) {
      throw Error("SchemaError", std::string("checkpoint missing array: ") + name);
    }
    return it->second;
  };
  const Eigen::MatrixXd& wv = need("w_visual");
  const Eigen::MatrixXd& wt = need("w_text");
  if (wv.rows() != bundle.visual.weights().rows() || wv.cols() != bundle.visual.weights().cols() ||
      wt.rows() != bundle.text.weights().rows() || wt.cols() != bundle.text.weights().cols()) {
    throw Error("DimensionMismatch", "checkpoint parameter shapes do not match configuration");
  }
  bundle.visual.weights() = wv;
  bundle.text.weights() = wt;
}

}  // namespace ravl
