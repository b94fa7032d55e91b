// Command-line entry point wiring the library together: dataset synthesis,
// pretraining, knowledge-base build/query, zero-shot evaluation, and linear
// probing. Usage problems exit 2; runtime failures exit 1 with a single-line
// JSON error on stderr; outputs are written atomically.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>

#include "ravl/dataset.hpp"
#include "ravl/encoders.hpp"
#include "ravl/error.hpp"
#include "ravl/eval.hpp"
#include "ravl/memory_bank.hpp"
#include "ravl/serialize.hpp"
#include "ravl/trainer.hpp"
#include "ravl/util.hpp"
#include "ravl/version.hpp"

namespace {

using nlohmann::json;

// Loads the train config embedded in a checkpoint and rebuilds its encoder
// bundle with the trained parameters.
struct LoadedModel {
  ravl::TrainConfig config;
  ravl::EncoderBundle bundle;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  ravl::Checkpoint ckpt = ravl::load_checkpoint(checkpoint_path);
  ravl::TrainConfig cfg = ravl::train_config_from_json(ckpt.config_json);
  ravl::EncoderBundle bundle = ravl::EncoderBundle::make(cfg.encoder);
  ravl::load_encoder_params(ckpt, bundle);
  return {std::move(cfg), std::move(bundle)};
}

// Frame references of every clip, in (clip_id, frame order) iteration order —
// the frame universe for frame-wise evaluation.
std::vector<std::string> all_frame_refs(const ravl::Dataset& dataset) {
  std::vector<std::string> refs;
  for (const auto& [id, clip] : dataset.clips) {
    refs.insert(refs.end(), clip.frame_refs.begin(), clip.frame_refs.end());
  }
  return refs;
}

std::vector<std::string> frame_video_ids(const ravl::Dataset& dataset) {
  std::vector<std::string> ids;
  for (const auto& [id, clip] : dataset.clips) {
    ids.insert(ids.end(), clip.frame_refs.size(), clip.video_id);
  }
  return ids;
}

// Labels file: {"classes": [label, ...], "frames": {frame_ref: label | [label, ...]}}.
struct LabelFile {
  std::vector<std::string> classes;
  std::map<std::string, std::vector<std::string>> frame_labels;
};

LabelFile load_labels(const std::string& path) {
  json root;
  try {
    root = json::parse(ravl::read_file(path));
  } catch (const json::exception& e) {
    throw ravl::Error("SchemaError", std::string("bad labels JSON: ") + e.what());
  }
  LabelFile out;
  if (!root.is_object() || !root.contains("classes") || !root.contains("frames")) {
    throw ravl::Error("SchemaError", "labels file needs 'classes' and 'frames'");
  }
  for (const auto& c : root["classes"]) {
    if (!c.is_string()) throw ravl::Error("SchemaError", "class labels must be strings");
    out.classes.push_back(c.get<std::string>());
  }
  if (out.classes.empty()) throw ravl::Error("SchemaError", "labels file lists no classes");
  for (const auto& [ref, value] : root["frames"].items()) {
    std::vector<std::string> labels;
    if (value.is_string()) {
      labels.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      for (const auto& l : value) {
        if (!l.is_string()) throw ravl::Error("SchemaError", "frame labels must be strings");
        labels.push_back(l.get<std::string>());
      }
    } else {
      throw ravl::Error("SchemaError", "frame label must be a string or array: " + ref);
    }
    out.frame_labels.emplace(ref, std::move(labels));
  }
  return out;
}

// Fallback for synthetic manifests: the concept id embedded in each frame
// reference is the label.
LabelFile derive_synthetic_labels(const std::vector<std::string>& refs) {
  LabelFile out;
  std::set<int> concepts;
  for (const std::string& ref : refs) {
    if (!ravl::is_synth_ref(ref)) {
      throw ravl::Error("LabelsRequired",
                        "manifest has non-synthetic frames; pass --labels explicitly");
    }
    int c = ravl::parse_synth_ref(ref).concept_id;
    concepts.insert(c);
    out.frame_labels[ref] = {"concept_" + std::to_string(c)};
  }
  for (int c : concepts) out.classes.push_back("concept_" + std::to_string(c));
  return out;
}

int label_index(const std::vector<std::string>& classes, const std::string& label,
                const std::string& ref) {
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == label) return static_cast<int>(i);
  }
  throw ravl::Error("SchemaError", "frame " + ref + " labeled with unknown class: " + label);
}

int run_synth(const std::string& out_path, const ravl::SynthSpec& spec, uint64_t seed) {
  ravl::Dataset ds = ravl::synthesize_dataset(spec, seed);
  ravl::save_manifest(ds, out_path);
  json meta;
  meta["command"] = "synth";
  meta["n_narrative"] = spec.n_narrative;
  meta["n_silent"] = spec.n_silent;
  meta["clips_per_video"] = spec.clips_per_video;
  meta["n_concepts"] = spec.n_concepts;
  meta["image_size"] = spec.image_size;
  meta["frames_per_clip"] = spec.frames_per_clip;
  meta["seed"] = seed;
  meta["tool_version"] = ravl::kVersionString;
  ravl::atomic_write_file(out_path + ".meta.json", meta.dump(2) + "\n");
  std::cout << "wrote " << out_path << " (" << ds.videos.size() << " videos, " << ds.clips.size()
            << " clips)\n";
  return 0;
}

int run_pretrain(const std::string& manifest_path, const std::string& out_dir,
                 ravl::TrainConfig cfg, bool resume) {
  ravl::Dataset ds = ravl::load_manifest(manifest_path);
  ravl::Trainer trainer(std::move(ds), std::move(cfg));
  ravl::Trainer::RunResult result = trainer.run_pretraining(out_dir, resume);
  std::cout << "checkpoint: " << result.checkpoint_path.string() << "\n"
            << "epochs: " << result.metrics.size() << "\n";
  if (!result.metrics.empty()) {
    std::cout << "final mean loss: " << result.metrics.back().mean_loss << "\n";
  }
  return 0;
}

int run_kb_build(const std::string& manifest_path, const std::optional<std::string>& ckpt_path,
                 const std::string& out_path, uint64_t seed, int n_frames) {
  ravl::Dataset ds = ravl::load_manifest(manifest_path);
  ravl::EncoderBundle bundle = [&] {
    if (ckpt_path.has_value()) return load_model(*ckpt_path).bundle;
    ravl::EncoderConfig ecfg;
    ecfg.seed = seed;
    return ravl::EncoderBundle::make(ecfg);
  }();
  std::vector<const ravl::VideoRecord*> silent = ds.videos_of_kind(ravl::VideoKind::silent);
  ravl::MemoryBank bank = ravl::MemoryBank::build(ds, silent, bundle, n_frames);
  bank.save(out_path);
  std::cout << "wrote " << out_path << " (" << bank.size() << " entries, key dim "
            << bank.key_dim() << ")\n";
  return 0;
}

int run_kb_retrieve(const std::string& bank_path, const std::string& title, int k) {
  ravl::MemoryBank bank = ravl::MemoryBank::load(bank_path);
  // The bank file carries the encoder configuration, so the frozen query
  // encoder is reconstructed exactly as it was at build time.
  ravl::EncoderConfig ecfg = ravl::encoder_config_from_json(bank.encoder_config_json());
  ravl::QueryEncoder query_encoder(ecfg);
  ravl::RetrievalResult result = bank.retrieve(query_encoder.encode(title), k);
  for (const ravl::RetrievalHit& hit : result.entries) {
    std::cout << hit.entry_id << "\t" << hit.score << "\n";
  }
  return 0;
}

int run_eval_zeroshot(const std::string& ckpt_path, const std::string& manifest_path,
                      const std::optional<std::string>& labels_path,
                      const std::optional<std::string>& templates_path, const std::string& style_s,
                      const std::string& mode_s, double threshold, double eval_temperature,
                      const std::string& out_path) {
  LoadedModel model = load_model(ckpt_path);
  ravl::Dataset ds = ravl::load_manifest(manifest_path);
  std::vector<std::string> refs = all_frame_refs(ds);
  LabelFile labels = labels_path.has_value() ? load_labels(*labels_path)
                                             : derive_synthetic_labels(refs);

  ravl::PromptStyle style = ravl::prompt_style_from_string(style_s);
  ravl::ClassifyMode mode = ravl::classify_mode_from_string(mode_s);
  ravl::PromptResource resource = templates_path.has_value()
                                      ? ravl::load_prompt_resource(*templates_path)
                                      : ravl::synthetic_prompt_resource(labels.classes);
  ravl::PromptSet prompts = ravl::build_prompts(labels.classes, style, resource);

  const int dim = model.config.encoder.dim;
  Eigen::MatrixXd frame_embs(static_cast<Eigen::Index>(refs.size()), dim);
  for (size_t f = 0; f < refs.size(); ++f) {
    std::vector<ravl::Image> one{ravl::load_frame(refs[f])};
    frame_embs.row(static_cast<Eigen::Index>(f)) =
        model.bundle.visual.encode_clip(one).transpose();
  }
  std::vector<Eigen::MatrixXd> class_prompt_embs;
  for (const std::string& label : labels.classes) {
    const auto& texts = prompts.prompts.at(label);
    Eigen::MatrixXd embs(static_cast<Eigen::Index>(texts.size()), dim);
    for (size_t p = 0; p < texts.size(); ++p) {
      embs.row(static_cast<Eigen::Index>(p)) = model.bundle.text.encode(texts[p]).transpose();
    }
    class_prompt_embs.push_back(std::move(embs));
  }

  ravl::ZeroShotResult zs =
      ravl::zero_shot_classify(frame_embs, class_prompt_embs, mode, threshold, eval_temperature);

  auto labels_of = [&](const std::string& ref) -> const std::vector<std::string>& {
    auto it = labels.frame_labels.find(ref);
    if (it == labels.frame_labels.end()) {
      throw ravl::Error("SchemaError", "no label entry for frame: " + ref);
    }
    return it->second;
  };

  json out;
  out["config"] = {{"command", "eval-zeroshot"},
                   {"checkpoint", ckpt_path},
                   {"manifest", manifest_path},
                   {"prompt_style", style_s},
                   {"mode", mode_s},
                   {"threshold", threshold},
                   {"eval_temperature", eval_temperature},
                   {"classes", labels.classes},
                   {"tool_version", ravl::kVersionString}};
  out["n_frames"] = refs.size();

  if (mode == ravl::ClassifyMode::single) {
    std::vector<int> truth(refs.size());
    for (size_t f = 0; f < refs.size(); ++f) {
      const auto& ls = labels_of(refs[f]);
      if (ls.empty()) throw ravl::Error("SchemaError", "empty label for frame: " + refs[f]);
      truth[f] = label_index(labels.classes, ls.front(), refs[f]);
    }
    ravl::SingleLabelMetrics m = ravl::compute_single_label_metrics(
        zs.single_predictions, truth, static_cast<int>(labels.classes.size()));
    out["metrics"] = {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}};
    json per_class;
    for (size_t c = 0; c < labels.classes.size(); ++c) {
      per_class[labels.classes[c]] = {{"f1", m.per_class_f1[c]}};
    }
    out["per_class"] = per_class;
  } else {
    std::vector<std::vector<bool>> truth(refs.size(),
                                         std::vector<bool>(labels.classes.size(), false));
    for (size_t f = 0; f < refs.size(); ++f) {
      for (const std::string& l : labels_of(refs[f])) {
        truth[f][static_cast<size_t>(label_index(labels.classes, l, refs[f]))] = true;
      }
    }
    ravl::MultiLabelMetrics m =
        ravl::compute_multi_label_metrics(zs.scores, zs.multi_predictions, truth);
    out["metrics"] = {{"fpr", m.fpr}, {"map", m.map}};
    json per_class;
    for (size_t c = 0; c < labels.classes.size(); ++c) {
      json entry;
      if (!std::isnan(m.per_class_fpr[c])) entry["fpr"] = m.per_class_fpr[c];
      if (!std::isnan(m.per_class_ap[c])) entry["ap"] = m.per_class_ap[c];
      per_class[labels.classes[c]] = entry;
    }
    out["per_class"] = per_class;
  }
  ravl::atomic_write_file(out_path, out.dump(2) + "\n");
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_probe(const std::string& ckpt_path, const std::string& manifest_path,
              const std::optional<std::string>& labels_path, double fraction, uint64_t seed,
              double lambda, int iterations, const std::string& out_path) {
  LoadedModel model = load_model(ckpt_path);
  ravl::Dataset ds = ravl::load_manifest(manifest_path);
  std::vector<std::string> refs = all_frame_refs(ds);
  LabelFile labels = labels_path.has_value() ? load_labels(*labels_path)
                                             : derive_synthetic_labels(refs);

  ravl::FrameTable table;
  table.features.resize(static_cast<Eigen::Index>(refs.size()), model.config.encoder.dim);
  table.video_ids = frame_video_ids(ds);
  table.labels.resize(refs.size());
  for (size_t f = 0; f < refs.size(); ++f) {
    std::vector<ravl::Image> one{ravl::load_frame(refs[f])};
    table.features.row(static_cast<Eigen::Index>(f)) =
        model.bundle.visual.encode_clip(one).transpose();
    auto it = labels.frame_labels.find(refs[f]);
    if (it == labels.frame_labels.end() || it->second.empty()) {
      throw ravl::Error("SchemaError", "no label entry for frame: " + refs[f]);
    }
    table.labels[f] = label_index(labels.classes, it->second.front(), refs[f]);
  }

  ravl::ProbeOptions opts;
  opts.fraction = fraction;
  opts.seed = seed;
  opts.lambda = lambda;
  opts.iterations = iterations;
  ravl::ProbeResult result =
      ravl::linear_probe(table, static_cast<int>(labels.classes.size()), opts);

  json out;
  out["config"] = {{"command", "probe"},        {"checkpoint", ckpt_path},
                   {"manifest", manifest_path}, {"fraction", fraction},
                   {"seed", seed},              {"lambda", lambda},
                   {"iterations", iterations},  {"classes", labels.classes},
                   {"tool_version", ravl::kVersionString}};
  out["metrics"] = {{"accuracy", result.metrics.accuracy}, {"macro_f1", result.metrics.macro_f1}};
  out["n_train_videos"] = result.n_train_videos;
  out["n_train_frames"] = result.n_train_frames;
  out["n_test_frames"] = result.n_test_frames;
  ravl::atomic_write_file(out_path, out.dump(2) + "\n");
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical retrieval-augmented video-language pretraining toolkit"};
  app.set_version_flag("--version", ravl::kVersionString);
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic dataset manifest");
  ravl::SynthSpec synth_spec;
  uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--n-narrative", synth_spec.n_narrative, "Narrated videos")->required();
  synth->add_option("--n-silent", synth_spec.n_silent, "Title-only videos")->required();
  synth->add_option("--clips", synth_spec.clips_per_video, "Clips per video")->required();
  synth->add_option("--concepts", synth_spec.n_concepts, "Latent concepts")->required();
  synth->add_option("--seed", synth_seed, "Generation seed")->required();
  synth->add_option("--out", synth_out, "Manifest output path")->required();
  synth->add_option("--size", synth_spec.image_size, "Frame size in pixels")
      ->capture_default_str();
  synth->add_option("--frames", synth_spec.frames_per_clip, "Frames per clip")
      ->capture_default_str();

  // --- pretrain ------------------------------------------------------------
  auto* pretrain = app.add_subcommand("pretrain", "Run the alternating pretraining schedule");
  std::string pre_manifest, pre_out;
  std::string pre_config;
  bool pre_resume = false;
  uint64_t pre_seed = 0;
  double pre_lr = 0.0;
  int pre_epochs = 0;
  pretrain->add_option("--manifest", pre_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  auto* pre_config_opt =
      pretrain->add_option("--config", pre_config, "YAML training config")->check(CLI::ExistingFile);
  pretrain->add_option("--out", pre_out, "Output directory")->required();
  pretrain->add_flag("--resume", pre_resume, "Continue from the latest checkpoint in --out");
  auto* pre_seed_opt = pretrain->add_option("--seed", pre_seed, "Override config seed");
  auto* pre_lr_opt = pretrain->add_option("--lr", pre_lr, "Override learning rate");
  auto* pre_epochs_opt = pretrain->add_option("--total-epochs", pre_epochs, "Override epoch count");
  bool pre_within_query = false;
  pretrain->add_flag("--silent-within-query", pre_within_query,
                     "Score silent-video retrievals only within their own query (ablation)");

  // --- kb-build ------------------------------------------------------------
  auto* kb_build = app.add_subcommand("kb-build", "Build the silent-video knowledge base");
  std::string kbb_manifest, kbb_out, kbb_ckpt;
  uint64_t kbb_seed = 0;
  int kbb_frames = 8;
  kb_build->add_option("--manifest", kbb_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  auto* kbb_ckpt_opt = kb_build->add_option("--checkpoint", kbb_ckpt, "Encoder checkpoint")
                           ->check(CLI::ExistingFile);
  kb_build->add_option("--out", kbb_out, "Bank output path")->required();
  kb_build->add_option("--seed", kbb_seed, "Encoder seed when no checkpoint is given")
      ->capture_default_str();
  kb_build->add_option("--n-frames", kbb_frames, "Frames sampled per clip")->capture_default_str();

  // --- kb-retrieve ---------------------------------------------------------
  auto* kb_retrieve = app.add_subcommand("kb-retrieve", "Query the knowledge base by title");
  std::string kbr_bank, kbr_title;
  int kbr_k = 1;
  kb_retrieve->add_option("--bank", kbr_bank, "Bank file")->required()->check(CLI::ExistingFile);
  kb_retrieve->add_option("--title", kbr_title, "Query title text")->required();
  kb_retrieve->add_option("--k", kbr_k, "Entries to return")->capture_default_str();

  // --- eval-zeroshot ---------------------------------------------------------
  auto* ez = app.add_subcommand("eval-zeroshot", "Zero-shot frame classification");
  std::string ez_ckpt, ez_manifest, ez_labels, ez_templates, ez_out;
  std::string ez_style = "caption", ez_mode = "single";
  double ez_threshold = 0.5, ez_tau = 0.1;
  ez->add_option("--checkpoint", ez_ckpt, "Encoder checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  ez->add_option("--manifest", ez_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  auto* ez_labels_opt = ez->add_option("--labels", ez_labels, "Labels JSON (default: synthetic)")
                            ->check(CLI::ExistingFile);
  auto* ez_templates_opt =
      ez->add_option("--templates", ez_templates, "Prompt templates JSON (default: synthetic)")
          ->check(CLI::ExistingFile);
  ez->add_option("--prompt-style", ez_style, "caption|keyword|mix")
      ->check(CLI::IsMember({"caption", "keyword", "mix"}))
      ->capture_default_str();
  ez->add_option("--mode", ez_mode, "single|multi")
      ->check(CLI::IsMember({"single", "multi"}))
      ->capture_default_str();
  ez->add_option("--threshold", ez_threshold, "Multi-label decision threshold")
      ->capture_default_str();
  ez->add_option("--eval-temperature", ez_tau, "Similarity temperature before sigmoid")
      ->capture_default_str();
  ez->add_option("--out", ez_out, "Result JSON path")->required();

  // --- probe -----------------------------------------------------------------
  auto* probe = app.add_subcommand("probe", "Linear probe on frozen visual features");
  std::string pr_ckpt, pr_manifest, pr_labels, pr_out;
  double pr_fraction = 1.0, pr_lambda = 1e-3;
  uint64_t pr_seed = 0;
  int pr_iterations = 300;
  probe->add_option("--checkpoint", pr_ckpt, "Encoder checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  probe->add_option("--manifest", pr_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  auto* pr_labels_opt = probe->add_option("--labels", pr_labels, "Labels JSON (default: synthetic)")
                            ->check(CLI::ExistingFile);
  probe->add_option("--fraction", pr_fraction, "Fraction of training videos per class")
      ->capture_default_str();
  probe->add_option("--seed", pr_seed, "Sampling seed")->capture_default_str();
  probe->add_option("--lambda", pr_lambda, "Hinge-loss regularization")->capture_default_str();
  probe->add_option("--iterations", pr_iterations, "Optimizer iterations")->capture_default_str();
  probe->add_option("--out", pr_out, "Result JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_out, synth_spec, synth_seed);
    if (*pretrain) {
      // Precedence: CLI flag > config file > built-in defaults.
      ravl::TrainConfig cfg = pre_config_opt->count() > 0
                                  ? ravl::train_config_from_yaml_file(pre_config)
                                  : ravl::TrainConfig{};
      if (pre_seed_opt->count() > 0) cfg.seed = pre_seed;
      if (pre_lr_opt->count() > 0) cfg.lr = pre_lr;
      if (pre_epochs_opt->count() > 0) cfg.total_epochs = pre_epochs;
      if (pre_within_query) cfg.loss.cross_query_negatives = false;
      cfg.sync_nested();
      cfg.validate();
      return run_pretrain(pre_manifest, pre_out, std::move(cfg), pre_resume);
    }
    if (*kb_build) {
      std::optional<std::string> ckpt;
      if (kbb_ckpt_opt->count() > 0) ckpt = kbb_ckpt;
      return run_kb_build(kbb_manifest, ckpt, kbb_out, kbb_seed, kbb_frames);
    }
    if (*kb_retrieve) return run_kb_retrieve(kbr_bank, kbr_title, kbr_k);
    if (*ez) {
      std::optional<std::string> labels, templates;
      if (ez_labels_opt->count() > 0) labels = ez_labels;
      if (ez_templates_opt->count() > 0) templates = ez_templates;
      return run_eval_zeroshot(ez_ckpt, ez_manifest, labels, templates, ez_style, ez_mode,
                               ez_threshold, ez_tau, ez_out);
    }
    if (*probe) {
      std::optional<std::string> labels;
      if (pr_labels_opt->count() > 0) labels = pr_labels;
      return run_probe(pr_ckpt, pr_manifest, labels, pr_fraction, pr_seed, pr_lambda,
                       pr_iterations, pr_out);
    }
  } catch (const ravl::Error& e) {
    json err;
    err["error"] = e.code();
    err["detail"] = e.detail();
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err;
    err["error"] = "Internal";
    err["detail"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
