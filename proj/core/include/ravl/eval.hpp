#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ravl {

enum class PromptStyle { caption, keyword, mix };

std::string to_string(PromptStyle style);
PromptStyle prompt_style_from_string(const std::string& s);

// Per-class prompt source material. caption is a full sentence; the four
// keyword fields are rendered as
// "Phase: ...; Instrument: ...; Medication: ...; Goal: ...".
struct PromptTemplate {
  std::string caption;
  std::string phase;
  std::string instrument;
  std::string medication;
  std::string goal;
};

// Label -> template, loaded from a JSON document
// {"<label>": {"caption": s, "phase": s, "instrument": s, "medication": s, "goal": s}, ...}
// (missing fields default to empty, which makes styles needing them
// unavailable for that label).
using PromptResource = std::map<std::string, PromptTemplate>;

PromptResource parse_prompt_resource(const std::string& json_text);
PromptResource load_prompt_resource(const std::filesystem::path& path);
// Auto-generated templates for synthetic concept labels ("concept_<i>").
PromptResource synthetic_prompt_resource(const std::vector<std::string>& labels);

struct PromptSet {
  PromptStyle style = PromptStyle::caption;
  std::map<std::string, std::vector<std::string>> prompts;  // label -> >= 1 strings
};

// Renders one prompt per label in the requested style. Throws
// MissingTemplate if a label is absent from the resource or lacks the fields
// the style needs. mix = caption, a space, then the keyword rendering.
PromptSet build_prompts(const std::vector<std::string>& labels, PromptStyle style,
                        const PromptResource& templates);

enum class ClassifyMode { single, multi };

ClassifyMode classify_mode_from_string(const std::string& s);

struct ZeroShotResult {
  // Mean cosine similarity of each frame embedding to each class's prompt
  // embeddings (frames x classes).
  Eigen::MatrixXd scores;
  // single mode: argmax class per frame (ties -> lowest class index).
  std::vector<int> single_predictions;
  // multi mode: sigmoid(score / eval_temperature) > threshold per class,
  // independent decisions; a score exactly at the threshold is negative.
  std::vector<std::vector<bool>> multi_predictions;
};

ZeroShotResult zero_shot_classify(const Eigen::MatrixXd& frame_embeddings,
                                  const std::vector<Eigen::MatrixXd>& class_prompt_embeddings,
                                  ClassifyMode mode, double threshold = 0.5,
                                  double eval_temperature = 0.1);

struct SingleLabelMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};

// accuracy = frame-level top-1 rate; macro_f1 = unweighted mean of per-class
// F1 over all n_classes classes (0/0 counts as 0).
SingleLabelMetrics compute_single_label_metrics(const std::vector<int>& predictions,
                                                const std::vector<int>& truth, int n_classes);

struct MultiLabelMetrics {
  double fpr = 0.0;  // macro mean of per-class FP/(FP+TN); classes with no negatives are skipped
  double map = 0.0;  // macro mean of per-class average precision; classes with no positives skipped
  std::vector<double> per_class_fpr;  // NaN marks a skipped class
  std::vector<double> per_class_ap;
};

// Average precision ranks frames by score descending (ties by frame index)
// and averages precision at each positive.
MultiLabelMetrics compute_multi_label_metrics(const Eigen::MatrixXd& scores,
                                              const std::vector<std::vector<bool>>& predictions,
                                              const std::vector<std::vector<bool>>& truth);

// Frozen-feature linear probing. Frames are grouped by video: the test split
// is chosen per video by a fixed hash (~30%), the training fraction samples
// whole videos class-balanced (ceil(fraction * count) per class), and no
// video contributes frames to both sides.
struct FrameTable {
  Eigen::MatrixXd features;           // frames x D
  std::vector<int> labels;            // one class per frame
  std::vector<std::string> video_ids; // owning video per frame
};

struct ProbeOptions {
  double fraction = 1.0;  // share of training videos per class
  uint64_t seed = 0;      // sampling seed
  double lambda = 1e-3;   // hinge-loss L2 regularization
  int iterations = 300;
};

struct ProbeResult {
  SingleLabelMetrics metrics;
  int n_train_videos = 0;
  int n_train_frames = 0;
  int n_test_frames = 0;
};

ProbeResult linear_probe(const FrameTable& table, int n_classes, const ProbeOptions& opts);

// One-vs-rest max-margin linear classifier trained by deterministic
// full-batch subgradient descent (Pegasos-style 1/(lambda*t) steps). Returns
// n_classes x (D+1) weights; the last column is the bias.
Eigen::MatrixXd train_linear_classifier(const Eigen::MatrixXd& features,
                                        const std::vector<int>& labels, int n_classes,
                                        double lambda, int iterations);

}  // namespace ravl
