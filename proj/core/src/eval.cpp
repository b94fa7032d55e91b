#include "ravl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "ravl/error.hpp"
#include "ravl/serialize.hpp"
#include "ravl/util.hpp"

namespace ravl {

using nlohmann::json;

std::string to_string(PromptStyle style) {
  switch (style) {
    case PromptStyle::caption: return "caption";
    case PromptStyle::keyword: return "keyword";
    default: return "mix";
  }
}

PromptStyle prompt_style_from_string(const std::string& s) {
  if (s == "caption") return PromptStyle::caption;
  if (s == "keyword") return PromptStyle::keyword;
  if (s == "mix") return PromptStyle::mix;
  throw Error("InvalidConfig", "unknown prompt style: " + s);
}

ClassifyMode classify_mode_from_string(const std::string& s) {
  if (s == "single") return ClassifyMode::single;
  if (s == "multi") return ClassifyMode::multi;
  throw Error("InvalidConfig", "unknown classification mode: " + s);
}

PromptResource parse_prompt_resource(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error("SchemaError", std::string("bad prompt resource JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error("SchemaError", "prompt resource must be a JSON object");
  PromptResource resource;
  for (const auto& [label, fields] : root.items()) {
    if (!fields.is_object()) {
      throw Error("SchemaError", "prompt template must be an object: " + label);
    }
    PromptTemplate t;
    auto grab = [&fields, &label](const char* name) -> std::string {
      if (!fields.contains(name)) return "";
      if (!fields[name].is_string()) {
        throw Error("SchemaError", "prompt field '" + std::string(name) + "' of " + label +
                                       " must be a string");
      }
      return fields[name].get<std::string>();
    };
    t.caption = grab("caption");
    t.phase = grab("phase");
    t.instrument = grab("instrument");
    t.medication = grab("medication");
    t.goal = grab("goal");
    resource.emplace(label, std::move(t));
  }
  return resource;
}

PromptResource load_prompt_resource(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("MissingFile", "prompt resource not found: " + path.string());
  }
  return parse_prompt_resource(read_file(path));
}

PromptResource synthetic_prompt_resource(const std::vector<std::string>& labels) {
  PromptResource resource;
  for (const std::string& label : labels) {
    PromptTemplate t;
    t.caption = "A procedural training video demonstrating " + label + " techniques.";
    t.phase = label;
    t.instrument = "synthetic probe";
    t.medication = "none";
    t.goal = "Demonstrate " + label + ".";
    resource.emplace(label, std::move(t));
  }
  return resource;
}

namespace {

std::string render_keyword(const PromptTemplate& t) {
  return "Phase: " + t.phase + "; Instrument: " + t.instrument + "; Medication: " + t.medication +
         "; Goal: " + t.goal;
}

}  // namespace

PromptSet build_prompts(const std::vector<std::string>& labels, PromptStyle style,
                        const PromptResource& templates) {
  if (labels.empty()) throw Error("EmptyInput", "no labels to build prompts for");
  PromptSet set;
  set.style = style;
  for (const std::string& label : labels) {
    auto it = templates.find(label);
    if (it == templates.end()) throw Error("MissingTemplate", "no prompt template for: " + label);
    const PromptTemplate& t = it->second;
    const bool has_keywords =
        !t.phase.empty() && !t.instrument.empty() && !t.medication.empty() && !t.goal.empty();
    std::vector<std::string> prompts;
    switch (style) {
      case PromptStyle::caption:
        if (t.caption.empty()) throw Error("MissingTemplate", "no caption template for: " + label);
        prompts.push_back(t.caption);
        break;
      case PromptStyle::keyword:
        if (!has_keywords) throw Error("MissingTemplate", "no keyword fields for: " + label);
        prompts.push_back(render_keyword(t));
        break;
      case PromptStyle::mix:
        if (t.caption.empty() || !has_keywords) {
          throw Error("MissingTemplate", "mix style needs caption and keyword fields: " + label);
        }
        prompts.push_back(t.caption + " " + render_keyword(t));
        break;
    }
    set.prompts.emplace(label, std::move(prompts));
  }
  return set;
}

ZeroShotResult zero_shot_classify(const Eigen::MatrixXd& frame_embeddings,
                                  const std::vector<Eigen::MatrixXd>& class_prompt_embeddings,
                                  ClassifyMode mode, double threshold, double eval_temperature) {
  if (frame_embeddings.rows() < 1) throw Error("EmptyInput", "no frame embeddings");
  if (class_prompt_embeddings.empty()) throw Error("NoPrompts", "no classes to score against");
  if (!(eval_temperature > 0.0)) throw Error("InvalidConfig", "eval temperature must be > 0");
  const Eigen::Index n_frames = frame_embeddings.rows();
  const Eigen::Index n_classes = static_cast<Eigen::Index>(class_prompt_embeddings.size());

  ZeroShotResult result;
  result.scores.resize(n_frames, n_classes);
  for (Eigen::Index c = 0; c < n_classes; ++c) {
    const Eigen::MatrixXd& prompts = class_prompt_embeddings[static_cast<size_t>(c)];
    if (prompts.rows() < 1) {
      throw Error("NoPrompts", "class " + std::to_string(c) + " has no prompt embeddings");
    }
    if (prompts.cols() != frame_embeddings.cols()) {
      throw Error("DimensionMismatch", "prompt and frame embedding dimensions differ");
    }
    // Class score = mean similarity over the class's prompts.
    Eigen::VectorXd mean_prompt = prompts.colwise().mean().transpose();
    result.scores.col(c) = frame_embeddings * mean_prompt;
  }

  if (mode == ClassifyMode::single) {
    result.single_predictions.resize(static_cast<size_t>(n_frames));
    for (Eigen::Index f = 0; f < n_frames; ++f) {
      int best = 0;
      for (Eigen::Index c = 1; c < n_classes; ++c) {
        if (result.scores(f, c) > result.scores(f, best)) best = static_cast<int>(c);
      }
      result.single_predictions[static_cast<size_t>(f)] = best;
    }
  } else {
    result.multi_predictions.assign(static_cast<size_t>(n_frames),
                                    std::vector<bool>(static_cast<size_t>(n_classes), false));
    for (Eigen::Index f = 0; f < n_frames; ++f) {
      for (Eigen::Index c = 0; c < n_classes; ++c) {
        double p = 1.0 / (1.0 + std::exp(-result.scores(f, c) / eval_temperature));
        // Exactly-at-threshold resolves negative (sigmoid(0) = 0.5 with the
        // default threshold must not predict positive).
        result.multi_predictions[static_cast<size_t>(f)][static_cast<size_t>(c)] = p > threshold;
      }
    }
  }
  return result;
}

SingleLabelMetrics compute_single_label_metrics(const std::vector<int>& predictions,
                                                const std::vector<int>& truth, int n_classes) {
  if (predictions.size() != truth.size()) {
    throw Error("LengthMismatch", "predictions and ground truth lengths differ");
  }
  if (predictions.empty()) throw Error("EmptyInput", "no predictions to score");
  if (n_classes < 1) throw Error("InvalidConfig", "n_classes must be >= 1");

  size_t correct = 0;
  std::vector<long> tp(static_cast<size_t>(n_classes), 0), fp(tp), fn(tp);
  for (size_t i = 0; i < predictions.size(); ++i) {
    int p = predictions[i];
    int t = truth[i];
    if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
      throw Error("InvalidConfig", "label outside [0, n_classes)");
    }
    if (p == t) {
      ++correct;
      ++tp[static_cast<size_t>(p)];
    } else {
      ++fp[static_cast<size_t>(p)];
      ++fn[static_cast<size_t>(t)];
    }
  }
  SingleLabelMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  m.per_class_f1.resize(static_cast<size_t>(n_classes));
  double f1_sum = 0.0;
  for (size_t c = 0; c < static_cast<size_t>(n_classes); ++c) {
    double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
    m.per_class_f1[c] = f1;
    f1_sum += f1;
  }
  m.macro_f1 = f1_sum / static_cast<double>(n_classes);
  return m;
}

MultiLabelMetrics compute_multi_label_metrics(const Eigen::MatrixXd& scores,
                                              const std::vector<std::vector<bool>>& predictions,
                                              const std::vector<std::vector<bool>>& truth) {
  const size_t n_frames = truth.size();
  if (n_frames == 0) throw Error("EmptyInput", "no frames to score");
  if (predictions.size() != n_frames ||
      static_cast<size_t>(scores.rows()) != n_frames) {
    throw Error("LengthMismatch", "scores, predictions and truth must align");
  }
  const size_t n_classes = truth.front().size();
  if (static_cast<size_t>(scores.cols()) != n_classes) {
    throw Error("LengthMismatch", "score columns must match class count");
  }
  for (size_t f = 0; f < n_frames; ++f) {
    if (predictions[f].size() != n_classes || truth[f].size() != n_classes) {
      throw Error("LengthMismatch", "ragged prediction/truth rows");
    }
  }

  MultiLabelMetrics m;
  m.per_class_fpr.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  m.per_class_ap.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  double fpr_sum = 0.0;
  size_t fpr_classes = 0;
  double ap_sum = 0.0;
  size_t ap_classes = 0;

  for (size_t c = 0; c < n_classes; ++c) {
    long false_pos = 0, true_neg = 0, positives = 0;
    for (size_t f = 0; f < n_frames; ++f) {
      if (truth[f][c]) {
        ++positives;
      } else if (predictions[f][c]) {
        ++false_pos;
      } else {
        ++true_neg;
      }
    }
    if (false_pos + true_neg > 0) {
      double fpr = static_cast<double>(false_pos) / static_cast<double>(false_pos + true_neg);
      m.per_class_fpr[c] = fpr;
      fpr_sum += fpr;
      ++fpr_classes;
    }
    if (positives > 0) {
      // Rank by score descending, ties by frame index ascending.
      std::vector<size_t> order(n_frames);
      std::iota(order.begin(), order.end(), size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) >
               scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
      });
      long seen_pos = 0;
      double precision_sum = 0.0;
      for (size_t rank = 0; rank < order.size(); ++rank) {
        if (truth[order[rank]][c]) {
          ++seen_pos;
          precision_sum += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
        }
      }
      double ap = precision_sum / static_cast<double>(positives);
      m.per_class_ap[c] = ap;
      ap_sum += ap;
      ++ap_classes;
    }
  }
  m.fpr = fpr_classes > 0 ? fpr_sum / static_cast<double>(fpr_classes) : 0.0;
  m.map = ap_classes > 0 ? ap_sum / static_cast<double>(ap_classes) : 0.0;
  return m;
}

Eigen::MatrixXd train_linear_classifier(const Eigen::MatrixXd& features,
                                        const std::vector<int>& labels, int n_classes,
                                        double lambda, int iterations) {
  if (features.rows() < 1) throw Error("EmptyInput", "no training features");
  if (static_cast<size_t>(features.rows()) != labels.size()) {
    throw Error("LengthMismatch", "features and labels must align");
  }
  if (!(lambda > 0.0) || iterations < 1) {
    throw Error("InvalidConfig", "classifier needs lambda > 0 and iterations >= 1");
  }
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = features;
  x.col(d).setOnes();

  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n_classes, d + 1);
  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i) = labels[static_cast<size_t>(i)] == c ? 1.0 : -1.0;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
    for (int t = 1; t <= iterations; ++t) {
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      Eigen::VectorXd margins = (x * w).cwiseProduct(y);
      Eigen::VectorXd hinge_grad = Eigen::VectorXd::Zero(d + 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (margins(i) < 1.0) hinge_grad -= y(i) * x.row(i).transpose();
      }
      w = (1.0 - eta * lambda) * w - (eta / static_cast<double>(n)) * hinge_grad;
    }
    weights.row(c) = w.transpose();
  }
  return weights;
}

ProbeResult linear_probe(const FrameTable& table, int n_classes, const ProbeOptions& opts) {
  const size_t n_frames = static_cast<size_t>(table.features.rows());
  if (n_frames == 0) throw Error("EmptyInput", "no frames to probe");
  if (table.labels.size() != n_frames || table.video_ids.size() != n_frames) {
    throw Error("LengthMismatch", "frame table columns must align");
  }
  if (!(opts.fraction > 0.0) || opts.fraction > 1.0) {
    throw Error("InvalidConfig", "probe fraction must be in (0, 1]");
  }

  // ~30% of videos become the held-out test split via a fixed id hash, so the
  // split never depends on sampling options and frames of one video never
  // straddle the boundary.
  auto is_test_video = [](const std::string& video_id) {
    return fnv1a64("probe-split:" + video_id) % 100 < 30;
  };

  // Majority frame label per video (ties -> smaller label) drives
  // class-balanced video sampling.
  std::map<std::string, std::vector<long>> video_label_counts;
  for (size_t f = 0; f < n_frames; ++f) {
    int label = table.labels[f];
    if (label < 0 || label >= n_classes) throw Error("InvalidConfig", "label outside range");
    auto& counts = video_label_counts[table.video_ids[f]];
    counts.resize(static_cast<size_t>(n_classes), 0);
    ++counts[static_cast<size_t>(label)];
  }
  std::map<std::string, int> video_class;
  std::vector<std::vector<std::string>> train_videos_by_class(static_cast<size_t>(n_classes));
  std::set<std::string> class_seen_anywhere;
  for (const auto& [vid, counts] : video_label_counts) {
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)]) best = c;
    }
    video_class[vid] = best;
    if (!is_test_video(vid)) train_videos_by_class[static_cast<size_t>(best)].push_back(vid);
  }

  std::set<std::string> sampled;
  int n_train_videos = 0;
  for (int c = 0; c < n_classes; ++c) {
    auto& vids = train_videos_by_class[static_cast<size_t>(c)];
    bool class_in_truth = false;
    for (size_t f = 0; f < n_frames; ++f) {
      if (table.labels[f] == c) {
        class_in_truth = true;
        break;
      }
    }
    if (!class_in_truth) continue;  // class absent from this table entirely
    if (vids.empty()) {
      throw Error("ClassMissingInSample",
                  "class " + std::to_string(c) + " has no training videos");
    }
    std::sort(vids.begin(), vids.end());
    std::mt19937_64 rng(splitmix64(opts.seed ^ fnv1a64("probe-sample") ^
                                   static_cast<uint64_t>(c)));
    for (size_t i = vids.size(); i > 1; --i) std::swap(vids[i - 1], vids[rng() % i]);
    size_t take = static_cast<size_t>(
        std::ceil(opts.fraction * static_cast<double>(vids.size()) - 1e-12));
    take = std::max<size_t>(1, std::min(take, vids.size()));
    for (size_t i = 0; i < take; ++i) sampled.insert(vids[i]);
    n_train_videos += static_cast<int>(take);
  }

  std::vector<Eigen::Index> train_rows, test_rows;
  for (size_t f = 0; f < n_frames; ++f) {
    if (is_test_video(table.video_ids[f])) {
      test_rows.push_back(static_cast<Eigen::Index>(f));
    } else if (sampled.count(table.video_ids[f]) > 0) {
      train_rows.push_back(static_cast<Eigen::Index>(f));
    }
  }
  if (train_rows.empty()) throw Error("EmptyInput", "no training frames after sampling");
  if (test_rows.empty()) throw Error("EmptyInput", "no test frames in the held-out split");

  auto gather = [&](const std::vector<Eigen::Index>& rows, Eigen::MatrixXd& xs,
                    std::vector<int>& ys) {
    xs.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
    ys.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Eigen::Index>(i)) = table.features.row(rows[i]);
      ys[i] = table.labels[static_cast<size_t>(rows[i])];
    }
  };
  Eigen::MatrixXd train_x, test_x;
  std::vector<int> train_y, test_y;
  gather(train_rows, train_x, train_y);
  gather(test_rows, test_x, test_y);

  Eigen::MatrixXd weights =
      train_linear_classifier(train_x, train_y, n_classes, opts.lambda, opts.iterations);

  Eigen::MatrixXd test_with_bias(test_x.rows(), test_x.cols() + 1);
  test_with_bias.leftCols(test_x.cols()) = test_x;
  test_with_bias.col(test_x.cols()).setOnes();
  Eigen::MatrixXd decisions = test_with_bias * weights.transpose();
  std::vector<int> predictions(static_cast<size_t>(decisions.rows()));
  for (Eigen::Index f = 0; f < decisions.rows(); ++f) {
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (decisions(f, c) > decisions(f, best)) best = c;
    }
    predictions[static_cast<size_t>(f)] = best;
  }

  ProbeResult result;
  result.metrics = compute_single_label_metrics(predictions, test_y, n_classes);
  result.n_train_videos = n_train_videos;
  result.n_train_frames = static_cast<int>(train_rows.size());
  result.n_test_frames = static_cast<int>(test_rows.size());
  return result;
}

}  // namespace ravl
