#pragma once

#include <Eigen/Core>
#include <vector>

namespace ravl {

// Shared settings for all contrastive objectives. All similarity logits are
// inner products of unit-norm embeddings divided by `temperature`.
struct LossConfig {
  double temperature = 0.1;
  double w_vl = 0.5;  // weight of the clip-narration term in the clip objective
  double w_vv = 0.5;  // weight of the two-view term in the clip objective
  // Averaged two-direction InfoNCE when true; single direction (rows as
  // queries) when false.
  bool symmetric = true;
  // The silent-video objective scores each video against the retrieved
  // entries of every other query in the batch as negatives. Disabling this
  // restores the within-query-only form, which is identically 0 at K=1 (its
  // denominator equals its numerator) and is kept for ablation.
  bool cross_query_negatives = true;

  void validate() const;
};

// Loss value plus gradients with respect to both embedding batches (rows are
// embeddings).
struct PairLossGrad {
  double value = 0.0;
  Eigen::MatrixXd grad_a;
  Eigen::MatrixXd grad_b;
};

// Top-K retrieved memory entries for one query: row j of `visual`/`text` is
// the value pair of the j-th retrieved silent video.
struct RetrievedSet {
  Eigen::MatrixXd visual;
  Eigen::MatrixXd text;
};

struct SilentLossGrad {
  double value = 0.0;
  Eigen::MatrixXd grad_video;
  std::vector<RetrievedSet> grad_retrieved;
};

// Clip-narration alignment: symmetric InfoNCE with the diagonal of the B x B
// similarity matrix as positives. Returns 0 for B = 1 and ln B for
// all-identical batches.
double clip_vl_loss(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& text,
                    const LossConfig& cfg);
PairLossGrad clip_vl_loss_grad(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& text,
                               const LossConfig& cfg);

// Two-view self-supervision: same InfoNCE structure where row i of view_a
// pairs with row i of view_b (two augmentations of the same clip).
double clip_vv_loss(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                    const LossConfig& cfg);
PairLossGrad clip_vv_loss_grad(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                               const LossConfig& cfg);

// Weighted combination of the two clip-level terms.
double clip_total_loss(double vl, double vv, const LossConfig& cfg);

// Video-title alignment over aggregated video embeddings.
double video_narrative_loss(const Eigen::MatrixXd& video, const Eigen::MatrixXd& title,
                            const LossConfig& cfg);
PairLossGrad video_narrative_loss_grad(const Eigen::MatrixXd& video, const Eigen::MatrixXd& title,
                                       const LossConfig& cfg);

// Retrieval-augmented objective for narrative videos against memory values.
// For query i the positive logit set is {sim(video_i, visual_ij),
// sim(video_i, text_ij)} over its own K retrieved entries; negatives are the
// same logits against other queries' retrieved entries (cross-query mode).
// Loss = mean over queries of -log(sum_pos / sum_all).
double video_silent_loss(const Eigen::MatrixXd& video, const std::vector<RetrievedSet>& retrieved,
                         const LossConfig& cfg);
SilentLossGrad video_silent_loss_grad(const Eigen::MatrixXd& video,
                                      const std::vector<RetrievedSet>& retrieved,
                                      const LossConfig& cfg);

// Video-level objective: narrative + silent terms.
double video_total_loss(double narrative, double silent);

}  // namespace ravl
