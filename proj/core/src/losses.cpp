#include "ravl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ravl/error.hpp"

namespace ravl {

namespace {

void check_pair(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() < 1) throw Error("BatchMismatch", "empty batch");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error("BatchMismatch", "batch shapes differ: " + std::to_string(a.rows()) + "x" +
                                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                     "x" + std::to_string(b.cols()));
  }
}

// Row softmax of a logits matrix, computed with max subtraction.
Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p;
}

// Mean over rows of the cross-entropy of row i against target column i.
double diagonal_cross_entropy(const Eigen::MatrixXd& logits) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, i);
  }
  return total / static_cast<double>(logits.rows());
}

// Symmetric (or one-directional) InfoNCE over row-aligned batches, with
// analytic gradients via the softmax-minus-indicator form.
double info_nce(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const LossConfig& cfg) {
  check_pair(a, b);
  cfg.validate();
  Eigen::MatrixXd s = (a * b.transpose()) / cfg.temperature;
  double loss = diagonal_cross_entropy(s);
  if (cfg.symmetric) loss = 0.5 * (loss + diagonal_cross_entropy(s.transpose()));
  return loss;
}

PairLossGrad info_nce_grad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const LossConfig& cfg) {
  check_pair(a, b);
  cfg.validate();
  const double bsz = static_cast<double>(a.rows());
  Eigen::MatrixXd s = (a * b.transpose()) / cfg.temperature;
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.rows(), a.rows());

  PairLossGrad out;
  Eigen::MatrixXd g;  // d(loss)/d(s)
  if (cfg.symmetric) {
    out.value = 0.5 * (diagonal_cross_entropy(s) + diagonal_cross_entropy(s.transpose()));
    g = ((row_softmax(s) - eye) + (row_softmax(s.transpose()) - eye).transpose()) / (2.0 * bsz);
  } else {
    out.value = diagonal_cross_entropy(s);
    g = (row_softmax(s) - eye) / bsz;
  }
  out.grad_a = (g * b) / cfg.temperature;
  out.grad_b = (g.transpose() * a) / cfg.temperature;
  return out;
}

void check_retrieved(const Eigen::MatrixXd& video, const std::vector<RetrievedSet>& retrieved) {
  if (video.rows() < 1) throw Error("BatchMismatch", "empty batch");
  if (static_cast<Eigen::Index>(retrieved.size()) != video.rows()) {
    throw Error("BatchMismatch", "one retrieved set required per query video");
  }
  const Eigen::Index k = retrieved.front().visual.rows();
  if (k < 1) throw Error("RaggedRetrieval", "retrieved sets must be non-empty");
  for (const RetrievedSet& r : retrieved) {
    if (r.visual.rows() != k || r.text.rows() != k) {
      throw Error("RaggedRetrieval", "all queries must retrieve the same number of entries");
    }
    if (r.visual.cols() != video.cols() || r.text.cols() != video.cols()) {
      throw Error("BatchMismatch", "retrieved embedding dimension differs from video embeddings");
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw Error("InvalidConfig", "temperature must be > 0");
  if (w_vl < 0.0 || w_vv < 0.0) throw Error("InvalidConfig", "loss weights must be >= 0");
  if (!(w_vl + w_vv > 0.0)) throw Error("InvalidConfig", "at least one loss weight must be > 0");
}

double clip_vl_loss(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& text,
                    const LossConfig& cfg) {
  return info_nce(visual, text, cfg);
}

PairLossGrad clip_vl_loss_grad(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& text,
                               const LossConfig& cfg) {
  return info_nce_grad(visual, text, cfg);
}

double clip_vv_loss(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                    const LossConfig& cfg) {
  return info_nce(view_a, view_b, cfg);
}

PairLossGrad clip_vv_loss_grad(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                               const LossConfig& cfg) {
  return info_nce_grad(view_a, view_b, cfg);
}

double clip_total_loss(double vl, double vv, const LossConfig& cfg) {
  cfg.validate();
  return cfg.w_vl * vl + cfg.w_vv * vv;
}

double video_narrative_loss(const Eigen::MatrixXd& video, const Eigen::MatrixXd& title,
                            const LossConfig& cfg) {
  return info_nce(video, title, cfg);
}

PairLossGrad video_narrative_loss_grad(const Eigen::MatrixXd& video, const Eigen::MatrixXd& title,
                                       const LossConfig& cfg) {
  return info_nce_grad(video, title, cfg);
}

double video_silent_loss(const Eigen::MatrixXd& video, const std::vector<RetrievedSet>& retrieved,
                         const LossConfig& cfg) {
  return video_silent_loss_grad(video, retrieved, cfg).value;
}

SilentLossGrad video_silent_loss_grad(const Eigen::MatrixXd& video,
                                      const std::vector<RetrievedSet>& retrieved,
                                      const LossConfig& cfg) {
  cfg.validate();
  check_retrieved(video, retrieved);
  const Eigen::Index bsz = video.rows();
  const Eigen::Index k = retrieved.front().visual.rows();
  const double tau = cfg.temperature;

  SilentLossGrad out;
  out.grad_video = Eigen::MatrixXd::Zero(video.rows(), video.cols());
  out.grad_retrieved.reserve(retrieved.size());
  for (const RetrievedSet& r : retrieved) {
    out.grad_retrieved.push_back({Eigen::MatrixXd::Zero(r.visual.rows(), r.visual.cols()),
                                  Eigen::MatrixXd::Zero(r.text.rows(), r.text.cols())});
  }

  // A "candidate" for query i is one (owner query, retrieved rank, modality)
  // value embedding; all 2*K*B candidates form the denominator in cross-query
  // mode, the owner's own 2*K in within-query mode.
  auto value_of = [&](Eigen::Index owner, Eigen::Index rank, int modality) {
    return modality == 0 ? retrieved[static_cast<size_t>(owner)].visual.row(rank)
                         : retrieved[static_cast<size_t>(owner)].text.row(rank);
  };
  auto grad_of = [&](Eigen::Index owner, Eigen::Index rank, int modality) {
    return modality == 0 ? out.grad_retrieved[static_cast<size_t>(owner)].visual.row(rank)
                         : out.grad_retrieved[static_cast<size_t>(owner)].text.row(rank);
  };

  double total = 0.0;
  for (Eigen::Index i = 0; i < bsz; ++i) {
    if (cfg.cross_query_negatives) {
      // Single softmax over all candidates; positives are the owner's own.
      std::vector<double> logits;
      logits.reserve(static_cast<size_t>(2 * k * bsz));
      std::vector<bool> positive;
      positive.reserve(logits.capacity());
      for (Eigen::Index owner = 0; owner < bsz; ++owner) {
        for (Eigen::Index j = 0; j < k; ++j) {
          for (int m = 0; m < 2; ++m) {
            logits.push_back(video.row(i).dot(value_of(owner, j, m)) / tau);
            positive.push_back(owner == i);
          }
        }
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double sum_all = 0.0, sum_pos = 0.0;
      for (size_t x = 0; x < logits.size(); ++x) {
        double e = std::exp(logits[x] - mx);
        sum_all += e;
        if (positive[x]) sum_pos += e;
      }
      total += std::log(sum_all) - std::log(sum_pos);

      // d(loss_i)/d(logit_x) = p_x - [positive] s_x, with p over all
      // candidates and s over positives only.
      size_t x = 0;
      for (Eigen::Index owner = 0; owner < bsz; ++owner) {
        for (Eigen::Index j = 0; j < k; ++j) {
          for (int m = 0; m < 2; ++m, ++x) {
            double e = std::exp(logits[x] - mx);
            double coeff = e / sum_all - (positive[x] ? e / sum_pos : 0.0);
            coeff /= static_cast<double>(bsz);  // mean over queries
            out.grad_video.row(i) += coeff * value_of(owner, j, m) / tau;
            grad_of(owner, j, m) += coeff * video.row(i) / tau;
          }
        }
      }
    } else {
      // Within-query form: each rank j is scored against the query's own 2K
      // candidates only; per-query loss averages over ranks. With K=1 the
      // denominator equals the numerator and the term vanishes.
      std::vector<double> logits(static_cast<size_t>(2 * k));
      for (Eigen::Index j = 0; j < k; ++j) {
        for (int m = 0; m < 2; ++m) {
          logits[static_cast<size_t>(2 * j + m)] = video.row(i).dot(value_of(i, j, m)) / tau;
        }
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double sum_all = 0.0;
      for (double l : logits) sum_all += std::exp(l - mx);

      for (Eigen::Index j = 0; j < k; ++j) {
        double sum_pos = std::exp(logits[static_cast<size_t>(2 * j)] - mx) +
                         std::exp(logits[static_cast<size_t>(2 * j + 1)] - mx);
        total += (std::log(sum_all) - std::log(sum_pos)) / static_cast<double>(k);
        for (Eigen::Index jj = 0; jj < k; ++jj) {
          for (int m = 0; m < 2; ++m) {
            double e = std::exp(logits[static_cast<size_t>(2 * jj + m)] - mx);
            double coeff = e / sum_all - (jj == j ? e / sum_pos : 0.0);
            coeff /= static_cast<double>(k) * static_cast<double>(bsz);
            out.grad_video.row(i) += coeff * value_of(i, jj, m) / tau;
            grad_of(i, jj, m) += coeff * video.row(i) / tau;
          }
        }
      }
    }
  }
  out.value = total / static_cast<double>(bsz);
  return out;
}

double video_total_loss(double narrative, double silent) { return narrative + silent; }

}  // namespace ravl
