#pragma once

// Cross-entropy, symmetric cross-entropy and the joint feature+label ground
// cost. Every logarithm argument is clipped from below, so one-hot vectors
// are valid on either side of the loss.

#include <cmath>
#include <span>

#include "otda/matrix.hpp"
#include "otda/measure.hpp"

namespace otda {

struct LossWeights {
  double eta1 = 0.1;        // feature term of the ground cost
  double eta2 = 0.1;        // label term of the ground cost
  double eta4 = 0.01;       // forward-CE coefficient inside SCE
  double eta5 = 1.0;        // reverse-CE coefficient inside SCE
  double clip_floor = 1e-7;

  void validate() const {
    require(eta1 >= 0.0 && eta2 >= 0.0 && eta4 >= 0.0 && eta5 >= 0.0,
            "loss weights: coefficients must be nonnegative");
    require(clip_floor > 0.0 && clip_floor < 1.0, "loss weights: clip_floor outside (0,1)");
  }
};

enum class LabelLoss { ce, sce };

inline double cross_entropy(std::span<const double> q, std::span<const double> q_pred,
                            double clip_floor) {
  require(q.size() == q_pred.size(), "cross_entropy: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    require(q[i] >= 0.0 && q_pred[i] >= 0.0, "cross_entropy: negative entry");
    s -= q[i] * std::log(std::max(q_pred[i], clip_floor));
  }
  return s;
}

inline double symmetric_cross_entropy(std::span<const double> q, std::span<const double> q_pred,
                                      const LossWeights& w) {
  return w.eta4 * cross_entropy(q, q_pred, w.clip_floor) +
         w.eta5 * cross_entropy(q_pred, q, w.clip_floor);
}

inline double label_loss_value(std::span<const double> q, std::span<const double> q_pred,
                               const LossWeights& w, LabelLoss kind) {
  if (kind == LabelLoss::ce) return cross_entropy(q, q_pred, w.clip_floor);
  return symmetric_cross_entropy(q, q_pred, w);
}

// Entry (i,j) = eta1 ||src_embed_i - tgt_embed_j||^2 + eta2 L(src_onehot_i, tgt_pred_j).
inline CostMatrix build_joint_cost(const Matrix& src_embed, const Matrix& src_onehot,
                                   const Matrix& tgt_embed, const Matrix& tgt_pred,
                                   const LossWeights& w, LabelLoss label_loss) {
  w.validate();
  require(src_embed.cols == tgt_embed.cols, "build_joint_cost: embedding dims differ");
  require(src_onehot.cols == tgt_pred.cols, "build_joint_cost: class counts differ");
  require(src_embed.rows == src_onehot.rows && tgt_embed.rows == tgt_pred.rows,
          "build_joint_cost: batch sizes inconsistent");
  for (double v : src_embed.data) require(!std::isnan(v), "build_joint_cost: NaN embedding");
  for (double v : tgt_embed.data) require(!std::isnan(v), "build_joint_cost: NaN embedding");

  CostMatrix c;
  c.values = Matrix(src_embed.rows, tgt_embed.rows);
  c.metric_tag = label_loss == LabelLoss::ce ? "joint+ce" : "joint+sce";
  const std::size_t K = src_onehot.cols;
  std::vector<double> qi(K), pj(K);
  for (std::size_t i = 0; i < src_embed.rows; ++i) {
    for (std::size_t k = 0; k < K; ++k) qi[k] = src_onehot(i, k);
    for (std::size_t j = 0; j < tgt_embed.rows; ++j) {
      for (std::size_t k = 0; k < K; ++k) pj[k] = tgt_pred(j, k);
      c.values(i, j) = w.eta1 * squared_distance(src_embed, i, tgt_embed, j) +
                       w.eta2 * label_loss_value(qi, pj, w, label_loss);
    }
  }
  return c;
}

}  // namespace otda
