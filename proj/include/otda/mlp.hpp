#pragma once

// Small MLP split into a feature extractor and a softmax classifier, with
// hand-written reverse-mode gradients of the composite transfer loss. The
// transport plan is treated as a constant during differentiation.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "otda/losses.hpp"
#include "otda/matrix.hpp"
#include "otda/measure.hpp"
#include "otda/rng.hpp"

namespace otda {

enum class Activation { relu, tanh_act };

struct Layer {
  Matrix weights;           // out x in
  std::vector<double> bias; // out
  Activation act = Activation::relu;
};

struct MlpParams {
  std::vector<Layer> feature_layers;
  Matrix classifier_weights;           // K x embed
  std::vector<double> classifier_bias; // K

  std::size_t input_dim() const { return feature_layers.front().weights.cols; }
  std::size_t embed_dim() const { return feature_layers.back().weights.rows; }
  std::size_t class_count() const { return classifier_weights.rows; }
};

// He-style uniform fan-in initialization; biases get the usual 1/sqrt(fan_in)
// range so fresh pre-activations do not sit exactly on the relu kink.
inline MlpParams make_mlp(int input_dim, const std::vector<int>& hidden, int embed_dim,
                          int class_count, std::uint64_t seed,
                          Activation act = Activation::relu) {
  require(input_dim >= 1 && embed_dim >= 1 && class_count >= 2, "make_mlp: bad dimensions");
  Rng rng = make_rng(seed, 23);
  auto init = [&](std::size_t out, std::size_t in) {
    Layer l;
    l.weights = Matrix(out, in);
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (double& v : l.weights.data) v = limit * (2.0 * uniform_double(rng) - 1.0);
    const double blimit = 1.0 / std::sqrt(static_cast<double>(in));
    l.bias.resize(out);
    for (double& v : l.bias) v = blimit * (2.0 * uniform_double(rng) - 1.0);
    l.act = act;
    return l;
  };
  MlpParams p;
  int prev = input_dim;
  for (int h : hidden) {
    p.feature_layers.push_back(init(static_cast<std::size_t>(h), static_cast<std::size_t>(prev)));
    prev = h;
  }
  p.feature_layers.push_back(
      init(static_cast<std::size_t>(embed_dim), static_cast<std::size_t>(prev)));
  Layer cls = init(static_cast<std::size_t>(class_count), static_cast<std::size_t>(embed_dim));
  p.classifier_weights = std::move(cls.weights);
  p.classifier_bias = std::move(cls.bias);
  return p;
}

struct GradientSet {
  std::vector<Matrix> feature_weights;
  std::vector<std::vector<double>> feature_bias;
  Matrix classifier_weights;
  std::vector<double> classifier_bias;

  static GradientSet zeros_like(const MlpParams& p) {
    GradientSet g;
    for (const auto& l : p.feature_layers) {
      g.feature_weights.emplace_back(l.weights.rows, l.weights.cols);
      g.feature_bias.emplace_back(l.bias.size(), 0.0);
    }
    g.classifier_weights = Matrix(p.classifier_weights.rows, p.classifier_weights.cols);
    g.classifier_bias.assign(p.classifier_bias.size(), 0.0);
    return g;
  }
};

// Flat views over all parameter tensors, in a fixed order shared with
// GradientSet; used by the optimizer and the finite-difference probe.
inline std::vector<std::vector<double>*> tensor_views(MlpParams& p) {
  std::vector<std::vector<double>*> out;
  for (auto& l : p.feature_layers) {
    out.push_back(&l.weights.data);
    out.push_back(&l.bias);
  }
  out.push_back(&p.classifier_weights.data);
  out.push_back(&p.classifier_bias);
  return out;
}

inline std::vector<std::vector<double>*> tensor_views(GradientSet& g) {
  std::vector<std::vector<double>*> out;
  for (std::size_t k = 0; k < g.feature_weights.size(); ++k) {
    out.push_back(&g.feature_weights[k].data);
    out.push_back(&g.feature_bias[k]);
  }
  out.push_back(&g.classifier_weights.data);
  out.push_back(&g.classifier_bias);
  return out;
}

inline std::vector<const std::vector<double>*> tensor_views(const GradientSet& g) {
  std::vector<const std::vector<double>*> out;
  for (std::size_t k = 0; k < g.feature_weights.size(); ++k) {
    out.push_back(&g.feature_weights[k].data);
    out.push_back(&g.feature_bias[k]);
  }
  out.push_back(&g.classifier_weights.data);
  out.push_back(&g.classifier_bias);
  return out;
}

namespace detail {

inline double activate(double x, Activation a) {
  return a == Activation::relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

inline double activate_grad(double pre, Activation a) {
  if (a == Activation::relu) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

struct FeatureCache {
  const Matrix* input = nullptr;
  std::vector<Matrix> pre;   // per layer, batch x out
  std::vector<Matrix> post;  // per layer, batch x out
};

inline Matrix forward_features_cached(const MlpParams& p, const Matrix& X, FeatureCache& cache) {
  require(X.cols == p.input_dim(), "forward_features: input dimension mismatch");
  cache.input = &X;
  cache.pre.clear();
  cache.post.clear();
  const Matrix* cur = &X;
  for (const auto& l : p.feature_layers) {
    Matrix pre(cur->rows, l.weights.rows);
    for (std::size_t i = 0; i < cur->rows; ++i)
      for (std::size_t o = 0; o < l.weights.rows; ++o) {
        double s = l.bias[o];
        for (std::size_t k = 0; k < l.weights.cols; ++k) s += (*cur)(i, k) * l.weights(o, k);
        pre(i, o) = s;
      }
    Matrix post(pre.rows, pre.cols);
    for (std::size_t t = 0; t < pre.data.size(); ++t)
      post.data[t] = activate(pre.data[t], l.act);
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(std::move(post));
    cur = &cache.post.back();
  }
  return cache.post.back();
}

// Accumulates parameter gradients for d(loss)/d(embedding) through the cache.
inline void backward_features(const MlpParams& p, const FeatureCache& cache, Matrix grad_embed,
                              GradientSet& grads) {
  for (std::size_t layer = p.feature_layers.size(); layer-- > 0;) {
    const auto& l = p.feature_layers[layer];
    const Matrix& pre = cache.pre[layer];
    const Matrix& below = layer == 0 ? *cache.input : cache.post[layer - 1];
    Matrix dpre(grad_embed.rows, grad_embed.cols);
    for (std::size_t t = 0; t < dpre.data.size(); ++t)
      dpre.data[t] = grad_embed.data[t] * activate_grad(pre.data[t], l.act);
    auto& dW = grads.feature_weights[layer];
    auto& db = grads.feature_bias[layer];
    for (std::size_t i = 0; i < dpre.rows; ++i)
      for (std::size_t o = 0; o < dpre.cols; ++o) {
        const double d = dpre(i, o);
        db[o] += d;
        for (std::size_t k = 0; k < l.weights.cols; ++k) dW(o, k) += d * below(i, k);
      }
    if (layer == 0) break;
    Matrix dbelow(below.rows, below.cols);
    for (std::size_t i = 0; i < dpre.rows; ++i)
      for (std::size_t k = 0; k < l.weights.cols; ++k) {
        double s = 0.0;
        for (std::size_t o = 0; o < dpre.cols; ++o) s += dpre(i, o) * l.weights(o, k);
        dbelow(i, k) = s;
      }
    grad_embed = std::move(dbelow);
  }
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double hi = logits(i, 0);
    for (std::size_t k = 1; k < logits.cols; ++k) hi = std::max(hi, logits(i, k));
    double s = 0.0;
    for (std::size_t k = 0; k < logits.cols; ++k) {
      out(i, k) = std::exp(logits(i, k) - hi);
      s += out(i, k);
    }
    for (std::size_t k = 0; k < logits.cols; ++k) out(i, k) /= s;
  }
  return out;
}

inline Matrix classifier_logits(const MlpParams& p, const Matrix& embed) {
  require(embed.cols == p.embed_dim(), "forward_classifier: embedding dimension mismatch");
  Matrix logits(embed.rows, p.class_count());
  for (std::size_t i = 0; i < embed.rows; ++i)
    for (std::size_t c = 0; c < p.class_count(); ++c) {
      double s = p.classifier_bias[c];
      for (std::size_t k = 0; k < embed.cols; ++k) s += embed(i, k) * p.classifier_weights(c, k);
      logits(i, c) = s;
    }
  return logits;
}

// dL/dlogits from dL/dprobs through the softmax Jacobian.
inline Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
  Matrix dlogits(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < probs.cols; ++k) dot += dprobs(i, k) * probs(i, k);
    for (std::size_t k = 0; k < probs.cols; ++k)
      dlogits(i, k) = probs(i, k) * (dprobs(i, k) - dot);
  }
  return dlogits;
}

// Accumulates classifier gradients and returns dL/dembed.
inline Matrix backward_classifier(const MlpParams& p, const Matrix& embed, const Matrix& dlogits,
                                  GradientSet& grads) {
  for (std::size_t i = 0; i < dlogits.rows; ++i)
    for (std::size_t c = 0; c < dlogits.cols; ++c) {
      const double d = dlogits(i, c);
      grads.classifier_bias[c] += d;
      for (std::size_t k = 0; k < embed.cols; ++k)
        grads.classifier_weights(c, k) += d * embed(i, k);
    }
  Matrix dembed(embed.rows, embed.cols);
  for (std::size_t i = 0; i < embed.rows; ++i)
    for (std::size_t k = 0; k < embed.cols; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < dlogits.cols; ++c)
        s += dlogits(i, c) * p.classifier_weights(c, k);
      dembed(i, k) = s;
    }
  return dembed;
}

}  // namespace detail

inline Matrix forward_features(const MlpParams& p, const Matrix& X) {
  detail::FeatureCache cache;
  return detail::forward_features_cached(p, X, cache);
}

inline Matrix forward_classifier(const MlpParams& p, const Matrix& embed) {
  return detail::softmax_rows(detail::classifier_logits(p, embed));
}

struct CompositeInputs {
  Matrix src_mixed_inputs;
  Matrix src_mixed_labels;
  Matrix tgt_mixed_inputs;
  TransportPlan plan;
  Matrix src_raw_inputs;
  Matrix src_raw_labels;
  LossWeights weights;
  double eta3 = 1.0;
  LabelLoss label_loss = LabelLoss::sce;
};

struct CompositeResult {
  double loss = 0.0;
  double source_ce = 0.0;
  double transfer_value = 0.0;
  GradientSet grads;
};

namespace detail {

// d/dp of -sum_k q_k log(max(p_k, floor)); zero where the clip is active.
inline void add_ce_grad_wrt_pred(std::span<const double> q, std::span<const double> p,
                                 double floor, double scale, std::span<double> out) {
  for (std::size_t k = 0; k < q.size(); ++k)
    if (p[k] > floor) out[k] -= scale * q[k] / p[k];
}

// d/dp of the configured label loss L(q, p); the reverse direction is linear in p.
inline void add_label_loss_grad(std::span<const double> q, std::span<const double> p,
                                const LossWeights& w, LabelLoss kind, double scale,
                                std::span<double> out) {
  if (kind == LabelLoss::ce) {
    add_ce_grad_wrt_pred(q, p, w.clip_floor, scale, out);
    return;
  }
  add_ce_grad_wrt_pred(q, p, w.clip_floor, scale * w.eta4, out);
  for (std::size_t k = 0; k < q.size(); ++k)
    out[k] -= scale * w.eta5 * std::log(std::max(q[k], w.clip_floor));
}

}  // namespace detail

inline CompositeResult composite_loss_and_grads(const MlpParams& p, const CompositeInputs& in) {
  const std::size_t m_src = in.src_mixed_inputs.rows;
  const std::size_t m_tgt = in.tgt_mixed_inputs.rows;
  require(in.plan.coupling.rows == m_src && in.plan.coupling.cols == m_tgt,
          "composite loss: plan does not match batch sizes");
  require(in.src_raw_inputs.rows == in.src_raw_labels.rows, "composite loss: raw batch mismatch");
  in.weights.validate();

  CompositeResult res;
  res.grads = GradientSet::zeros_like(p);
  const double floor = in.weights.clip_floor;

  // Source cross-entropy on the raw batch (mean over the batch).
  detail::FeatureCache raw_cache;
  const Matrix raw_embed = detail::forward_features_cached(p, in.src_raw_inputs, raw_cache);
  const Matrix raw_probs = detail::softmax_rows(detail::classifier_logits(p, raw_embed));
  const std::size_t batch = in.src_raw_inputs.rows;
  const std::size_t K = raw_probs.cols;
  double ce = 0.0;
  Matrix draw_probs(batch, K);
  std::vector<double> qi(K), pi(K);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      qi[k] = in.src_raw_labels(i, k);
      pi[k] = raw_probs(i, k);
    }
    ce += cross_entropy(qi, pi, floor);
    std::span<double> row(draw_probs.data.data() + i * K, K);
    detail::add_ce_grad_wrt_pred(qi, pi, floor, 1.0 / static_cast<double>(batch), row);
  }
  ce /= static_cast<double>(batch);
  res.source_ce = ce;

  {
    const Matrix dlogits = detail::softmax_backward(raw_probs, draw_probs);
    const Matrix dembed = detail::backward_classifier(p, raw_embed, dlogits, res.grads);
    detail::backward_features(p, raw_cache, dembed, res.grads);
  }

  // Transfer term under the fixed plan.
  double transfer = 0.0;
  if (in.eta3 != 0.0 && m_src > 0 && m_tgt > 0) {
    detail::FeatureCache src_cache, tgt_cache;
    const Matrix es = detail::forward_features_cached(p, in.src_mixed_inputs, src_cache);
    const Matrix et = detail::forward_features_cached(p, in.tgt_mixed_inputs, tgt_cache);
    const Matrix pt = detail::softmax_rows(detail::classifier_logits(p, et));
    const auto& pl = in.plan.coupling;
    const std::size_t Kc = pt.cols;

    Matrix dpt(m_tgt, Kc);
    std::vector<double> q(Kc), pr(Kc);
    const double e1 = in.weights.eta1, e2 = in.weights.eta2;
    std::vector<double> row_mass(m_src, 0.0), col_mass(m_tgt, 0.0);
    for (std::size_t i = 0; i < m_src; ++i)
      for (std::size_t j = 0; j < m_tgt; ++j) {
        row_mass[i] += pl(i, j);
        col_mass[j] += pl(i, j);
      }

    for (std::size_t i = 0; i < m_src; ++i) {
      for (std::size_t k = 0; k < Kc; ++k) q[k] = in.src_mixed_labels(i, k);
      for (std::size_t j = 0; j < m_tgt; ++j) {
        const double mass = pl(i, j);
        if (mass == 0.0) continue;
        for (std::size_t k = 0; k < Kc; ++k) pr[k] = pt(j, k);
        const double feat = squared_distance(es, i, et, j);
        const double lab = label_loss_value(q, pr, in.weights, in.label_loss);
        transfer += mass * (e1 * feat + e2 * lab);
        std::span<double> drow(dpt.data.data() + j * Kc, Kc);
        detail::add_label_loss_grad(q, pr, in.weights, in.label_loss, in.eta3 * e2 * mass, drow);
      }
    }

    // Feature-part gradients: d/des_i = 2 eta3 eta1 (row_mass_i es_i - sum_j pl_ij et_j).
    Matrix des(m_src, es.cols), det(m_tgt, et.cols);
    for (std::size_t i = 0; i < m_src; ++i)
      for (std::size_t k = 0; k < es.cols; ++k) des(i, k) = row_mass[i] * es(i, k);
    for (std::size_t j = 0; j < m_tgt; ++j)
      for (std::size_t k = 0; k < et.cols; ++k) det(j, k) = col_mass[j] * et(j, k);
    for (std::size_t i = 0; i < m_src; ++i)
      for (std::size_t j = 0; j < m_tgt; ++j) {
        const double mass = pl(i, j);
        if (mass == 0.0) continue;
        for (std::size_t k = 0; k < es.cols; ++k) {
          des(i, k) -= mass * et(j, k);
          det(j, k) -= mass * es(i, k);
        }
      }
    const double fscale = 2.0 * in.eta3 * e1;
    for (double& v : des.data) v *= fscale;
    for (double& v : det.data) v *= fscale;

    const Matrix dlogits_t = detail::softmax_backward(pt, dpt);
    Matrix dembed_t = detail::backward_classifier(p, et, dlogits_t, res.grads);
    for (std::size_t t = 0; t < dembed_t.data.size(); ++t) dembed_t.data[t] += det.data[t];
    detail::backward_features(p, tgt_cache, dembed_t, res.grads);
    detail::backward_features(p, src_cache, des, res.grads);
  }
  res.transfer_value = transfer;
  res.loss = ce + in.eta3 * transfer;
  require(std::isfinite(res.loss), "composite loss: non-finite loss");
  return res;
}

inline double composite_loss_only(const MlpParams& p, const CompositeInputs& in) {
  const Matrix raw_embed = forward_features(p, in.src_raw_inputs);
  const Matrix raw_probs = forward_classifier(p, raw_embed);
  const std::size_t batch = in.src_raw_inputs.rows;
  const std::size_t K = raw_probs.cols;
  std::vector<double> q(K), pr(K);
  double ce = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      q[k] = in.src_raw_labels(i, k);
      pr[k] = raw_probs(i, k);
    }
    ce += cross_entropy(q, pr, in.weights.clip_floor);
  }
  ce /= static_cast<double>(batch);
  if (in.eta3 == 0.0) return ce;

  const Matrix es = forward_features(p, in.src_mixed_inputs);
  const Matrix et = forward_features(p, in.tgt_mixed_inputs);
  const Matrix pt = forward_classifier(p, et);
  double transfer = 0.0;
  std::vector<double> qq(pt.cols), pp(pt.cols);
  for (std::size_t i = 0; i < es.rows; ++i) {
    for (std::size_t k = 0; k < pt.cols; ++k) qq[k] = in.src_mixed_labels(i, k);
    for (std::size_t j = 0; j < et.rows; ++j) {
      const double mass = in.plan.coupling(i, j);
      if (mass == 0.0) continue;
      for (std::size_t k = 0; k < pt.cols; ++k) pp[k] = pt(j, k);
      transfer += mass * (in.weights.eta1 * squared_distance(es, i, et, j) +
                          in.weights.eta2 * label_loss_value(qq, pp, in.weights, in.label_loss));
    }
  }
  return ce + in.eta3 * transfer;
}

// Central finite differences against a supplied analytic gradient; returns
// the worst relative error over all parameter coordinates, with denominators
// floored at 1e-8.
template <typename LossFn>
inline double finite_difference_worst_error(MlpParams& p, const GradientSet& analytic,
                                            LossFn&& loss, double h) {
  auto pviews = tensor_views(p);
  auto gviews = tensor_views(analytic);
  double worst = 0.0;
  for (std::size_t t = 0; t < pviews.size(); ++t) {
    auto& tensor = *pviews[t];
    const auto& gt = *gviews[t];
    for (std::size_t idx = 0; idx < tensor.size(); ++idx) {
      const double saved = tensor[idx];
      tensor[idx] = saved + h;
      const double up = loss(p);
      tensor[idx] = saved - h;
      const double dn = loss(p);
      tensor[idx] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(gt[idx]), 1e-8});
      worst = std::max(worst, std::abs(fd - gt[idx]) / denom);
    }
  }
  return worst;
}

inline double finite_difference_check(const MlpParams& params, const CompositeInputs& in,
                                      double h) {
  MlpParams p = params;
  const GradientSet analytic = composite_loss_and_grads(p, in).grads;
  return finite_difference_worst_error(
      p, analytic, [&in](const MlpParams& q) { return composite_loss_only(q, in); }, h);
}

enum class OptMethod { sgd, adam };

struct OptimizerState {
  OptMethod method = OptMethod::adam;
  double learning_rate = 2e-4;
  double momentum = 0.9;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long step_count = 0;
  GradientSet first_moment;
  GradientSet second_moment;
  bool initialized = false;
};

inline void optimizer_step(MlpParams& p, const GradientSet& grads, OptimizerState& st) {
  if (!st.initialized) {
    st.first_moment = GradientSet::zeros_like(p);
    st.second_moment = GradientSet::zeros_like(p);
    st.initialized = true;
  }
  auto pviews = tensor_views(p);
  auto gviews = tensor_views(grads);
  auto m1 = tensor_views(st.first_moment);
  auto m2 = tensor_views(st.second_moment);
  require(pviews.size() == gviews.size(), "optimizer: gradient shape mismatch");
  ++st.step_count;
  for (std::size_t t = 0; t < pviews.size(); ++t) {
    auto& w = *pviews[t];
    const auto& gv = *gviews[t];
    require(w.size() == gv.size(), "optimizer: gradient shape mismatch");
    if (st.method == OptMethod::sgd) {
      auto& vel = *m1[t];
      for (std::size_t i = 0; i < w.size(); ++i) {
        vel[i] = st.momentum * vel[i] + gv[i];
        w[i] -= st.learning_rate * vel[i];
      }
    } else {
      auto& m = *m1[t];
      auto& v = *m2[t];
      const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
      const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gv[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gv[i] * gv[i];
        w[i] -= st.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.adam_eps);
      }
    }
  }
}

}  // namespace otda
