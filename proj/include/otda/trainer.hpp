#pragma once

// Training loop: alternating plan-solve / gradient-step on the composite
// objective, with the method taxonomy (source_only / deepjdot / jumbot /
// mixot / mixunbot and the two single-ingredient ablations) expressed as
// switches over {mixup, label loss, solver}.

#include <cstdint>
#include <string>
#include <vector>

#include "otda/data.hpp"
#include "otda/losses.hpp"
#include "otda/measure.hpp"
#include "otda/minibatch.hpp"
#include "otda/mixup.hpp"
#include "otda/mlp.hpp"
#include "otda/rng.hpp"

namespace otda {

enum class Method { source_only, deepjdot, deepjdot_sce, mixot_ce, mixot, jumbot, mixunbot };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::source_only: return "source_only";
    case Method::deepjdot: return "deepjdot";
    case Method::deepjdot_sce: return "deepjdot_sce";
    case Method::mixot_ce: return "mixot_ce";
    case Method::mixot: return "mixot";
    case Method::jumbot: return "jumbot";
    case Method::mixunbot: return "mixunbot";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "source_only") return Method::source_only;
  if (name == "deepjdot") return Method::deepjdot;
  if (name == "deepjdot_sce") return Method::deepjdot_sce;
  if (name == "mixot_ce") return Method::mixot_ce;
  if (name == "mixot") return Method::mixot;
  if (name == "jumbot") return Method::jumbot;
  if (name == "mixunbot") return Method::mixunbot;
  throw std::invalid_argument("unknown method: " + name);
}

struct TrainConfig {
  Method method = Method::mixunbot;
  // Switches implied by the method; resolve_method() fills them.
  bool mixup_enabled = false;
  LabelLoss label_loss = LabelLoss::ce;
  SolverKind solver = SolverKind::exact;

  LossWeights weights;       // eta1, eta2, eta4, eta5, clip
  double eta3 = 1.0;
  SolverConfig solver_cfg;   // epsilon, tau, iterations, tolerance
  MixupConfig mixup;         // alpha
  int batch_size = 30;
  bool stratified_source = true;
  int epochs = 40;
  int pretrain_epochs = 2;
  OptMethod opt_method = OptMethod::adam;
  double learning_rate = 2e-4;
  double momentum = 0.9;
  std::vector<int> hidden = {32, 32};
  int embed_dim = 16;
  std::uint64_t seed = 0;
  bool shared_lambda = true;  // one lambda for source and target mixing

  void resolve_method() {
    switch (method) {
      case Method::source_only:
        mixup_enabled = false;
        label_loss = LabelLoss::ce;
        solver = SolverKind::exact;
        eta3 = 0.0;
        break;
      case Method::deepjdot:
        mixup_enabled = false;
        label_loss = LabelLoss::ce;
        solver = SolverKind::exact;
        break;
      case Method::deepjdot_sce:
        mixup_enabled = false;
        label_loss = LabelLoss::sce;
        solver = SolverKind::exact;
        break;
      case Method::mixot_ce:
        mixup_enabled = true;
        label_loss = LabelLoss::ce;
        solver = SolverKind::exact;
        break;
      case Method::mixot:
        mixup_enabled = true;
        label_loss = LabelLoss::sce;
        solver = SolverKind::exact;
        break;
      case Method::jumbot:
        mixup_enabled = false;
        label_loss = LabelLoss::ce;
        solver = SolverKind::unbalanced;
        break;
      case Method::mixunbot:
        mixup_enabled = true;
        label_loss = LabelLoss::sce;
        solver = SolverKind::unbalanced;
        break;
    }
  }
};

struct Batch {
  Matrix inputs;
  Matrix one_hot;           // empty for target batches
  std::vector<int> labels;  // diagnostics only on the target side
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double source_ce = 0.0;
  double transfer_value = 0.0;
  double plan_mass = 0.0;
  double cross_class_fraction = 0.0;
};

struct EpochEval {
  int epoch = 0;
  double accuracy = 0.0;
  std::vector<double> per_class;  // -1 for classes absent from the dataset
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochEval> epochs;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class;
};

inline EvalResult evaluate(const MlpParams& p, const LabeledDataset& ds) {
  ds.validate();
  const Matrix probs = forward_classifier(p, forward_features(p, ds.points));
  EvalResult res;
  std::vector<int> correct(static_cast<std::size_t>(ds.class_count), 0);
  std::vector<int> count(static_cast<std::size_t>(ds.class_count), 0);
  int total_correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.cols; ++k)
      if (probs(i, k) > probs(i, best)) best = k;
    const std::size_t truth = static_cast<std::size_t>(ds.labels[i]);
    ++count[truth];
    if (best == truth) {
      ++correct[truth];
      ++total_correct;
    }
  }
  res.accuracy = static_cast<double>(total_correct) / static_cast<double>(ds.size());
  res.per_class.resize(static_cast<std::size_t>(ds.class_count));
  for (std::size_t k = 0; k < res.per_class.size(); ++k)
    res.per_class[k] = count[k] > 0 ? static_cast<double>(correct[k]) / count[k] : -1.0;
  return res;
}

namespace detail {

// Diagnostic label of a mixed sample: the label of its dominant component.
inline std::vector<int> dominant_labels(const std::vector<int>& labels, double lambda,
                                        const std::vector<int>& perm) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = lambda >= 0.5 ? labels[i] : labels[static_cast<std::size_t>(perm[i])];
  return out;
}

}  // namespace detail

inline StepRecord training_step(MlpParams& p, const Batch& src, const Batch& tgt,
                                const TrainConfig& cfg, OptimizerState& st, Rng& rng) {
  const std::size_t m = src.inputs.rows;

  CompositeInputs ci;
  ci.weights = cfg.weights;
  ci.eta3 = cfg.eta3;
  ci.label_loss = cfg.label_loss;
  ci.src_raw_inputs = src.inputs;
  ci.src_raw_labels = src.one_hot;

  StepRecord rec;
  if (cfg.method == Method::source_only || cfg.eta3 == 0.0) {
    ci.eta3 = 0.0;
    const auto out = composite_loss_and_grads(p, ci);
    optimizer_step(p, out.grads, st);
    rec.loss = out.loss;
    rec.source_ce = out.source_ce;
    return rec;
  }

  require(tgt.inputs.rows == m, "training_step: batch sizes differ");
  std::vector<int> src_diag = src.labels, tgt_diag = tgt.labels;
  if (cfg.mixup_enabled && !cfg.mixup.per_batch_lambda) {
    // per-sample lambdas: mix one row at a time
    const auto perm_s = random_permutation(m, rng);
    const auto perm_t = random_permutation(m, rng);
    ci.src_mixed_inputs = src.inputs;
    ci.src_mixed_labels = src.one_hot;
    ci.tgt_mixed_inputs = tgt.inputs;
    for (std::size_t i = 0; i < m; ++i) {
      const double lam = sample_lambda(cfg.mixup, rng);
      const std::size_t ps = static_cast<std::size_t>(perm_s[i]);
      for (std::size_t k = 0; k < src.inputs.cols; ++k)
        ci.src_mixed_inputs(i, k) = lam * src.inputs(i, k) + (1.0 - lam) * src.inputs(ps, k);
      for (std::size_t k = 0; k < src.one_hot.cols; ++k)
        ci.src_mixed_labels(i, k) = lam * src.one_hot(i, k) + (1.0 - lam) * src.one_hot(ps, k);
      const double lam_t = cfg.shared_lambda ? lam : sample_lambda(cfg.mixup, rng);
      const std::size_t pt = static_cast<std::size_t>(perm_t[i]);
      for (std::size_t k = 0; k < tgt.inputs.cols; ++k)
        ci.tgt_mixed_inputs(i, k) = lam_t * tgt.inputs(i, k) + (1.0 - lam_t) * tgt.inputs(pt, k);
    }
  } else if (cfg.mixup_enabled) {
    const double lam = sample_lambda(cfg.mixup, rng);
    const double lam_t = cfg.shared_lambda ? lam : sample_lambda(cfg.mixup, rng);
    const auto perm_s = random_permutation(m, rng);
    const auto perm_t = random_permutation(m, rng);
    const auto mixed = mix_source_batch(src.inputs, src.one_hot, lam, perm_s);
    ci.src_mixed_inputs = mixed.inputs;
    ci.src_mixed_labels = mixed.labels;
    ci.tgt_mixed_inputs = mix_target_batch(tgt.inputs, lam_t, perm_t);
    if (!src_diag.empty()) src_diag = detail::dominant_labels(src.labels, lam, perm_s);
    if (!tgt_diag.empty()) tgt_diag = detail::dominant_labels(tgt.labels, lam_t, perm_t);
  } else {
    ci.src_mixed_inputs = src.inputs;
    ci.src_mixed_labels = src.one_hot;
    ci.tgt_mixed_inputs = tgt.inputs;
  }

  // Solve the plan on current embeddings, then differentiate with it fixed.
  const Matrix es = forward_features(p, ci.src_mixed_inputs);
  const Matrix et = forward_features(p, ci.tgt_mixed_inputs);
  const Matrix pt = forward_classifier(p, et);
  const CostMatrix cost =
      build_joint_cost(es, ci.src_mixed_labels, et, pt, cfg.weights, cfg.label_loss);
  DiscreteMeasure a = DiscreteMeasure::uniform(ci.src_mixed_inputs);
  DiscreteMeasure b = DiscreteMeasure::uniform(ci.tgt_mixed_inputs);
  try {
    ci.plan = solve_ot(cfg.solver, a, b, cost, cfg.solver_cfg);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("training_step: solver failed: ") + e.what());
  }

  const auto out = composite_loss_and_grads(p, ci);
  optimizer_step(p, out.grads, st);

  rec.loss = out.loss;
  rec.source_ce = out.source_ce;
  rec.transfer_value = out.transfer_value;
  rec.plan_mass = plan_mass(ci.plan);
  if (!src_diag.empty() && !tgt_diag.empty())
    rec.cross_class_fraction = cross_class_mass(ci.plan, src_diag, tgt_diag).cross_class_fraction;
  return rec;
}

struct FitResult {
  MlpParams params;
  TrainHistory history;
};

inline FitResult fit(TrainConfig cfg, const LabeledDataset& source, const LabeledDataset& target) {
  cfg.resolve_method();
  source.validate();
  target.validate();
  require(cfg.batch_size >= 1, "fit: batch size < 1");
  require(static_cast<std::size_t>(cfg.batch_size) <= source.size() &&
              static_cast<std::size_t>(cfg.batch_size) <= target.size(),
          "fit: batch size exceeds dataset");

  FitResult res;
  res.params = make_mlp(static_cast<int>(source.points.cols), cfg.hidden, cfg.embed_dim,
                        source.class_count, cfg.seed);
  OptimizerState st;
  st.method = cfg.opt_method;
  st.learning_rate = cfg.learning_rate;
  st.momentum = cfg.momentum;

  Rng rng_src = make_rng(cfg.seed, 101);
  Rng rng_tgt = make_rng(cfg.seed, 103);
  Rng rng_mix = make_rng(cfg.seed, 107);

  const Matrix src_one_hot = source.as_measure().one_hot;
  const std::size_t m = static_cast<std::size_t>(cfg.batch_size);

  auto make_src_batch = [&](const std::vector<int>& idx) {
    Batch b;
    b.inputs = source.points.select_rows(idx);
    b.one_hot = src_one_hot.select_rows(idx);
    b.labels.reserve(idx.size());
    for (int i : idx) b.labels.push_back(source.labels[static_cast<std::size_t>(i)]);
    return b;
  };

  std::vector<int> tgt_order(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) tgt_order[i] = static_cast<int>(i);
  std::size_t tgt_cursor = target.size();  // forces an initial shuffle
  auto next_tgt_batch = [&]() {
    if (tgt_cursor + m > target.size()) {
      shuffle(tgt_order, rng_tgt);
      tgt_cursor = 0;
    }
    std::vector<int> idx(tgt_order.begin() + static_cast<std::ptrdiff_t>(tgt_cursor),
                         tgt_order.begin() + static_cast<std::ptrdiff_t>(tgt_cursor + m));
    tgt_cursor += m;
    Batch b;
    b.inputs = target.points.select_rows(idx);
    b.labels.reserve(idx.size());
    for (int i : idx) b.labels.push_back(target.labels[static_cast<std::size_t>(i)]);
    return b;
  };

  int step = 0;
  int epoch = 0;
  auto run_epoch = [&](bool pretrain) {
    const auto batches = stratified_batches(source, cfg.batch_size, rng_src);
    for (const auto& idx : batches) {
      const Batch sb = make_src_batch(idx);
      StepRecord rec;
      if (pretrain || cfg.method == Method::source_only) {
        TrainConfig sup = cfg;
        sup.method = Method::source_only;
        sup.eta3 = 0.0;
        rec = training_step(res.params, sb, sb, sup, st, rng_mix);
      } else {
        const Batch tb = next_tgt_batch();
        rec = training_step(res.params, sb, tb, cfg, st, rng_mix);
      }
      rec.step = step++;
      res.history.steps.push_back(rec);
    }
    const EvalResult ev = evaluate(res.params, target);
    res.history.epochs.push_back({epoch++, ev.accuracy, ev.per_class});
  };

  for (int e = 0; e < cfg.pretrain_epochs; ++e) run_epoch(true);
  for (int e = 0; e < cfg.epochs; ++e) run_epoch(false);
  return res;
}

}  // namespace otda
