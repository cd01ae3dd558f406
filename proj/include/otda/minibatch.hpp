#pragma once

// Minibatch estimators of the transfer term, index-embedded aggregated plans
// and the cross-class diagnostics used for the negative-transfer pictures.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otda/exact.hpp"
#include "otda/measure.hpp"
#include "otda/rng.hpp"
#include "otda/sinkhorn.hpp"

namespace otda {

struct MinibatchSpec {
  int batch_size = 1;   // m
  int num_draws = 1;    // k
  std::uint64_t seed = 0;
  bool stratified_source = false;

  void validate() const {
    require(batch_size >= 1, "minibatch: m < 1");
    require(num_draws >= 1, "minibatch: k < 1");
  }
};

struct PlanDiagnostics {
  double total_mass = 0.0;
  double cross_class_fraction = 0.0;
  int num_connections = 0;
};

enum class SolverKind { exact, sinkhorn, unbalanced };

inline std::string solver_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::exact: return "exact";
    case SolverKind::sinkhorn: return "sinkhorn";
    case SolverKind::unbalanced: return "uot";
  }
  return "?";
}

inline TransportPlan solve_ot(SolverKind kind, const DiscreteMeasure& a, const DiscreteMeasure& b,
                              const CostMatrix& cost, const SolverConfig& cfg) {
  switch (kind) {
    case SolverKind::exact: return exact_ot(a, b, cost);
    case SolverKind::sinkhorn: return sinkhorn(a, b, cost, cfg);
    case SolverKind::unbalanced: return unbalanced_sinkhorn(a, b, cost, cfg);
  }
  throw std::invalid_argument("solve_ot: unknown solver kind");
}

using CostBuilder =
    std::function<CostMatrix(const std::vector<int>&, const std::vector<int>&)>;

namespace detail {

inline std::vector<int> stratified_draw(const std::vector<int>& labels, int m, Rng& rng) {
  int K = 0;
  for (int l : labels) K = std::max(K, l + 1);
  require(K >= 1 && m % K == 0, "minibatch: class count must divide batch size for stratified draws");
  const int quota = m / K;
  std::vector<std::vector<int>> per_class(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < labels.size(); ++i)
    per_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < K; ++k) {
    auto& idx = per_class[static_cast<std::size_t>(k)];
    require(static_cast<int>(idx.size()) >= quota, "minibatch: class smaller than stratified quota");
    shuffle(idx, rng);
    for (int q = 0; q < quota; ++q) out.push_back(idx[static_cast<std::size_t>(q)]);
  }
  return out;
}

struct Draw {
  std::vector<int> src_idx;
  std::vector<int> tgt_idx;
};

inline Draw make_draw(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                      const MinibatchSpec& spec, int draw_index) {
  Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(draw_index));
  const std::size_t m = static_cast<std::size_t>(spec.batch_size);
  Draw d;
  if (spec.stratified_source) {
    require(src.has_labels(), "minibatch: stratified draws need source labels");
    d.src_idx = stratified_draw(src.labels, spec.batch_size, rng);
  } else {
    d.src_idx = sample_without_replacement(src.size(), m, rng);
  }
  d.tgt_idx = sample_without_replacement(tgt.size(), m, rng);
  return d;
}

}  // namespace detail

// Monte-Carlo mean over num_draws of the solver objective between
// uniform-weighted size-m sub-measures. Per-draw values are exposed for
// standard-error computations.
inline double minibatch_transfer_estimate(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                                          const CostBuilder& cost_builder, SolverKind solver,
                                          const SolverConfig& cfg, const MinibatchSpec& spec,
                                          std::vector<double>* per_draw = nullptr) {
  spec.validate();
  require(src.size() >= 1 && tgt.size() >= 1, "minibatch: empty measure");
  require(static_cast<std::size_t>(spec.batch_size) <= src.size() &&
              static_cast<std::size_t>(spec.batch_size) <= tgt.size(),
          "minibatch: m exceeds support size");

  if (per_draw) per_draw->clear();
  double acc = 0.0;
  for (int t = 0; t < spec.num_draws; ++t) {
    const auto draw = detail::make_draw(src, tgt, spec, t);
    const auto a = src.restricted_to(draw.src_idx);
    const auto b = tgt.restricted_to(draw.tgt_idx);
    const CostMatrix c = cost_builder(draw.src_idx, draw.tgt_idx);
    double value = 0.0;
    try {
      value = solve_ot(solver, a, b, c, cfg).objective_value;
    } catch (const std::exception& e) {
      throw std::runtime_error("minibatch draw " + std::to_string(t) + ": " + e.what());
    }
    acc += value;
    if (per_draw) per_draw->push_back(value);
  }
  return acc / static_cast<double>(spec.num_draws);
}

// Average of per-draw plans, each embedded at its global index positions.
inline TransportPlan aggregate_plan(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                                    const CostMatrix& full_cost, SolverKind solver,
                                    const SolverConfig& cfg, const MinibatchSpec& spec) {
  spec.validate();
  require(full_cost.values.rows == src.size() && full_cost.values.cols == tgt.size(),
          "aggregate_plan: cost dimensions do not match supports");
  require(static_cast<std::size_t>(spec.batch_size) <= src.size() &&
              static_cast<std::size_t>(spec.batch_size) <= tgt.size(),
          "aggregate_plan: m exceeds support size");

  TransportPlan agg;
  agg.coupling = Matrix(src.size(), tgt.size());
  bool all_converged = true;
  const std::size_t m = static_cast<std::size_t>(spec.batch_size);
  for (int t = 0; t < spec.num_draws; ++t) {
    const auto draw = detail::make_draw(src, tgt, spec, t);
    const auto a = src.restricted_to(draw.src_idx);
    const auto b = tgt.restricted_to(draw.tgt_idx);
    CostMatrix c;
    c.values = Matrix(m, m);
    c.metric_tag = full_cost.metric_tag;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        c.values(i, j) = full_cost.values(static_cast<std::size_t>(draw.src_idx[i]),
                                          static_cast<std::size_t>(draw.tgt_idx[j]));
    TransportPlan plan;
    try {
      plan = solve_ot(solver, a, b, c, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("minibatch draw " + std::to_string(t) + ": " + e.what());
    }
    all_converged = all_converged && plan.converged;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        agg.coupling(static_cast<std::size_t>(draw.src_idx[i]),
                     static_cast<std::size_t>(draw.tgt_idx[j])) += plan.coupling(i, j);
  }
  for (double& v : agg.coupling.data) v /= static_cast<double>(spec.num_draws);
  agg.iterations = spec.num_draws;
  agg.converged = all_converged;
  agg.objective_value = transport_cost(agg, full_cost);
  return agg;
}

inline PlanDiagnostics cross_class_mass(const TransportPlan& plan,
                                        const std::vector<int>& src_labels,
                                        const std::vector<int>& tgt_labels) {
  require(!src_labels.empty() && !tgt_labels.empty(), "cross_class_mass: missing labels");
  require(src_labels.size() == plan.coupling.rows && tgt_labels.size() == plan.coupling.cols,
          "cross_class_mass: label length mismatch");
  PlanDiagnostics d;
  double cross = 0.0;
  for (std::size_t i = 0; i < plan.coupling.rows; ++i)
    for (std::size_t j = 0; j < plan.coupling.cols; ++j) {
      const double v = plan.coupling(i, j);
      d.total_mass += v;
      if (src_labels[i] != tgt_labels[j]) cross += v;
      if (v > 1e-8) ++d.num_connections;
    }
  d.cross_class_fraction = d.total_mass > 0.0 ? cross / d.total_mass : 0.0;
  return d;
}

}  // namespace otda
