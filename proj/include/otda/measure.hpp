#pragma once

// Weighted point clouds, ground-cost matrices and transport plans.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otda/matrix.hpp"

namespace otda {

struct DiscreteMeasure {
  Matrix points;            // n x d
  std::vector<double> weights;
  std::vector<int> labels;  // empty when absent
  Matrix one_hot;           // 0x0 when absent

  std::size_t size() const { return points.rows; }
  std::size_t dim() const { return points.cols; }
  bool has_labels() const { return !labels.empty(); }

  double total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  bool is_probability() const { return std::abs(total_mass() - 1.0) <= 1e-12; }

  void validate() const {
    require(weights.size() == points.rows, "measure: weights/points length mismatch");
    for (double w : weights) require(w >= 0.0, "measure: negative weight");
    if (!labels.empty())
      require(labels.size() == points.rows, "measure: labels/points length mismatch");
    if (!one_hot.empty()) {
      require(one_hot.rows == points.rows, "measure: one_hot/points length mismatch");
      for (std::size_t i = 0; i < one_hot.rows; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < one_hot.cols; ++k) s += one_hot(i, k);
        require(std::abs(s - 1.0) <= 1e-9, "measure: one_hot row does not sum to 1");
      }
    }
  }

  static DiscreteMeasure uniform(Matrix pts) {
    DiscreteMeasure m;
    const std::size_t n = pts.rows;
    m.points = std::move(pts);
    m.weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
    return m;
  }

  DiscreteMeasure restricted_to(const std::vector<int>& idx) const {
    DiscreteMeasure out;
    out.points = points.select_rows(idx);
    out.weights.assign(idx.size(), idx.empty() ? 0.0 : 1.0 / static_cast<double>(idx.size()));
    if (!labels.empty()) {
      out.labels.reserve(idx.size());
      for (int i : idx) out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    if (!one_hot.empty()) out.one_hot = one_hot.select_rows(idx);
    return out;
  }
};

struct CostMatrix {
  Matrix values;           // n_source x n_target
  std::string metric_tag;

  double max_value() const {
    double m = 0.0;
    for (double v : values.data) m = std::max(m, v);
    return m;
  }

  void validate() const {
    for (double v : values.data)
      require(std::isfinite(v), "cost matrix: non-finite entry");
  }
};

inline CostMatrix squared_euclidean_cost(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "cost: point dimensions differ");
  CostMatrix c;
  c.values = Matrix(a.rows, b.rows);
  c.metric_tag = "sqeuclidean";
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      c.values(i, j) = squared_distance(a, i, b, j);
  return c;
}

inline CostMatrix euclidean_cost(const Matrix& a, const Matrix& b) {
  CostMatrix c = squared_euclidean_cost(a, b);
  c.metric_tag = "euclidean";
  for (double& v : c.values.data) v = std::sqrt(v);
  return c;
}

struct TransportPlan {
  Matrix coupling;                 // n_source x n_target, entries >= 0
  double objective_value = 0.0;    // <coupling, cost>
  int iterations = 0;
  bool converged = false;
  double marginal_violation = 0.0; // L1 against the requested marginals
};

struct SolverConfig {
  double epsilon = 0.1;     // entropic regularization
  double tau = 1.0;         // marginal relaxation (unbalanced only)
  int max_iterations = 1000;
  double tolerance = 1e-7;
  bool log_domain = true;

  void validate() const {
    require(max_iterations >= 1, "solver config: max_iterations < 1");
    require(tolerance > 0.0, "solver config: tolerance <= 0");
  }
};

inline double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
  require(plan.coupling.same_shape(cost.values), "transport_cost: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < plan.coupling.data.size(); ++k)
    s += plan.coupling.data[k] * cost.values.data[k];
  return s;
}

inline double plan_mass(const TransportPlan& plan) {
  double s = 0.0;
  for (double v : plan.coupling.data) s += v;
  return s;
}

// Generalized KL on unnormalized nonnegative vectors, with 0 log 0 = 0.
inline double generalized_kl(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), "generalized_kl: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] > 0.0) {
      require(v[i] > 0.0, "generalized_kl: u > 0 where v = 0");
      s += u[i] * std::log(u[i] / v[i]) - u[i] + v[i];
    } else {
      s += v[i];
    }
  }
  return s;
}

inline std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> r(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) r[i] += m(i, j);
  return r;
}

inline std::vector<double> col_sums(const Matrix& m) {
  std::vector<double> c(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) c[j] += m(i, j);
  return c;
}

}  // namespace otda
