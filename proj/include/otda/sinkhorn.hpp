#pragma once

// Entropic OT solvers. The entropy reference measure is a (x) b for both the
// balanced and the unbalanced problem, so the tau -> 0 limit of the
// unbalanced plan is exactly a_i * b_j * exp(-C_ij / eps).
//
// Balanced:   min <pi,C> + eps KL(pi | a(x)b)  s.t. marginals (a, b)
// Unbalanced: min <pi,C> + eps KL(pi | a(x)b) + tau (KL(pi1|a) + KL(pi^T 1|b))
//
// Fixed point in potentials (f, g), with damping d = tau/(tau+eps) for the
// unbalanced case and d = 1 for the balanced case:
//   f_i = -d eps LSE_j[ log b_j + (g_j - C_ij)/eps ]
//   g_j = -d eps LSE_i[ log a_i + (f_i - C_ij)/eps ]

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "otda/measure.hpp"

namespace otda {

namespace detail {

inline std::vector<double> safe_log(const std::vector<double>& w) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    out[i] = w[i] > 0.0 ? std::log(w[i]) : -std::numeric_limits<double>::infinity();
  return out;
}

// softmin_i(f) over j:  -eps * LSE_j[ logw_j + (pot_j - C_ij)/eps ], per row.
inline void softmin_rows(const Matrix& cost, const std::vector<double>& logw,
                         const std::vector<double>& pot, double eps,
                         std::vector<double>& out) {
  const std::size_t m = cost.rows, n = cost.cols;
  out.assign(m, 0.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < m; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      t[j] = logw[j] + (pot[j] - cost(i, j)) / eps;
      hi = std::max(hi, t[j]);
    }
    if (!std::isfinite(hi)) {
      out[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (std::isfinite(t[j])) s += std::exp(t[j] - hi);
    out[i] = -eps * (hi + std::log(s));
  }
}

inline void softmin_cols(const Matrix& cost, const std::vector<double>& logw,
                         const std::vector<double>& pot, double eps,
                         std::vector<double>& out) {
  const std::size_t m = cost.rows, n = cost.cols;
  out.assign(n, -std::numeric_limits<double>::infinity());
  std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
  Matrix t(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      t(i, j) = logw[i] + (pot[i] - cost(i, j)) / eps;
      hi[j] = std::max(hi[j], t(i, j));
    }
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (std::isfinite(t(i, j))) s[j] += std::exp(t(i, j) - hi[j]);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = std::isfinite(hi[j]) ? -eps * (hi[j] + std::log(s[j]))
                                  : std::numeric_limits<double>::infinity();
}

inline Matrix plan_from_potentials(const Matrix& cost, const std::vector<double>& loga,
                                   const std::vector<double>& logb,
                                   const std::vector<double>& f, const std::vector<double>& g,
                                   double eps) {
  Matrix pi(cost.rows, cost.cols);
  for (std::size_t i = 0; i < cost.rows; ++i)
    for (std::size_t j = 0; j < cost.cols; ++j)
      pi(i, j) = std::exp(loga[i] + logb[j] + (f[i] + g[j] - cost(i, j)) / eps);
  return pi;
}

inline void check_finite(const std::vector<double>& pot, const char* who) {
  for (double x : pot)
    if (std::isnan(x)) throw std::runtime_error(std::string(who) + ": iterates diverged (non-finite scaling)");
}

inline void check_all_finite(const std::vector<double>& v, const char* who) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error(std::string(who) + ": iterates diverged (non-finite scaling)");
}

// Gibbs kernel against the reference a (x) b.
inline Matrix gibbs_kernel(const Matrix& cost, const std::vector<double>& aw,
                           const std::vector<double>& bw, double eps) {
  Matrix k(cost.rows, cost.cols);
  for (std::size_t i = 0; i < cost.rows; ++i)
    for (std::size_t j = 0; j < cost.cols; ++j)
      k(i, j) = aw[i] * bw[j] * std::exp(-cost(i, j) / eps);
  return k;
}

}  // namespace detail

inline TransportPlan sinkhorn(const DiscreteMeasure& a, const DiscreteMeasure& b,
                              const CostMatrix& cost, const SolverConfig& cfg) {
  a.validate();
  b.validate();
  cost.validate();
  cfg.validate();
  require(cfg.epsilon > 0.0, "sinkhorn: epsilon must be > 0");
  require(cost.values.rows == a.size() && cost.values.cols == b.size(),
          "sinkhorn: cost dimensions do not match supports");
  require(a.is_probability() && b.is_probability(),
          "sinkhorn: inputs must be probability measures");

  const double eps = cfg.epsilon;
  TransportPlan plan;

  if (cfg.log_domain) {
    const auto loga = detail::safe_log(a.weights);
    const auto logb = detail::safe_log(b.weights);
    std::vector<double> f(a.size(), 0.0), g(b.size(), 0.0), tmin;

    // Epsilon scaling: for small eps the plain iteration zigzags with a
    // near-unit contraction factor, so anneal from 0.1 max(C) down to the
    // target, carrying the potentials. The fixed point at the final eps is
    // unchanged; max_iterations bounds the final phase.
    std::vector<double> levels;
    const double max_c = cost.max_value();
    if (max_c > 0.0 && eps < 0.05 * max_c)
      for (double e = 0.1 * max_c; e > 1.3 * eps; e *= 0.7) levels.push_back(e);
    levels.push_back(eps);

    int total_iters = 0;
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const double lev = levels[li];
      const bool final_level = li + 1 == levels.size();
      const double tol = final_level ? cfg.tolerance : std::max(cfg.tolerance * 0.1, 1e-9);
      const int budget = final_level ? cfg.max_iterations : std::min(cfg.max_iterations, 20000);
      detail::softmin_cols(cost.values, loga, f, lev, tmin);
      for (int it = 0; it < budget; ++it) {
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = tmin[j];
        detail::softmin_rows(cost.values, logb, g, lev, f);
        detail::check_finite(f, "sinkhorn");
        detail::softmin_cols(cost.values, loga, f, lev, tmin);
        // Rows are exact after the f update; the column residual is cheap from tmin.
        double viol = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j)
          if (b.weights[j] > 0.0)
            viol += std::abs(b.weights[j] * (std::exp((g[j] - tmin[j]) / lev) - 1.0));
        ++total_iters;
        if (final_level) plan.marginal_violation = viol;
        if (viol < tol) {
          if (final_level) plan.converged = true;
          break;
        }
      }
    }
    plan.iterations = total_iters;
    plan.coupling = detail::plan_from_potentials(cost.values, loga, logb, f, g, eps);
  } else {
    const Matrix k = detail::gibbs_kernel(cost.values, a.weights, b.weights, eps);
    std::vector<double> u(a.size(), 1.0), v(b.size(), 1.0), kv(a.size()), ktu(b.size());
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
      ktu.assign(b.size(), 0.0);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) ktu[j] += k(i, j) * u[i];
      for (std::size_t j = 0; j < b.size(); ++j)
        v[j] = b.weights[j] > 0.0 ? b.weights[j] / ktu[j] : 0.0;
      kv.assign(a.size(), 0.0);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) kv[i] += k(i, j) * v[j];
      for (std::size_t i = 0; i < a.size(); ++i)
        u[i] = a.weights[i] > 0.0 ? a.weights[i] / kv[i] : 0.0;
      detail::check_all_finite(u, "sinkhorn");
      detail::check_all_finite(v, "sinkhorn");
      double viol = 0.0;
      for (std::size_t j = 0; j < b.size(); ++j) {
        double cs = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) cs += u[i] * k(i, j) * v[j];
        viol += std::abs(cs - b.weights[j]);
      }
      plan.marginal_violation = viol;
      if (viol < cfg.tolerance) {
        plan.converged = true;
        ++it;
        break;
      }
    }
    plan.iterations = it;
    plan.coupling = Matrix(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) plan.coupling(i, j) = u[i] * k(i, j) * v[j];
  }

  plan.objective_value = transport_cost(plan, cost);
  return plan;
}

inline TransportPlan unbalanced_sinkhorn(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                         const CostMatrix& cost, const SolverConfig& cfg) {
  a.validate();
  b.validate();
  cost.validate();
  cfg.validate();
  require(cfg.epsilon > 0.0, "unbalanced_sinkhorn: epsilon must be > 0");
  require(cfg.tau > 0.0, "unbalanced_sinkhorn: tau must be > 0");
  require(cost.values.rows == a.size() && cost.values.cols == b.size(),
          "unbalanced_sinkhorn: cost dimensions do not match supports");

  const double eps = cfg.epsilon;
  const double damp = cfg.tau / (cfg.tau + eps);
  TransportPlan plan;

  if (cfg.log_domain) {
    const auto loga = detail::safe_log(a.weights);
    const auto logb = detail::safe_log(b.weights);
    std::vector<double> f(a.size(), 0.0), g(b.size(), 0.0), sm, tm;

    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
      double change = 0.0;
      detail::softmin_cols(cost.values, loga, f, eps, tm);
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double next = damp * tm[j];
        change = std::max(change, std::abs(next - g[j]));
        g[j] = next;
      }
      detail::softmin_rows(cost.values, logb, g, eps, sm);
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double next = damp * sm[i];
        change = std::max(change, std::abs(next - f[i]));
        f[i] = next;
      }
      detail::check_finite(f, "unbalanced_sinkhorn");
      detail::check_finite(g, "unbalanced_sinkhorn");
      if (change < cfg.tolerance) {
        plan.converged = true;
        ++it;
        break;
      }
    }
    plan.iterations = it;
    plan.coupling = detail::plan_from_potentials(cost.values, loga, logb, f, g, eps);
  } else {
    const Matrix k = detail::gibbs_kernel(cost.values, a.weights, b.weights, eps);
    std::vector<double> u(a.size(), 1.0), v(b.size(), 1.0), kv(a.size()), ktu(b.size());
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
      double change = 0.0;
      ktu.assign(b.size(), 0.0);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) ktu[j] += k(i, j) * u[i];
      for (std::size_t j = 0; j < b.size(); ++j) {
        const double next = ktu[j] > 0.0 ? std::pow(b.weights[j] / ktu[j], damp) : 0.0;
        change = std::max(change, eps * std::abs(std::log(std::max(next, 1e-300)) -
                                                 std::log(std::max(v[j], 1e-300))));
        v[j] = next;
      }
      kv.assign(a.size(), 0.0);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) kv[i] += k(i, j) * v[j];
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double next = kv[i] > 0.0 ? std::pow(a.weights[i] / kv[i], damp) : 0.0;
        change = std::max(change, eps * std::abs(std::log(std::max(next, 1e-300)) -
                                                 std::log(std::max(u[i], 1e-300))));
        u[i] = next;
      }
      detail::check_all_finite(u, "unbalanced_sinkhorn");
      detail::check_all_finite(v, "unbalanced_sinkhorn");
      if (change < cfg.tolerance) {
        plan.converged = true;
        ++it;
        break;
      }
    }
    plan.iterations = it;
    plan.coupling = Matrix(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) plan.coupling(i, j) = u[i] * k(i, j) * v[j];
  }
  plan.objective_value = transport_cost(plan, cost);

  const auto rs = row_sums(plan.coupling);
  const auto cs = col_sums(plan.coupling);
  double viol = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) viol += std::abs(rs[i] - a.weights[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) viol += std::abs(cs[j] - b.weights[j]);
  plan.marginal_violation = viol;
  return plan;
}

// Total marginal relaxation cost tau * (KL(pi1|a) + KL(pi^T1|b)) of a plan.
inline double marginal_kl_penalty(const TransportPlan& plan, const DiscreteMeasure& a,
                                  const DiscreteMeasure& b) {
  const auto rs = row_sums(plan.coupling);
  const auto cs = col_sums(plan.coupling);
  return generalized_kl(rs, a.weights) + generalized_kl(cs, b.weights);
}

}  // namespace otda
