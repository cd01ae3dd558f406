#pragma once

// MixUp interpolation and the upper-bound check for the Wasserstein distance
// between neighbor distributions: W(mu~, nu~) <= E_{l,l'} W(mu~_l, nu~_l').

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "otda/exact.hpp"
#include "otda/matrix.hpp"
#include "otda/measure.hpp"
#include "otda/rng.hpp"

namespace otda {

struct MixupConfig {
  double alpha = 0.2;          // Beta(alpha, alpha) parameter
  bool per_batch_lambda = true;
  std::uint64_t seed = 0;

  void validate() const { require(alpha > 0.0, "mixup: alpha must be > 0"); }
};

inline double sample_lambda(const MixupConfig& cfg, Rng& rng) {
  cfg.validate();
  return beta_symmetric(rng, cfg.alpha);
}

inline void check_permutation(const std::vector<int>& perm, std::size_t n) {
  require(perm.size() == n, "mixup: permutation length mismatch");
  std::vector<char> seen(n, 0);
  for (int p : perm) {
    require(p >= 0 && static_cast<std::size_t>(p) < n && !seen[static_cast<std::size_t>(p)],
            "mixup: not a permutation");
    seen[static_cast<std::size_t>(p)] = 1;
  }
}

struct MixedBatch {
  Matrix inputs;
  Matrix labels;
};

inline MixedBatch mix_source_batch(const Matrix& X, const Matrix& Y, double lambda,
                                   const std::vector<int>& perm) {
  require(lambda >= 0.0 && lambda <= 1.0, "mixup: lambda outside [0,1]");
  require(X.rows == Y.rows, "mixup: batch size mismatch");
  check_permutation(perm, X.rows);
  MixedBatch out;
  out.inputs = Matrix(X.rows, X.cols);
  out.labels = Matrix(Y.rows, Y.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const std::size_t p = static_cast<std::size_t>(perm[i]);
    for (std::size_t k = 0; k < X.cols; ++k)
      out.inputs(i, k) = lambda * X(i, k) + (1.0 - lambda) * X(p, k);
    for (std::size_t k = 0; k < Y.cols; ++k)
      out.labels(i, k) = lambda * Y(i, k) + (1.0 - lambda) * Y(p, k);
  }
  return out;
}

// Target side mixes inputs only; the pseudo-label is the network prediction
// on the mixed input, computed downstream.
inline Matrix mix_target_batch(const Matrix& X, double lambda, const std::vector<int>& perm) {
  require(lambda >= 0.0 && lambda <= 1.0, "mixup: lambda outside [0,1]");
  check_permutation(perm, X.rows);
  Matrix out(X.rows, X.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const std::size_t p = static_cast<std::size_t>(perm[i]);
    for (std::size_t k = 0; k < X.cols; ++k)
      out(i, k) = lambda * X(i, k) + (1.0 - lambda) * X(p, k);
  }
  return out;
}

enum class GroundMetric { euclidean, sqeuclidean };

namespace detail {

// All n^2 interpolations l x_i + (1-l) x_j with product weights.
inline void append_neighbor_atoms(const DiscreteMeasure& m, double lambda, double scale,
                                  Matrix& pts, std::vector<double>& wts, std::size_t& cursor) {
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < m.dim(); ++k)
        pts(cursor, k) = lambda * m.points(i, k) + (1.0 - lambda) * m.points(j, k);
      wts[cursor] = scale * m.weights[i] * m.weights[j];
      ++cursor;
    }
}

inline double exact_w(const Matrix& pa, const std::vector<double>& wa, const Matrix& pb,
                      const std::vector<double>& wb, GroundMetric metric) {
  const CostMatrix c = metric == GroundMetric::euclidean
                           ? euclidean_cost(pa, pb)
                           : squared_euclidean_cost(pa, pb);
  const auto res = transportation_simplex(wa, wb, c.values);
  double obj = 0.0;
  for (std::size_t t = 0; t < res.flow.data.size(); ++t)
    obj += res.flow.data[t] * c.values.data[t];
  return obj;
}

}  // namespace detail

struct Prop1Result {
  double lhs = 0.0;     // W between the lambda-mixture neighbor measures
  double rhs = 0.0;     // Monte-Carlo mean of W(mu~_l, nu~_l')
  double stderr_ = 0.0; // standard error of the rhs mean
  int lambda_draws = 0;
  bool shared_lambda = false;
  std::string metric_tag;
};

inline Prop1Result proposition1_check(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const MixupConfig& cfg, int num_lambda_draws,
                                      GroundMetric metric = GroundMetric::euclidean,
                                      bool shared_lambda = false) {
  mu.validate();
  nu.validate();
  cfg.validate();
  require(num_lambda_draws >= 1, "proposition1_check: need at least one lambda draw");
  require(mu.size() <= 32 && nu.size() <= 32, "proposition1_check: support too large for exact solve");
  require(mu.dim() == nu.dim(), "proposition1_check: point dimensions differ");
  const std::size_t T = static_cast<std::size_t>(num_lambda_draws);
  require(T * mu.size() * mu.size() <= 46000 && T * nu.size() * nu.size() <= 46000,
          "proposition1_check: mixed support too large for exact solve");
  require(mu.is_probability() && nu.is_probability(),
          "proposition1_check: inputs must be probability measures");

  Rng rng = make_rng(cfg.seed, 7);
  std::vector<double> lam(T), lam_prime(T);
  for (std::size_t t = 0; t < T; ++t) lam[t] = sample_lambda(cfg, rng);
  if (shared_lambda)
    lam_prime = lam;
  else
    for (std::size_t t = 0; t < T; ++t) lam_prime[t] = sample_lambda(cfg, rng);

  // lhs: mixtures over the sampled lambda sets, one support per side.
  const std::size_t na = mu.size() * mu.size() * T;
  const std::size_t nb = nu.size() * nu.size() * T;
  Matrix pa(na, mu.dim()), pb(nb, nu.dim());
  std::vector<double> wa(na), wb(nb);
  std::size_t ca = 0, cb = 0;
  for (std::size_t t = 0; t < T; ++t) {
    detail::append_neighbor_atoms(mu, lam[t], 1.0 / static_cast<double>(T), pa, wa, ca);
    detail::append_neighbor_atoms(nu, lam_prime[t], 1.0 / static_cast<double>(T), pb, wb, cb);
  }

  Prop1Result res;
  res.lambda_draws = num_lambda_draws;
  res.shared_lambda = shared_lambda;
  res.metric_tag = metric == GroundMetric::euclidean ? "euclidean" : "sqeuclidean";
  res.lhs = detail::exact_w(pa, wa, pb, wb, metric);

  // rhs: per-pair values on the n^2-atom supports.
  std::vector<double> terms(T);
  Matrix qa(mu.size() * mu.size(), mu.dim()), qb(nu.size() * nu.size(), nu.dim());
  std::vector<double> va(qa.rows), vb(qb.rows);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t ka = 0, kb = 0;
    detail::append_neighbor_atoms(mu, lam[t], 1.0, qa, va, ka);
    detail::append_neighbor_atoms(nu, lam_prime[t], 1.0, qb, vb, kb);
    terms[t] = detail::exact_w(qa, va, qb, vb, metric);
  }
  double mean = 0.0;
  for (double v : terms) mean += v;
  mean /= static_cast<double>(T);
  double var = 0.0;
  for (double v : terms) var += (v - mean) * (v - mean);
  var = T > 1 ? var / static_cast<double>(T - 1) : 0.0;
  res.rhs = mean;
  res.stderr_ = std::sqrt(var / static_cast<double>(T));
  return res;
}

}  // namespace otda
