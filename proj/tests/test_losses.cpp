#include <doctest.h>

#include <cmath>

#include "otda/losses.hpp"
#include "otda/rng.hpp"

using namespace otda;

namespace {

// Random interior simplex point with entries clipped up to at least lo.
std::vector<double> random_simplex(std::size_t k, Rng& rng, double lo = 1e-6) {
  std::vector<double> v(k);
  double s = 0.0;
  for (double& x : v) {
    x = -std::log(uniform_double_open(rng));
    s += x;
  }
  for (double& x : v) x = std::max(x / s, lo);
  s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

TEST_CASE("cross_entropy hand values") {
  std::vector<double> onehot{1.0, 0.0};
  CHECK(cross_entropy(onehot, onehot, 1e-7) == doctest::Approx(0.0).epsilon(1e-6));

  std::vector<double> pred{0.9, 0.1};
  CHECK(cross_entropy(onehot, pred, 1e-7) == doctest::Approx(0.10536).epsilon(1e-4));

  std::vector<double> flipped{0.0, 1.0};
  CHECK(cross_entropy(onehot, flipped, 1e-7) == doctest::Approx(16.1181).epsilon(1e-4));
}

TEST_CASE("cross_entropy input validation") {
  std::vector<double> q{1.0, 0.0}, p3{0.3, 0.3, 0.4};
  CHECK_THROWS_AS(cross_entropy(q, p3, 1e-7), std::invalid_argument);
  std::vector<double> neg{-0.1, 1.1};
  CHECK_THROWS_AS(cross_entropy(q, neg, 1e-7), std::invalid_argument);
}

TEST_CASE("symmetric_cross_entropy hand values") {
  LossWeights w;  // eta4 = 0.01, eta5 = 1
  std::vector<double> q{1.0, 0.0};
  CHECK(symmetric_cross_entropy(q, q, w) == doctest::Approx(0.0).epsilon(1e-9));

  std::vector<double> p{0.5, 0.5};
  // 0.01 * log 2 + (-(0.5 log 1 + 0.5 log 1e-7))
  CHECK(symmetric_cross_entropy(q, p, w) == doctest::Approx(8.06597).epsilon(1e-5));

  LossWeights w0 = w;
  w0.eta5 = 0.0;
  CHECK(symmetric_cross_entropy(q, p, w0) ==
        doctest::Approx(w.eta4 * cross_entropy(q, p, w.clip_floor)).epsilon(1e-12));
}

TEST_CASE("Gibbs inequality holds on clipped simplex samples") {
  Rng rng = make_rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    auto q = random_simplex(4, rng);
    auto qp = random_simplex(4, rng);
    CHECK(cross_entropy(q, qp, 1e-7) >= cross_entropy(q, q, 1e-7) - 1e-9);
  }
}

TEST_CASE("symmetric_cross_entropy is permutation invariant") {
  Rng rng = make_rng(37);
  LossWeights w;
  for (int rep = 0; rep < 50; ++rep) {
    auto q = random_simplex(5, rng);
    auto p = random_simplex(5, rng);
    auto perm = random_permutation(5, rng);
    std::vector<double> qp(5), pp(5);
    for (std::size_t i = 0; i < 5; ++i) {
      qp[i] = q[static_cast<std::size_t>(perm[i])];
      pp[i] = p[static_cast<std::size_t>(perm[i])];
    }
    CHECK(symmetric_cross_entropy(q, p, w) ==
          doctest::Approx(symmetric_cross_entropy(qp, pp, w)).epsilon(1e-12));
  }
}

TEST_CASE("build_joint_cost hand value and eta2=0 reduction") {
  Matrix se(1, 2), te(1, 2), y(1, 2), pred(1, 2);
  se(0, 0) = 0.0;
  se(0, 1) = 0.0;
  te(0, 0) = 3.0;
  te(0, 1) = 4.0;
  y(0, 0) = 1.0;
  y(0, 1) = 0.0;
  pred(0, 0) = 0.5;
  pred(0, 1) = 0.5;

  LossWeights w;
  w.eta1 = 0.1;
  w.eta2 = 0.1;
  auto c = build_joint_cost(se, y, te, pred, w, LabelLoss::sce);
  CHECK(c.values(0, 0) == doctest::Approx(3.30660).epsilon(1e-5));

  w.eta2 = 0.0;
  auto c2 = build_joint_cost(se, y, te, pred, w, LabelLoss::sce);
  CHECK(c2.values(0, 0) == doctest::Approx(0.1 * 25.0).epsilon(1e-12));

  // identical embeddings with a matching one-hot prediction cost nothing
  auto c3 = build_joint_cost(se, y, se, y, w, LabelLoss::sce);
  CHECK(c3.values(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("build_joint_cost properties") {
  Rng rng = make_rng(41);
  const std::size_t ns = 4, nt = 5, d = 3, K = 3;
  Matrix se(ns, d), te(nt, d), y(ns, K), pred(nt, K);
  for (double& v : se.data) v = normal_double(rng);
  for (double& v : te.data) v = normal_double(rng);
  for (std::size_t i = 0; i < ns; ++i) {
    auto q = random_simplex(K, rng);
    for (std::size_t k = 0; k < K; ++k) y(i, k) = q[k];
  }
  for (std::size_t j = 0; j < nt; ++j) {
    auto q = random_simplex(K, rng);
    for (std::size_t k = 0; k < K; ++k) pred(j, k) = q[k];
  }
  LossWeights w;

  SUBCASE("translation invariance in embeddings") {
    auto base = build_joint_cost(se, y, te, pred, w, LabelLoss::sce);
    Matrix se2 = se, te2 = te;
    const double shift[3] = {1.5, -2.0, 0.25};
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t k = 0; k < d; ++k) se2(i, k) += shift[k];
    for (std::size_t j = 0; j < nt; ++j)
      for (std::size_t k = 0; k < d; ++k) te2(j, k) += shift[k];
    auto shifted = build_joint_cost(se2, y, te2, pred, w, LabelLoss::sce);
    for (std::size_t t = 0; t < base.values.data.size(); ++t)
      CHECK(std::abs(base.values.data[t] - shifted.values.data[t]) < 1e-9);
  }

  SUBCASE("monotone in eta1 and eta2") {
    auto base = build_joint_cost(se, y, te, pred, w, LabelLoss::ce);
    LossWeights up = w;
    up.eta1 = w.eta1 * 2.0;
    auto more1 = build_joint_cost(se, y, te, pred, up, LabelLoss::ce);
    up = w;
    up.eta2 = w.eta2 * 3.0;
    auto more2 = build_joint_cost(se, y, te, pred, up, LabelLoss::ce);
    for (std::size_t t = 0; t < base.values.data.size(); ++t) {
      CHECK(more1.values.data[t] >= base.values.data[t] - 1e-12);
      CHECK(more2.values.data[t] >= base.values.data[t] - 1e-12);
    }
  }

  SUBCASE("all entries finite and nonnegative") {
    auto c = build_joint_cost(se, y, te, pred, w, LabelLoss::sce);
    for (double v : c.values.data) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }

  SUBCASE("NaN embeddings rejected") {
    Matrix bad = se;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(build_joint_cost(bad, y, te, pred, w, LabelLoss::ce), std::invalid_argument);
  }
}
