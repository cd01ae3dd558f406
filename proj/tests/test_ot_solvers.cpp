#include <doctest.h>

#include <cmath>

#include "otda/assignment.hpp"
#include "otda/exact.hpp"
#include "otda/measure.hpp"
#include "otda/rng.hpp"
#include "otda/sinkhorn.hpp"
#include "oracles.hpp"

using namespace otda;

namespace {

DiscreteMeasure uniform_measure(std::size_t n) {
  DiscreteMeasure m;
  m.points = Matrix(n, 1);
  m.weights.assign(n, 1.0 / static_cast<double>(n));
  return m;
}

CostMatrix random_cost(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  CostMatrix c;
  c.values = Matrix(rows, cols);
  c.metric_tag = "random";
  for (double& v : c.values.data) v = scale * uniform_double(rng);
  return c;
}

DiscreteMeasure random_simplex_measure(std::size_t n, Rng& rng) {
  DiscreteMeasure m = uniform_measure(n);
  double s = 0.0;
  for (double& w : m.weights) {
    w = 0.05 + uniform_double(rng);
    s += w;
  }
  for (double& w : m.weights) w /= s;
  return m;
}

}  // namespace

TEST_CASE("exact_ot zero-cost identity cases") {
  auto a = uniform_measure(2);
  a.points(0, 0) = 0.0;
  a.points(1, 0) = 1.0;
  auto c = squared_euclidean_cost(a.points, a.points);
  auto plan = exact_ot(a, a, c);
  CHECK(plan.objective_value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(plan.coupling(0, 0) == doctest::Approx(0.5));
  CHECK(plan.coupling(1, 1) == doctest::Approx(0.5));

  CostMatrix swap;
  swap.values = Matrix(2, 2);
  swap.values(0, 1) = 1.0;
  swap.values(1, 0) = 1.0;
  auto plan2 = exact_ot(a, a, swap);
  CHECK(plan2.objective_value == doctest::Approx(0.0));
  CHECK(plan2.coupling(0, 0) == doctest::Approx(0.5));
  CHECK(plan2.coupling(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("exact_ot matches the assignment oracle on uniform instances") {
  Rng rng = make_rng(42);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int rep = 0; rep < 6; ++rep) {
      auto a = uniform_measure(n);
      auto c = random_cost(n, n, rng);
      const auto plan = exact_ot(a, a, c);
      const double hung = hungarian_assignment(c.values).cost;
      const double brute = oracles::brute_force_assignment(c.values);
      CHECK(hung == doctest::Approx(brute).epsilon(1e-12));  // oracle self-check
      CHECK(plan.objective_value ==
            doctest::Approx(hung / static_cast<double>(n)).epsilon(1e-10));
      CHECK(plan.marginal_violation < 1e-9);
    }
  }
}

TEST_CASE("exact_ot is optimal against feasible competitors") {
  Rng rng = make_rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    auto a = random_simplex_measure(6, rng);
    auto b = random_simplex_measure(9, rng);
    auto c = random_cost(6, 9, rng);
    const auto plan = exact_ot(a, b, c);

    TransportPlan indep;
    indep.coupling = Matrix(6, 9);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 9; ++j) indep.coupling(i, j) = a.weights[i] * b.weights[j];
    CHECK(plan.objective_value <= transport_cost(indep, c) + 1e-12);

    // Random feasible plan: mix the optimum with the independent coupling.
    const double t = uniform_double(rng);
    TransportPlan mixform;
    mixform.coupling = Matrix(6, 9);
    for (std::size_t k = 0; k < mixform.coupling.data.size(); ++k)
      mixform.coupling.data[k] = t * plan.coupling.data[k] + (1 - t) * indep.coupling.data[k];
    CHECK(plan.objective_value <= transport_cost(mixform, c) + 1e-12);
  }
}

TEST_CASE("exact_ot input validation") {
  Rng rng = make_rng(1);
  auto a = uniform_measure(3);
  auto b = uniform_measure(4);
  auto c = random_cost(3, 3, rng);
  CHECK_THROWS_AS(exact_ot(a, b, c), std::invalid_argument);  // dim mismatch
  auto bad = uniform_measure(3);
  bad.weights[0] = 0.9;  // no longer sums to one
  CHECK_THROWS_AS(exact_ot(bad, a, c), std::invalid_argument);
  auto big = uniform_measure(kExactSupportLimit + 1);
  CostMatrix cbig;
  cbig.values = Matrix(kExactSupportLimit + 1, 3);
  CHECK_THROWS_AS(exact_ot(big, a, cbig), std::invalid_argument);
}

TEST_CASE("exact_ot determinism") {
  Rng rng = make_rng(3);
  auto a = random_simplex_measure(7, rng);
  auto b = random_simplex_measure(7, rng);
  auto c = random_cost(7, 7, rng);
  const auto p1 = exact_ot(a, b, c);
  const auto p2 = exact_ot(a, b, c);
  CHECK(p1.objective_value == p2.objective_value);
  CHECK(p1.coupling.data == p2.coupling.data);
}

TEST_CASE("sinkhorn trivial cases") {
  SUBCASE("huge epsilon gives the independent coupling") {
    Rng rng = make_rng(5);
    auto a = random_simplex_measure(5, rng);
    auto b = random_simplex_measure(6, rng);
    auto c = random_cost(5, 6, rng);
    SolverConfig cfg;
    cfg.epsilon = 1e6 * c.max_value();
    auto plan = sinkhorn(a, b, c, cfg);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(std::abs(plan.coupling(i, j) - a.weights[i] * b.weights[j]) < 1e-6);
  }
  SUBCASE("1x1 measure") {
    auto a = uniform_measure(1);
    CostMatrix c;
    c.values = Matrix(1, 1);
    c.values(0, 0) = 3.25;
    SolverConfig cfg;
    auto plan = sinkhorn(a, a, c, cfg);
    CHECK(plan.coupling(0, 0) == doctest::Approx(1.0));
    CHECK(plan.objective_value == doctest::Approx(3.25));
  }
}

TEST_CASE("sinkhorn approaches exact_ot at small epsilon") {
  Rng rng = make_rng(11);
  auto a = uniform_measure(10);
  auto b = uniform_measure(10);
  auto c = random_cost(10, 10, rng);
  const auto exact = exact_ot(a, b, c);
  SolverConfig cfg;
  cfg.epsilon = 1e-3 * c.max_value();
  cfg.max_iterations = 500000;
  cfg.tolerance = 1e-7;
  const auto plan = sinkhorn(a, b, c, cfg);
  CHECK(plan.converged);
  CHECK(plan.marginal_violation < 1e-7);
  CHECK(std::abs(plan.objective_value - exact.objective_value) <=
        0.01 * std::max(exact.objective_value, 1e-12));
}

TEST_CASE("sinkhorn scaling-domain agrees with log-domain at moderate epsilon") {
  Rng rng = make_rng(19);
  auto a = random_simplex_measure(6, rng);
  auto b = random_simplex_measure(7, rng);
  auto c = random_cost(6, 7, rng);
  SolverConfig cfg;
  cfg.epsilon = 0.2 * c.max_value();
  cfg.tolerance = 1e-10;
  cfg.max_iterations = 20000;
  auto p_log = sinkhorn(a, b, c, cfg);
  cfg.log_domain = false;
  auto p_scale = sinkhorn(a, b, c, cfg);
  for (std::size_t k = 0; k < p_log.coupling.data.size(); ++k)
    CHECK(p_log.coupling.data[k] == doctest::Approx(p_scale.coupling.data[k]).epsilon(1e-6));
}

TEST_CASE("sinkhorn rejects bad inputs") {
  auto a = uniform_measure(2);
  CostMatrix c;
  c.values = Matrix(2, 2);
  SolverConfig cfg;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(sinkhorn(a, a, c, cfg), std::invalid_argument);
  cfg.epsilon = 0.1;
  c.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sinkhorn(a, a, c, cfg), std::invalid_argument);
}

TEST_CASE("unbalanced_sinkhorn closed forms") {
  Rng rng = make_rng(13);
  auto a = random_simplex_measure(5, rng);
  auto b = random_simplex_measure(5, rng);

  SUBCASE("zero cost gives the independent coupling at any tau") {
    CostMatrix zero;
    zero.values = Matrix(5, 5);
    for (double tau : {0.05, 1.0, 50.0}) {
      SolverConfig cfg;
      cfg.tau = tau;
      auto plan = unbalanced_sinkhorn(a, b, zero, cfg);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
          CHECK(plan.coupling(i, j) == doctest::Approx(a.weights[i] * b.weights[j]).epsilon(1e-9));
      CHECK(plan.objective_value == doctest::Approx(0.0));
    }
  }

  SUBCASE("tau -> 0 limit matches a_i b_j exp(-C_ij/eps)") {
    auto c = random_cost(5, 5, rng);
    SolverConfig cfg;
    cfg.tau = 1e-9;
    cfg.epsilon = 0.3 * c.max_value();
    auto plan = unbalanced_sinkhorn(a, b, c, cfg);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        const double want = a.weights[i] * b.weights[j] * std::exp(-c.values(i, j) / cfg.epsilon);
        CHECK(std::abs(plan.coupling(i, j) - want) < 1e-6);
      }
  }
}

TEST_CASE("unbalanced_sinkhorn approaches balanced sinkhorn at large tau") {
  Rng rng = make_rng(17);
  auto a = uniform_measure(8);
  auto b = uniform_measure(8);
  auto c = random_cost(8, 8, rng);
  SolverConfig cfg;
  cfg.epsilon = 0.01 * c.max_value();
  cfg.tolerance = 1e-10;
  cfg.max_iterations = 100000;
  const auto bal = sinkhorn(a, b, c, cfg);
  cfg.tau = 100.0;
  const auto uot = unbalanced_sinkhorn(a, b, c, cfg);
  CHECK(std::abs(uot.objective_value - bal.objective_value) <=
        0.02 * std::max(bal.objective_value, 1e-12));
  CHECK(std::abs(plan_mass(uot) - 1.0) < 1e-2);
}

TEST_CASE("unbalanced_sinkhorn marginal KL penalty is non-increasing in tau") {
  Rng rng = make_rng(23);
  auto a = uniform_measure(6);
  auto b = uniform_measure(6);
  auto c = random_cost(6, 6, rng);
  SolverConfig cfg;
  cfg.epsilon = 0.05 * c.max_value();
  cfg.tolerance = 1e-10;
  cfg.max_iterations = 100000;
  double prev = std::numeric_limits<double>::infinity();
  for (double tau : {0.01, 0.1, 1.0, 10.0}) {
    cfg.tau = tau;
    const auto plan = unbalanced_sinkhorn(a, b, c, cfg);
    const double kl = marginal_kl_penalty(plan, a, b);
    CHECK(kl <= prev + 1e-6);
    prev = kl;
  }
}

TEST_CASE("unbalanced_sinkhorn rejects tau <= 0") {
  auto a = uniform_measure(2);
  CostMatrix c;
  c.values = Matrix(2, 2);
  SolverConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(unbalanced_sinkhorn(a, a, c, cfg), std::invalid_argument);
}

TEST_CASE("transport_cost and plan_mass basics") {
  TransportPlan zero;
  zero.coupling = Matrix(3, 3);
  CostMatrix c;
  c.values = Matrix(3, 3, 1.0);
  CHECK(transport_cost(zero, c) == 0.0);
  CHECK(plan_mass(zero) == 0.0);

  TransportPlan diag;
  diag.coupling = Matrix(2, 2);
  diag.coupling(0, 0) = 0.5;
  diag.coupling(1, 1) = 0.5;
  CostMatrix offdiag;
  offdiag.values = Matrix(2, 2);
  offdiag.values(0, 1) = 1.0;
  offdiag.values(1, 0) = 1.0;
  CHECK(transport_cost(diag, offdiag) == 0.0);

  TransportPlan quarter;
  quarter.coupling = Matrix(2, 2, 0.25);
  CHECK(transport_cost(quarter, offdiag) == doctest::Approx(0.5));

  CostMatrix wrong;
  wrong.values = Matrix(2, 3);
  CHECK_THROWS_AS(transport_cost(diag, wrong), std::invalid_argument);
}

TEST_CASE("generalized_kl values") {
  std::vector<double> u{0.3, 0.7};
  CHECK(generalized_kl(u, u) == doctest::Approx(0.0));

  std::vector<double> zero{0.0, 0.0};
  CHECK(generalized_kl(zero, u) == doctest::Approx(1.0));

  std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  CHECK(generalized_kl(p, q) == doctest::Approx(0.14384).epsilon(1e-4));

  std::vector<double> v{0.0, 1.0};
  CHECK_THROWS_AS(generalized_kl(p, v), std::invalid_argument);
  CHECK(generalized_kl(p, q) >= 0.0);
}

TEST_CASE("balanced solver outputs carry unit mass") {
  Rng rng = make_rng(29);
  auto a = uniform_measure(5);
  auto b = uniform_measure(7);
  auto c = random_cost(5, 7, rng);
  CHECK(plan_mass(exact_ot(a, b, c)) == doctest::Approx(1.0).epsilon(1e-6));
  SolverConfig cfg;
  cfg.epsilon = 0.1 * c.max_value();
  CHECK(plan_mass(sinkhorn(a, b, c, cfg)) == doctest::Approx(1.0).epsilon(1e-6));
}
