#pragma once

// Exact discrete optimal transport via the transportation simplex.
// Dense bipartite network simplex with a block pivot rule and a Bland
// fallback that kicks in after a run of degenerate pivots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "otda/measure.hpp"

namespace otda {

namespace detail {

struct SimplexResult {
  Matrix flow;
  int pivots = 0;
};

// Solves min <flow, cost> s.t. flow >= 0, row sums = supply, col sums = demand.
// Supplies and demands must carry equal total mass.
inline SimplexResult transportation_simplex(const std::vector<double>& supply,
                                            const std::vector<double>& demand,
                                            const Matrix& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  const std::size_t num_nodes = m + n;
  const std::size_t num_arcs = m * n;

  double cost_scale = 0.0;
  for (double c : cost.data) cost_scale = std::max(cost_scale, std::abs(c));
  const double rc_tol = 1e-12 * (1.0 + cost_scale);

  Matrix flow(m, n);
  std::vector<char> basic(num_arcs, 0);
  // adjacency of the basis tree: node -> list of (other node, arc id)
  std::vector<std::vector<std::pair<int, int>>> adj(num_nodes);

  auto arc_id = [n](std::size_t i, std::size_t j) { return static_cast<int>(i * n + j); };
  auto add_basic = [&](std::size_t i, std::size_t j) {
    const int id = arc_id(i, j);
    basic[static_cast<std::size_t>(id)] = 1;
    adj[i].emplace_back(static_cast<int>(m + j), id);
    adj[m + j].emplace_back(static_cast<int>(i), id);
  };
  auto drop_basic = [&](int id) {
    basic[static_cast<std::size_t>(id)] = 0;
    const std::size_t i = static_cast<std::size_t>(id) / n;
    const std::size_t j = static_cast<std::size_t>(id) % n;
    auto erase_from = [id](std::vector<std::pair<int, int>>& lst) {
      for (std::size_t k = 0; k < lst.size(); ++k)
        if (lst[k].second == id) {
          lst[k] = lst.back();
          lst.pop_back();
          return;
        }
    };
    erase_from(adj[i]);
    erase_from(adj[m + j]);
  };

  // Northwest-corner start: a staircase of exactly m + n - 1 basic cells.
  {
    std::vector<double> arem = supply, brem = demand;
    std::size_t i = 0, j = 0;
    for (;;) {
      const double f = std::min(arem[i], brem[j]);
      flow(i, j) = f;
      arem[i] -= f;
      brem[j] -= f;
      add_basic(i, j);
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1) ++j;
      else if (j == n - 1) ++i;
      else if (arem[i] <= brem[j]) ++i;
      else ++j;
    }
  }

  std::vector<double> u(m, 0.0), v(n, 0.0);
  std::vector<int> bfs_order, parent_node(num_nodes), parent_arc(num_nodes);
  bfs_order.reserve(num_nodes);

  auto compute_duals = [&]() {
    bfs_order.clear();
    std::fill(parent_node.begin(), parent_node.end(), -1);
    bfs_order.push_back(0);
    parent_node[0] = 0;
    u[0] = 0.0;
    for (std::size_t h = 0; h < bfs_order.size(); ++h) {
      const int node = bfs_order[h];
      for (auto [other, id] : adj[static_cast<std::size_t>(node)]) {
        if (parent_node[static_cast<std::size_t>(other)] != -1) continue;
        parent_node[static_cast<std::size_t>(other)] = node;
        const std::size_t ci = static_cast<std::size_t>(id) / n;
        const std::size_t cj = static_cast<std::size_t>(id) % n;
        if (other >= static_cast<int>(m))
          v[cj] = cost(ci, cj) - u[ci];
        else
          u[static_cast<std::size_t>(other)] = cost(ci, cj) - v[cj];
        bfs_order.push_back(other);
      }
    }
  };

  // Path between two nodes in the basis tree; returns the arc ids in order.
  std::vector<int> path_arcs;
  auto tree_path = [&](int from, int to) {
    std::fill(parent_node.begin(), parent_node.end(), -1);
    std::fill(parent_arc.begin(), parent_arc.end(), -1);
    bfs_order.clear();
    bfs_order.push_back(from);
    parent_node[static_cast<std::size_t>(from)] = from;
    for (std::size_t h = 0; h < bfs_order.size() && parent_node[static_cast<std::size_t>(to)] == -1; ++h) {
      const int node = bfs_order[h];
      for (auto [other, id] : adj[static_cast<std::size_t>(node)]) {
        if (parent_node[static_cast<std::size_t>(other)] != -1) continue;
        parent_node[static_cast<std::size_t>(other)] = node;
        parent_arc[static_cast<std::size_t>(other)] = id;
        bfs_order.push_back(other);
      }
    }
    path_arcs.clear();
    for (int node = to; node != from; node = parent_node[static_cast<std::size_t>(node)])
      path_arcs.push_back(parent_arc[static_cast<std::size_t>(node)]);
    std::reverse(path_arcs.begin(), path_arcs.end());
  };

  const std::size_t block =
      std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(static_cast<double>(num_arcs))) + 1);
  std::size_t cursor = 0;
  bool bland_mode = false;
  int degenerate_run = 0;
  const int degenerate_limit = 16 * static_cast<int>(num_nodes) + 64;
  const long pivot_limit = 2000 + 400L * static_cast<long>(num_nodes) * 8L;

  int pivots = 0;
  for (;;) {
    compute_duals();

    int enter = -1;
    if (!bland_mode) {
      double best = -rc_tol;
      std::size_t scanned = 0;
      while (scanned < num_arcs) {
        const std::size_t end = std::min(cursor + block, num_arcs);
        for (std::size_t id = cursor; id < end; ++id) {
          if (basic[id]) continue;
          const std::size_t i = id / n, j = id % n;
          const double rc = cost(i, j) - u[i] - v[j];
          if (rc < best) {
            best = rc;
            enter = static_cast<int>(id);
          }
        }
        scanned += end - cursor;
        cursor = end == num_arcs ? 0 : end;
        if (enter >= 0) break;
      }
    } else {
      for (std::size_t id = 0; id < num_arcs; ++id) {
        if (basic[id]) continue;
        const std::size_t i = id / n, j = id % n;
        if (cost(i, j) - u[i] - v[j] < -rc_tol) {
          enter = static_cast<int>(id);
          break;
        }
      }
    }
    if (enter < 0) break;  // optimal vertex

    const std::size_t ei = static_cast<std::size_t>(enter) / n;
    const std::size_t ej = static_cast<std::size_t>(enter) % n;
    tree_path(static_cast<int>(m + ej), static_cast<int>(ei));

    // Odd-position arcs along the cycle lose flow, even-position arcs gain.
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < path_arcs.size(); k += 2) {
      const int id = path_arcs[k];
      const double f = flow.data[static_cast<std::size_t>(id)];
      if (f < theta) {
        theta = f;
        leave = id;
      } else if (bland_mode && f == theta && id < leave) {
        leave = id;
      }
    }
    if (leave < 0) throw std::runtime_error("exact solver: unbounded pivot (corrupt basis)");

    flow.data[static_cast<std::size_t>(enter)] += theta;
    for (std::size_t k = 0; k < path_arcs.size(); ++k) {
      const int id = path_arcs[k];
      if (k % 2 == 0)
        flow.data[static_cast<std::size_t>(id)] = std::max(0.0, flow.data[static_cast<std::size_t>(id)] - theta);
      else
        flow.data[static_cast<std::size_t>(id)] += theta;
    }
    drop_basic(leave);
    add_basic(ei, ej);

    if (theta <= 0.0) {
      if (++degenerate_run > degenerate_limit) bland_mode = true;
    } else {
      degenerate_run = 0;
      bland_mode = false;
    }
    if (++pivots > pivot_limit)
      throw std::runtime_error("exact solver: pivot limit exceeded");
  }

  return {std::move(flow), pivots};
}

}  // namespace detail

inline constexpr std::size_t kExactSupportLimit = 256;

inline TransportPlan exact_ot(const DiscreteMeasure& a, const DiscreteMeasure& b,
                              const CostMatrix& cost) {
  a.validate();
  b.validate();
  cost.validate();
  require(cost.values.rows == a.size() && cost.values.cols == b.size(),
          "exact_ot: cost dimensions do not match supports");
  require(a.is_probability() && b.is_probability(),
          "exact_ot: inputs must be probability measures");
  require(a.size() <= kExactSupportLimit && b.size() <= kExactSupportLimit,
          "exact_ot: support size above limit");

  auto res = detail::transportation_simplex(a.weights, b.weights, cost.values);
  TransportPlan plan;
  plan.coupling = std::move(res.flow);
  plan.iterations = res.pivots;
  plan.converged = true;
  plan.objective_value = transport_cost(plan, cost);

  const auto rs = row_sums(plan.coupling);
  const auto cs = col_sums(plan.coupling);
  double viol = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) viol += std::abs(rs[i] - a.weights[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) viol += std::abs(cs[j] - b.weights[j]);
  plan.marginal_violation = viol;
  return plan;
}

}  // namespace otda
