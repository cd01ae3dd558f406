#pragma once

// Hungarian algorithm for the square assignment problem, O(n^3) with dual
// potentials. Serves as an independent reference for the exact OT solver.

#include <limits>
#include <vector>

#include "otda/matrix.hpp"

namespace otda {

struct AssignmentResult {
  double cost = 0.0;
  std::vector<int> column_of_row;  // column assigned to each row
};

inline AssignmentResult hungarian_assignment(const Matrix& cost) {
  require(cost.rows == cost.cols, "hungarian: matrix must be square");
  const int n = static_cast<int>(cost.rows);
  const double inf = std::numeric_limits<double>::infinity();

  // 1-indexed potentials; p[j] is the row matched to column j.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(static_cast<std::size_t>(i0 - 1), static_cast<std::size_t>(j - 1)) -
                           u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult res;
  res.column_of_row.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    res.column_of_row[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  for (int i = 0; i < n; ++i)
    res.cost += cost(static_cast<std::size_t>(i), static_cast<std::size_t>(res.column_of_row[static_cast<std::size_t>(i)]));
  return res;
}

}  // namespace otda
