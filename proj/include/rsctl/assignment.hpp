#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rsctl/core.hpp"

namespace rsctl {

/// Minimum-cost perfect matching of rows to columns of a square matrix
/// (shortest augmenting paths with potentials, O(n^3)). Returns the column of
/// every row.
inline std::vector<int> min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("assignment needs a square cost matrix");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), way_cost(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(way_cost.begin(), way_cost.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < way_cost[j]) {
          way_cost[j] = cur;
          way[j] = j0;
        }
        if (way_cost[j] < delta) {
          delta = way_cost[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          way_cost[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = static_cast<int>(j - 1);
  return row_to_col;
}

}  // namespace rsctl
