#pragma once

#include "rescan/core/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace rescan {

using CostMatrix = std::vector<std::vector<double>>;

struct Assignment {
  /// Column of each row, -1 if the row is left free (more rows than columns).
  std::vector<int> row_to_col;
  double cost = 0.0;
};

namespace detail {

/// Potentials-based O(n^3) Hungarian method on a square matrix; returns the
/// column of each row.
inline std::vector<int> hungarian_square(const CostMatrix& a) {
  const std::size_t n = a.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

inline double assignment_cost(const CostMatrix& a, const std::vector<int>& cols) {
  double c = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) c += a[i][static_cast<std::size_t>(cols[i])];
  return c;
}

/// Optimal cost of the square matrix restricted to the given rows/columns.
inline double restricted_optimum(const CostMatrix& a, const std::vector<std::size_t>& rows,
                                 const std::vector<std::size_t>& cols) {
  if (rows.empty()) return 0.0;
  CostMatrix sub(rows.size(), std::vector<double>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) sub[r][c] = a[rows[r]][cols[c]];
  }
  return assignment_cost(sub, hungarian_square(sub));
}

}  // namespace detail

/// Minimum-cost assignment of rows to columns of a rectangular matrix. Among
/// optimal assignments the lexicographically smallest row->column sequence is
/// returned.
inline Assignment hungarian_assign(const CostMatrix& cost) {
  Assignment res;
  const std::size_t n = cost.size();
  if (n == 0) return res;
  const std::size_t m = cost.front().size();
  for (const auto& row : cost) {
    if (row.size() != m) throw Error("hungarian: ragged cost matrix");
    for (double c : row) {
      if (!std::isfinite(c)) throw Error("hungarian: costs must be finite");
    }
  }
  if (m == 0) {
    res.row_to_col.assign(n, -1);
    return res;
  }
  // Pad to square with zero-cost dummies; dummy columns mean "free".
  const std::size_t N = std::max(n, m);
  CostMatrix sq(N, std::vector<double>(N, 0.0));
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      sq[i][j] = cost[i][j];
      scale = std::max(scale, std::abs(cost[i][j]));
    }
  }
  const double optimum = detail::assignment_cost(sq, detail::hungarian_square(sq));
  const double tol = 1e-9 * scale * static_cast<double>(N);

  std::vector<std::size_t> free_rows, free_cols;
  for (std::size_t i = 0; i < N; ++i) {
    free_rows.push_back(i);
    free_cols.push_back(i);
  }
  double prefix = 0.0;
  res.row_to_col.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    free_rows.erase(std::find(free_rows.begin(), free_rows.end(), i));
    bool fixed = false;
    for (std::size_t ci = 0; ci < free_cols.size() && !fixed; ++ci) {
      const std::size_t j = free_cols[ci];
      std::vector<std::size_t> cols = free_cols;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(ci));
      const double total = prefix + sq[i][j] + detail::restricted_optimum(sq, free_rows, cols);
      if (total <= optimum + tol) {
        prefix += sq[i][j];
        res.row_to_col[i] = j < m ? static_cast<int>(j) : -1;
        free_cols = std::move(cols);
        fixed = true;
      }
    }
    if (!fixed) throw Error("hungarian: internal tie-break failure");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (res.row_to_col[i] >= 0) res.cost += cost[i][static_cast<std::size_t>(res.row_to_col[i])];
  }
  return res;
}

}  // namespace rescan
