#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/grid.hpp"

namespace cmot {

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (row, col), ascending row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
};

// Sum of matched costs, accumulated in row order.
inline double assignment_cost(const Grid<double>& cost, const Assignment& a) {
  double s = 0.0;
  for (auto [r, c] : a.matches) s += cost(r, c);
  return s;
}

namespace detail {

// Shortest augmenting path Kuhn-Munkres on a square matrix with row/column
// potentials. Returns the column of each row.
inline std::vector<int> solve_square(const std::vector<double>& c, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  std::vector<double> minv(static_cast<std::size_t>(n) + 1);
  std::vector<char> used(static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = c[static_cast<std::size_t>(i0 - 1) * static_cast<std::size_t>(n) +
                             static_cast<std::size_t>(j - 1)] -
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
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] != 0)
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

}  // namespace detail

// Minimum-cost matching on the feasible pairs of an n x m cost matrix.
// `feasible(r, c) == 0` marks a forbidden pair. Among matchings, the one with
// the most pairs wins; ties are broken by total cost. Rows or columns left
// without a feasible partner are reported unmatched.
inline Assignment hungarian(const Grid<double>& cost,
                            const std::optional<Grid<std::uint8_t>>& feasible = std::nullopt) {
  const int n = cost.height(), m = cost.width();
  if (feasible) require_same_shape(cost, *feasible, "hungarian");
  auto ok = [&](int r, int c) { return !feasible || (*feasible)(r, c) != 0; };

  Assignment out;
  const int dim = std::max(n, m);
  if (dim == 0) return out;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  bool any = false;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c)
      if (ok(r, c)) {
        const double v = cost(r, c);
        if (!std::isfinite(v)) fail(Errc::invalid_argument, "hungarian: non-finite feasible cost");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        any = true;
      }

  if (any) {
    // Every non-feasible slot costs more than any complete set of feasible
    // pairs, so the solver first maximizes the number of real matches.
    const double big = (hi - lo + 1.0) * (dim + 1);
    std::vector<double> c(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), big);
    for (int r = 0; r < n; ++r)
      for (int col = 0; col < m; ++col)
        if (ok(r, col))
          c[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(col)] =
              cost(r, col) - lo;
    const std::vector<int> rc = detail::solve_square(c, dim);
    std::vector<char> col_used(static_cast<std::size_t>(m), 0);
    for (int r = 0; r < n; ++r) {
      const int col = rc[static_cast<std::size_t>(r)];
      if (col >= 0 && col < m && ok(r, col)) {
        out.matches.emplace_back(r, col);
        col_used[static_cast<std::size_t>(col)] = 1;
      } else {
        out.unmatched_rows.push_back(r);
      }
    }
    for (int col = 0; col < m; ++col)
      if (!col_used[static_cast<std::size_t>(col)]) out.unmatched_cols.push_back(col);
  } else {
    for (int r = 0; r < n; ++r) out.unmatched_rows.push_back(r);
    for (int col = 0; col < m; ++col) out.unmatched_cols.push_back(col);
  }
  return out;
}

}  // namespace cmot
