#pragma once

// Shared helpers for the unit tests: seeded random grids and a naive box-sum.

#include <random>

#include "cmot/grid.hpp"

namespace cmot::test {

inline Grid<double> random_grid(std::mt19937_64& rng, int h, int w, double lo = 0.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Grid<double> g(h, w);
  for (double& v : g.raw()) v = d(rng);
  return g;
}

// O(HW w^2) zero-padded window sum.
template <typename T>
Grid<double> naive_window_counts(const Grid<T>& g, int window) {
  const int r = window / 2;
  Grid<double> out(g.height(), g.width());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (g.contains(y + dy, x + dx)) s += static_cast<double>(g(y + dy, x + dx));
      out(y, x) = s;
    }
  return out;
}

}  // namespace cmot::test
