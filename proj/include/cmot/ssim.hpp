#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/grid.hpp"

namespace cmot {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

struct SsimResult {
  double value = 0.0;
  Grid<double> grad;  // d value / d a; empty unless requested
};

namespace detail {

inline std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(window));
  const int r = window / 2;
  double s = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - r;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    s += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= s;
  return g;
}

// Valid-mode separable correlation: output(y, x) = sum_ij g_i g_j in(y+i, x+j).
inline Grid<double> filter_valid(const Grid<double>& in, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int oh = in.height() - n + 1, ow = in.width() - n + 1;
  Grid<double> tmp(in.height(), ow);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += g[static_cast<std::size_t>(j)] * in(y, x + j);
      tmp(y, x) = s;
    }
  Grid<double> out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += g[static_cast<std::size_t>(i)] * tmp(y + i, x);
      out(y, x) = s;
    }
  return out;
}

}  // namespace detail

// Mean structural similarity over every fully-inside Gaussian window. The
// stabilizing constants use the dynamic range of `b` (the reference), so the
// gradient with respect to `a` is exact.
inline SsimResult ssim_eval(const Grid<double>& a, const Grid<double>& b, const SsimParams& p,
                            bool want_grad) {
  require_same_shape(a, b, "ssim");
  if (p.window < 1 || p.window % 2 == 0) fail(Errc::invalid_argument, "ssim window must be odd");
  if (a.height() < p.window || a.width() < p.window)
    fail(Errc::invalid_argument, "grid smaller than the ssim window");

  const auto [lo, hi] = std::minmax_element(b.raw().begin(), b.raw().end());
  const double range = std::max(*hi - *lo, 1e-6);
  const double c1 = (p.k1 * range) * (p.k1 * range);
  const double c2 = (p.k2 * range) * (p.k2 * range);

  const std::vector<double> g = detail::gaussian_taps(p.window, p.sigma);
  Grid<double> aa(a.height(), a.width()), bb(a.height(), a.width()), ab(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa.raw()[i] = a.raw()[i] * a.raw()[i];
    bb.raw()[i] = b.raw()[i] * b.raw()[i];
    ab.raw()[i] = a.raw()[i] * b.raw()[i];
  }
  const Grid<double> mu_a = detail::filter_valid(a, g);
  const Grid<double> mu_b = detail::filter_valid(b, g);
  const Grid<double> e_aa = detail::filter_valid(aa, g);
  const Grid<double> e_bb = detail::filter_valid(bb, g);
  const Grid<double> e_ab = detail::filter_valid(ab, g);

  const int oh = mu_a.height(), ow = mu_a.width();
  const double count = static_cast<double>(oh) * ow;
  // Per-window partials w.r.t. (mu_a, E[a^2], E[ab]).
  Grid<double> d_mu, d_eaa, d_eab;
  if (want_grad) {
    d_mu = Grid<double>(oh, ow);
    d_eaa = Grid<double>(oh, ow);
    d_eab = Grid<double>(oh, ow);
  }
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double ma = mu_a(y, x), mb = mu_b(y, x);
      const double va = e_aa(y, x) - ma * ma;
      const double vb = e_bb(y, x) - mb * mb;
      const double cov = e_ab(y, x) - ma * mb;
      const double a1 = 2.0 * ma * mb + c1, a2 = 2.0 * cov + c2;
      const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (want_grad) {
        const double ds_dva = -s / b2;
        const double ds_dcov = 2.0 * a1 / (b1 * b2);
        const double ds_dma = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
        d_mu(y, x) = ds_dma - 2.0 * ma * ds_dva - mb * ds_dcov;
        d_eaa(y, x) = ds_dva;
        d_eab(y, x) = ds_dcov;
      }
    }
  }

  SsimResult r;
  r.value = total / count;
  if (want_grad) {
    r.grad = Grid<double>(a.height(), a.width());
    const int n = p.window;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double cm = d_mu(y, x) / count, caa = d_eaa(y, x) / count,
                     cab = d_eab(y, x) / count;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double w = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
            const int py = y + i, px = x + j;
            r.grad(py, px) += w * (cm + 2.0 * a(py, px) * caa + b(py, px) * cab);
          }
      }
  }
  return r;
}

inline double ssim(const Grid<double>& a, const Grid<double>& b, const SsimParams& p = {}) {
  return ssim_eval(a, b, p, false).value;
}

}  // namespace cmot
