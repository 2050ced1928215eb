#pragma once

// Central finite-difference checks of every analytic loss gradient on
// seeded random instances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/losses.hpp"
#include "cmot/rng.hpp"

namespace cmot {

inline const std::vector<std::string>& gradcheck_losses() {
  static const std::vector<std::string> names{"focal",        "scale_offset", "ssim",
                                              "counting",     "counting_dissim", "det_count",
                                              "window_count", "reid",         "total"};
  return names;
}

inline bool is_gradcheck_loss(std::string_view name) {
  const auto& n = gradcheck_losses();
  return std::find(n.begin(), n.end(), name) != n.end();
}

struct GradcheckOptions {
  int trials = 100;
  double tol = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 0x5eedULL;
};

struct GradcheckReport {
  std::string loss;
  int trials = 0;
  double max_rel_error = 0.0;
  int worst_trial = -1;
  bool passed = false;  // max_rel_error < tol, so tol = 0 always fails
};

namespace detail {

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double normwise_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
}

// Central differences of f at x along the listed coordinates.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, const std::vector<std::size_t>& coords,
                                        double h) {
  std::vector<double> g;
  g.reserve(coords.size());
  for (std::size_t i : coords) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g.push_back((fp - fm) / (2.0 * h));
  }
  return g;
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
  std::vector<std::size_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i;
  return c;
}

inline Grid<double> as_grid(const std::vector<double>& v, int h, int w) {
  Grid<double> g(h, w);
  std::copy(v.begin(), v.end(), g.raw().begin());
  return g;
}

inline std::vector<double> random_values(SplitMix64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline int random_int(SplitMix64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

inline std::vector<double> pick(const std::vector<double>& g, const std::vector<std::size_t>& coords) {
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t i : coords) out.push_back(g[i]);
  return out;
}

// One random instance: returns the relative error for that instance.
inline double gradcheck_trial(std::string_view loss, SplitMix64& rng, double h_step) {
  using Vec = std::vector<double>;
  const int h = random_int(rng, 4, 16), w = random_int(rng, 4, 16);
  const std::size_t n = static_cast<std::size_t>(h) * w;

  if (loss == "focal") {
    Vec gt = random_values(rng, n, 0.0, 0.9);
    const int pos = random_int(rng, 1, 3);
    for (int i = 0; i < pos; ++i) gt[static_cast<std::size_t>(random_int(rng, 0, static_cast<int>(n) - 1))] = 1.0;
    const Grid<double> g = as_grid(gt, h, w);
    const Vec x = random_values(rng, n, 0.05, 0.95);
    const auto f = [&](const Vec& v) { return focal_center_loss(as_grid(v, h, w), g).value; };
    const GridLoss a = focal_center_loss(as_grid(x, h, w), g);
    const auto c = all_coords(n);
    return normwise_rel_error(pick(a.grad.raw(), c), numeric_grad(f, x, c, h_step));
  }

  if (loss == "scale_offset") {
    const std::size_t m = static_cast<std::size_t>(random_int(rng, 1, 10));
    // Differences kept at least 1e-2 from the kink at zero.
    std::vector<Pair2> gs(m), go(m);
    Vec x(4 * m);
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < 2; ++c) {
        gs[i][c] = rng.uniform(10.0, 100.0);
        go[i][c] = rng.uniform(0.0, 1.0);
        const double ds = rng.uniform(0.01, 5.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        const double dof = rng.uniform(0.01, 0.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        x[4 * i + c] = gs[i][c] + ds;
        x[4 * i + 2 + c] = go[i][c] + dof;
      }
    const auto split = [m](const Vec& v, std::vector<Pair2>& s, std::vector<Pair2>& o) {
      s.resize(m);
      o.resize(m);
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < 2; ++c) {
          s[i][c] = v[4 * i + c];
          o[i][c] = v[4 * i + 2 + c];
        }
    };
    const auto f = [&](const Vec& v) {
      std::vector<Pair2> s, o;
      split(v, s, o);
      return scale_offset_loss(s, gs, o, go).value;
    };
    std::vector<Pair2> s, o;
    split(x, s, o);
    const ScaleOffsetLoss a = scale_offset_loss(s, gs, o, go);
    Vec ga(4 * m);
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < 2; ++c) {
        ga[4 * i + c] = a.grad_scale[i][c];
        ga[4 * i + 2 + c] = a.grad_offset[i][c];
      }
    return normwise_rel_error(ga, numeric_grad(f, x, all_coords(x.size()), h_step));
  }

  if (loss == "ssim") {
    const int hs = random_int(rng, 11, 16), ws = random_int(rng, 11, 16);
    const std::size_t ns = static_cast<std::size_t>(hs) * ws;
    const Grid<double> b = as_grid(random_values(rng, ns, 0.0, 1.0), hs, ws);
    Vec x = random_values(rng, ns, 0.0, 1.0);
    for (std::size_t i = 0; i < ns; ++i) x[i] = 0.5 * x[i] + 0.5 * b.raw()[i];  // correlated pair
    const auto f = [&](const Vec& v) { return ssim(as_grid(v, hs, ws), b); };
    const SsimResult a = ssim_eval(as_grid(x, hs, ws), b, {}, true);
    const auto c = all_coords(ns);
    return normwise_rel_error(pick(a.grad.raw(), c), numeric_grad(f, x, c, h_step));
  }

  if (loss == "counting" || loss == "counting_dissim") {
    const int hs = random_int(rng, 11, 16), ws = random_int(rng, 11, 16);
    const std::size_t ns = static_cast<std::size_t>(hs) * ws;
    CountLossParams p;
    p.ssim_as_dissimilarity = loss == "counting_dissim";
    const Grid<double> gt = as_grid(random_values(rng, ns, 0.0, 2.0 / p.mu), hs, ws);
    const Vec x = random_values(rng, ns, 0.0, 2.0);
    const auto f = [&](const Vec& v) { return counting_loss(as_grid(v, hs, ws), gt, p).value; };
    const GridLoss a = counting_loss(as_grid(x, hs, ws), gt, p);
    const auto c = all_coords(ns);
    return normwise_rel_error(pick(a.grad.raw(), c), numeric_grad(f, x, c, h_step));
  }

  if (loss == "det_count") {
    // Weights on a random support; perturbations never reach zero, so the
    // support (and with it every kernel bandwidth) stays fixed.
    Vec x(n, 0.0);
    std::vector<std::size_t> support;
    const int k = random_int(rng, 1, 6);
    for (int i = 0; i < k; ++i) {
      const std::size_t idx = static_cast<std::size_t>(random_int(rng, 0, static_cast<int>(n) - 1));
      if (x[idx] == 0.0) support.push_back(idx);
      x[idx] = rng.uniform(0.5, 1.5);
    }
    std::sort(support.begin(), support.end());
    const Grid<double> dhat = as_grid(random_values(rng, n, 0.0, 0.3), h, w);
    const auto f = [&](const Vec& v) { return det_count_loss_relaxed(as_grid(v, h, w), dhat).value; };
    const GridLoss a = det_count_loss_relaxed(as_grid(x, h, w), dhat);
    return normwise_rel_error(pick(a.grad.raw(), support), numeric_grad(f, x, support, h_step));
  }

  if (loss == "window_count") {
    const int window = 2 * random_int(rng, 0, 9) + 1;
    Grid<std::uint8_t> u(h, w);
    for (auto& v : u.raw()) v = rng.uniform() < 0.1 ? 1 : 0;
    const Vec x = random_values(rng, n, 0.0, 0.5);
    const auto f = [&](const Vec& v) { return window_count_loss(as_grid(v, h, w), u, window).value; };
    const GridLoss a = window_count_loss(as_grid(x, h, w), u, window);
    const auto c = all_coords(n);
    return normwise_rel_error(pick(a.grad.raw(), c), numeric_grad(f, x, c, h_step));
  }

  if (loss == "reid") {
    const int rows = random_int(rng, 1, 10), cls = random_int(rng, 2, 12);
    const std::size_t nl = static_cast<std::size_t>(rows) * cls;
    std::vector<int> labels(static_cast<std::size_t>(rows));
    for (int& l : labels) l = random_int(rng, 0, cls - 1);
    Vec x(nl);
    for (double& v : x) v = 2.0 * rng.normal();
    const auto f = [&](const Vec& v) { return reid_loss({as_grid(v, rows, cls), labels}).value; };
    const GridLoss a = reid_loss({as_grid(x, rows, cls), labels});
    const auto c = all_coords(nl);
    return normwise_rel_error(pick(a.grad.raw(), c), numeric_grad(f, x, c, h_step));
  }

  if (loss == "total") {
    const double l1 = rng.uniform(0.1, 10.0), l2 = rng.uniform(0.1, 10.0), l3 = rng.uniform(0.1, 10.0);
    const Vec x = random_values(rng, 3, -3.0, 3.0);
    const auto f = [&](const Vec& v) { return total_loss(l1, l2, l3, {v[0], v[1], v[2]}).value; };
    const TotalLoss a = total_loss(l1, l2, l3, {x[0], x[1], x[2]});
    return normwise_rel_error({a.grad_w[0], a.grad_w[1], a.grad_w[2]}, numeric_grad(f, x, all_coords(3), h_step));
  }

  fail(Errc::invalid_argument, "unknown loss '" + std::string(loss) + "'");
}

}  // namespace detail

inline GradcheckReport gradcheck(std::string_view loss, const GradcheckOptions& opt = {}) {
  if (!is_gradcheck_loss(loss)) fail(Errc::invalid_argument, "unknown loss '" + std::string(loss) + "'");
  if (opt.trials < 1) fail(Errc::invalid_argument, "trials must be >= 1");
  if (!(opt.tol >= 0.0)) fail(Errc::invalid_argument, "tol must be >= 0");
  GradcheckReport r;
  r.loss = std::string(loss);
  r.trials = opt.trials;
  // Each loss gets its own stream so subsets reproduce the full run.
  std::uint64_t salt = 0;
  for (char c : loss) salt = salt * 131 + static_cast<unsigned char>(c);
  SplitMix64 rng(opt.seed ^ salt);
  for (int t = 0; t < opt.trials; ++t) {
    double e = detail::gradcheck_trial(loss, rng, opt.step);
    if (std::isnan(e)) e = std::numeric_limits<double>::infinity();
    if (r.worst_trial < 0 || e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_trial = t;
    }
  }
  r.passed = r.max_rel_error < opt.tol;
  return r;
}

}  // namespace cmot
