#pragma once

// Inference-time count consistency between detections and a density map.
// False detections are dropped while that lowers the window-count
// discrepancy; missed objects are then recovered from the positive part of
// the density residual, again only when the window-count discrepancy drops.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cmot/density.hpp"
#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/losses.hpp"
#include "cmot/model.hpp"

namespace cmot {

struct RefineConfig {
  int window = 19;
  double add_mass_threshold = 0.5;
  double remove_gain_threshold = 0.0;
  double exempt_confidence = 0.6;
  int max_added_per_frame = 64;
  double min_peak_separation = 3.0;  // cells
  double default_box_w = 40.0;
  double default_box_h = 100.0;
  double recovered_confidence = 0.3;
  AdaptiveSigmaConfig sigma;
  GridGeometry geom;

  void validate() const {
    require_odd_window(window);
    if (!(add_mass_threshold > 0.0 && add_mass_threshold <= 1.0))
      fail(Errc::invalid_argument, "add_mass_threshold must lie in (0, 1]");
    if (!(remove_gain_threshold >= 0.0))
      fail(Errc::invalid_argument, "remove_gain_threshold must be non-negative");
    if (max_added_per_frame < 0) fail(Errc::invalid_argument, "max_added_per_frame must be >= 0");
    if (!(recovered_confidence > 0.0 && recovered_confidence < 1.0))
      fail(Errc::invalid_argument, "recovered_confidence must lie in (0, 1)");
    if (!(default_box_w > 0.0 && default_box_h > 0.0))
      fail(Errc::invalid_argument, "default box must have positive size");
    sigma.validate();
  }
};

struct RefineReport {
  std::vector<Detection> added;
  std::vector<Detection> removed;
  double initial_count_gap = 0.0;
  double final_count_gap = 0.0;
};

inline std::vector<GridCell> detection_cells(std::span<const Detection> dets, const GridGeometry& geom) {
  std::vector<GridCell> cells;
  cells.reserve(dets.size());
  for (const Detection& d : dets) cells.push_back(detection_cell(d.bbox, geom));
  return cells;
}

// Detections per cell. Unlike an indicator, coincident detections stack.
inline Grid<double> count_grid(std::span<const Detection> dets, const GridGeometry& geom) {
  Grid<double> u(geom.grid_h(), geom.grid_w());
  for (GridCell c : detection_cells(dets, geom)) u(c.y, c.x) += 1.0;
  return u;
}

inline void require_geometry(const DensityGrid& dhat, const GridGeometry& geom) {
  if (dhat.height() != geom.grid_h() || dhat.width() != geom.grid_w())
    fail(Errc::dimension_mismatch,
         "density grid " + std::to_string(dhat.height()) + "x" + std::to_string(dhat.width()) +
             " does not match geometry " + std::to_string(geom.grid_h()) + "x" +
             std::to_string(geom.grid_w()));
}

// Window-count discrepancy between the density map and a detection set.
inline double count_gap(std::span<const Detection> dets, const DensityGrid& dhat, int window,
                        const GridGeometry& geom) {
  require_geometry(dhat, geom);
  Grid<double> diff = dhat;
  for (GridCell c : detection_cells(dets, geom)) diff(c.y, c.x) -= 1.0;
  double v = 0.0;
  const Grid<double> s = window_counts(diff, window);
  for (double x : s.values()) v += x * x;
  return v / static_cast<double>(diff.size());
}

// Predicted density minus the blurred detections: positive mass marks
// undetected objects, negative mass marks surplus detections.
inline Grid<double> residual_density(std::span<const Detection> dets, const DensityGrid& dhat,
                                     const AdaptiveSigmaConfig& sigma_cfg, const GridGeometry& geom) {
  require_geometry(dhat, geom);
  Grid<double> res = dhat;
  if (dets.empty()) return res;
  std::vector<Point2> pts;
  for (GridCell c : detection_cells(dets, geom))
    pts.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
  const std::vector<double> sigmas = adaptive_sigmas(pts, sigma_cfg);
  const DensityGrid blur = density_from_centers(pts, sigmas, geom);
  for (std::size_t i = 0; i < res.size(); ++i) res.raw()[i] -= blur.raw()[i];
  return res;
}

namespace detail {

// Bandwidth the adaptive rule would assign to `p` among `others`.
inline double knn_sigma(Point2 p, std::span<const Point2> others, const AdaptiveSigmaConfig& cfg) {
  if (others.empty()) return cfg.sigma_cap / 2.0;
  std::vector<double> d;
  d.reserve(others.size());
  for (Point2 o : others) d.push_back(std::hypot(o.x - p.x, o.y - p.y));
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += d[i];
  return std::clamp(cfg.gamma * mean / static_cast<double>(k), cfg.sigma_floor, cfg.sigma_cap);
}


// Window masses are rebuilt incrementally, so equal masses can differ in the
// last bits. Ranking on a 1e-9 lattice lets such ties fall to row-major order.
inline double tie_key(double mass) noexcept { return std::round(mass * 1e9); }

// Cells shared by the clipped windows around p and q along one axis.
inline int shared_span(int p, int q, int r, int n) noexcept {
  const int lo = std::max({0, p - r, q - r});
  const int hi = std::min({n - 1, p + r, q + r});
  return std::max(0, hi - lo + 1);
}

// t += v * box(box(e_c)): the effect on a twice box-filtered grid of adding
// v at a single cell.
inline void add_double_window(Grid<double>& t, GridCell c, int window, double v) {
  const int r = window / 2;
  const int h = t.height(), w = t.width();
  for (int y = std::max(0, c.y - 2 * r); y <= std::min(h - 1, c.y + 2 * r); ++y) {
    const int sy = shared_span(y, c.y, r, h);
    for (int x = std::max(0, c.x - 2 * r); x <= std::min(w - 1, c.x + 2 * r); ++x)
      t(y, x) += v * sy * shared_span(x, c.x, r, w);
  }
}

// Argmax over a grid under local updates: per-tile maxima are refreshed only
// for tiles that changed. Ties resolve row-major first.
class TileArgmax {
 public:
  static constexpr int kTile = 16;

  explicit TileArgmax(Grid<double> key)
      : key_(std::move(key)),
        ty_((key_.height() + kTile - 1) / kTile),
        tx_((key_.width() + kTile - 1) / kTile),
        best_(static_cast<std::size_t>(ty_) * tx_),
        dirty_(best_.size(), 1) {}

  void set(int y, int x, double v) {
    key_(y, x) = v;
    dirty_[static_cast<std::size_t>(y / kTile) * tx_ + x / kTile] = 1;
  }

  // Row-major first cell holding the largest key.
  GridCell argmax(double& value) {
    std::size_t pick = 0;
    for (std::size_t i = 0; i < best_.size(); ++i) {
      if (dirty_[i]) refresh(i);
      if (before(best_[i], best_[pick])) pick = i;
    }
    value = best_[pick].v;
    return {best_[pick].x, best_[pick].y};
  }

 private:
  struct Entry {
    double v = -std::numeric_limits<double>::infinity();
    int y = 0, x = 0;
  };
  static bool before(const Entry& a, const Entry& b) {
    if (a.v != b.v) return a.v > b.v;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
  void refresh(std::size_t i) {
    const int y0 = static_cast<int>(i / tx_) * kTile, x0 = static_cast<int>(i % tx_) * kTile;
    Entry e{-std::numeric_limits<double>::infinity(), y0, x0};
    for (int y = y0; y < std::min(y0 + kTile, key_.height()); ++y)
      for (int x = x0; x < std::min(x0 + kTile, key_.width()); ++x)
        if (key_(y, x) > e.v) e = {key_(y, x), y, x};
    best_[i] = e;
    dirty_[i] = 0;
  }

  Grid<double> key_;
  int ty_, tx_;
  std::vector<Entry> best_;
  std::vector<char> dirty_;
};

}  // namespace detail

// Greedy recovery of missed objects. Each round takes the window with the
// largest integrated positive residual (row-major first on ties); when that
// mass reaches the threshold, a detection is placed at the window centre,
// provided it lowers the window-count discrepancy. A unit kernel is then
// subtracted from the residual.
inline std::vector<Detection> recover_missed(std::span<const Detection> dets, const DensityGrid& dhat,
                                             const RefineConfig& cfg) {
  cfg.validate();
  require_geometry(dhat, cfg.geom);
  const GridGeometry& geom = cfg.geom;
  const int h = geom.grid_h(), w = geom.grid_w();
  const double k = static_cast<double>(h) * w;

  Grid<double> residual = residual_density(dets, dhat, cfg.sigma, geom);
  Grid<double> diff = dhat;  // dhat - u
  const std::vector<GridCell> det_cells = detection_cells(dets, geom);
  for (GridCell c : det_cells) diff(c.y, c.x) -= 1.0;
  Grid<double> s = window_counts(diff, cfg.window);

  std::vector<Point2> centers;
  for (GridCell c : det_cells) centers.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});

  std::vector<Detection> added;

  // Window masses and window-count gains only fall as detections are added,
  // so a cell that fails the loss test or sits too close to an addition stays
  // ineligible. Keeping only eligible cells in the argmax structure therefore
  // gives the same pick as re-ranking every window each round.
  Grid<double> pos = residual;
  for (double& v : pos.raw()) v = std::max(v, 0.0);
  Grid<double> mass = window_counts(pos, cfg.window);
  Grid<double> t = window_counts(s, cfg.window);
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  Grid<std::uint8_t> retired(h, w, 0);
  const auto gain = [&](int y, int x) {  // loss change from adding a unit at (y, x)
    return (-2.0 * t(y, x) + window_support(h, w, cfg.window, y, x)) / k;
  };
  const auto key = [&](int y, int x) {
    return !retired(y, x) && mass(y, x) >= cfg.add_mass_threshold && gain(y, x) < 0.0
               ? detail::tie_key(mass(y, x))
               : kNone;
  };
  Grid<double> keys(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) keys(y, x) = key(y, x);
  detail::TileArgmax order(std::move(keys));

  const int r = cfg.window / 2;
  while (static_cast<int>(added.size()) < cfg.max_added_per_frame) {
    double best = kNone;
    const GridCell q = order.argmax(best);
    if (best == kNone) break;

    const Point2 p{static_cast<double>(q.x), static_cast<double>(q.y)};
    double sw = 0.0, sh = 0.0;
    int nb = 0;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (std::hypot(det_cells[i].x - q.x, det_cells[i].y - q.y) <= 2.0 * cfg.window) {
        sw += dets[i].bbox.w;
        sh += dets[i].bbox.h;
        ++nb;
      }
    const double bw = nb ? sw / nb : cfg.default_box_w;
    const double bh = nb ? sh / nb : cfg.default_box_h;
    Detection d;
    d.bbox = BBox::from_center(cell_center_px(q, geom), bw, bh);
    d.confidence = cfg.recovered_confidence;
    added.push_back(d);

    const double sigma = detail::knn_sigma(p, centers, cfg.sigma);
    const SeparableKernel kern = make_separable_kernel(KernelSpec::for_sigma(sigma));
    splat(residual, kern, q, -1.0);
    centers.push_back(p);
    detail::add_double_window(t, q, cfg.window, -1.0);

    const int sep = static_cast<int>(std::ceil(cfg.min_peak_separation));
    for (int y = std::max(0, q.y - sep); y <= std::min(h - 1, q.y + sep); ++y)
      for (int x = std::max(0, q.x - sep); x <= std::min(w - 1, q.x + sep); ++x)
        if (std::hypot(x - q.x, y - q.y) < cfg.min_peak_separation) retired(y, x) = 1;

    // Refresh the positive part and its window sums around the kernel.
    const int y0 = std::max(0, q.y - kern.radius), y1 = std::min(h - 1, q.y + kern.radius);
    const int x0 = std::max(0, q.x - kern.radius), x1 = std::min(w - 1, q.x + kern.radius);
    const int bh_ = y1 - y0 + 1, bw_ = x1 - x0 + 1;
    std::vector<double> ps((bh_ + 1) * static_cast<std::size_t>(bw_ + 1), 0.0);
    const auto at = [&](int yy, int xx) -> double& { return ps[yy * static_cast<std::size_t>(bw_ + 1) + xx]; };
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double np = std::max(residual(y, x), 0.0);
        const double dv = np - pos(y, x);
        pos(y, x) = np;
        at(y - y0 + 1, x - x0 + 1) = dv + at(y - y0, x - x0 + 1) + at(y - y0 + 1, x - x0) - at(y - y0, x - x0);
      }
    for (int y = std::max(0, y0 - r); y <= std::min(h - 1, y1 + r); ++y) {
      const int ya = std::max(y0, y - r) - y0, yb = std::min(y1, y + r) - y0 + 1;
      if (ya >= yb) continue;
      for (int x = std::max(0, x0 - r); x <= std::min(w - 1, x1 + r); ++x) {
        const int xa = std::max(x0, x - r) - x0, xb = std::min(x1, x + r) - x0 + 1;
        if (xa >= xb) continue;
        mass(y, x) += at(yb, xb) - at(ya, xb) - at(yb, xa) + at(ya, xa);
      }
    }
    const int reach = std::max({kern.radius + r, 2 * r, sep});
    for (int y = std::max(0, q.y - reach); y <= std::min(h - 1, q.y + reach); ++y)
      for (int x = std::max(0, q.x - reach); x <= std::min(w - 1, q.x + reach); ++x)
        order.set(y, x, key(y, x));
  }
  return added;
}

// Indices (into `dets`) of detections whose removal lowers the window-count
// discrepancy, chosen greedily by largest decrease. Detections at or above
// the exemption confidence are never removed.
inline std::vector<std::size_t> reject_false_indices(std::span<const Detection> dets,
                                                     const DensityGrid& dhat, const RefineConfig& cfg) {
  cfg.validate();
  require_geometry(dhat, cfg.geom);
  const int h = cfg.geom.grid_h(), w = cfg.geom.grid_w();
  const double k = static_cast<double>(h) * w;
  const std::vector<GridCell> cells = detection_cells(dets, cfg.geom);
  Grid<double> diff = dhat;
  for (GridCell c : cells) diff(c.y, c.x) -= 1.0;
  std::vector<char> alive(dets.size(), 1);
  std::vector<std::size_t> removed;

  Grid<double> t = window_counts(window_counts(diff, cfg.window), cfg.window);
  for (;;) {
    double best = 0.0;
    std::size_t best_i = dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i] || dets[i].confidence >= cfg.exempt_confidence) continue;
      const GridCell q = cells[i];
      const double delta = (2.0 * t(q.y, q.x) + window_support(h, w, cfg.window, q.y, q.x)) / k;
      if (best_i == dets.size() || delta < best) {
        best = delta;
        best_i = i;
      }
    }
    if (best_i == dets.size() || !(best < -cfg.remove_gain_threshold)) break;
    alive[best_i] = 0;
    removed.push_back(best_i);
    detail::add_double_window(t, cells[best_i], cfg.window, 1.0);
  }
  return removed;
}

inline std::vector<Detection> reject_false(std::span<const Detection> dets, const DensityGrid& dhat,
                                           const RefineConfig& cfg) {
  std::vector<Detection> out;
  for (std::size_t i : reject_false_indices(dets, dhat, cfg)) out.push_back(dets[i]);
  return out;
}

struct RefinedFrame {
  std::vector<Detection> detections;
  RefineReport report;
};

// Rejection first, then recovery on what remains. Kept detections stay in
// input order, recovered ones follow.
inline RefinedFrame refine_frame(std::span<const Detection> dets, const DensityGrid& dhat,
                                 const RefineConfig& cfg) {
  cfg.validate();
  require_geometry(dhat, cfg.geom);
  RefinedFrame out;
  out.report.initial_count_gap = count_gap(dets, dhat, cfg.window, cfg.geom);

  const std::vector<std::size_t> drop = reject_false_indices(dets, dhat, cfg);
  std::vector<char> keep(dets.size(), 1);
  for (std::size_t i : drop) {
    keep[i] = 0;
    out.report.removed.push_back(dets[i]);
  }
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (keep[i]) out.detections.push_back(dets[i]);

  out.report.added = recover_missed(out.detections, dhat, cfg);
  out.detections.insert(out.detections.end(), out.report.added.begin(), out.report.added.end());
  out.report.final_count_gap = count_gap(out.detections, dhat, cfg.window, cfg.geom);

  const double slack = 1e-9 * std::max(1.0, out.report.initial_count_gap);
  if (out.report.final_count_gap > out.report.initial_count_gap + slack)
    fail(Errc::invalid_argument, "refine_frame: count gap increased");
  return out;
}

}  // namespace cmot
