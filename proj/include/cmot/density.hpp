#pragma once

// Gaussian center heatmaps, unit-mass density maps with k-nearest-neighbour
// bandwidths, and zero-padded sliding-window counts.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/model.hpp"

namespace cmot {

struct KernelSpec {
  double sigma = 1.0;
  int truncation_radius = 3;
  bool normalized = true;

  static KernelSpec for_sigma(double sigma, bool normalized = true) {
    return {sigma, static_cast<int>(std::ceil(3.0 * sigma)), normalized};
  }
};

struct AdaptiveSigmaConfig {
  int k = 3;
  double gamma = 0.3;
  double sigma_floor = 1.0;
  double sigma_cap = 15.0;

  void validate() const {
    if (k < 1) fail(Errc::invalid_argument, "knn k must be >= 1");
    if (!(sigma_floor > 0.0 && sigma_floor <= sigma_cap))
      fail(Errc::invalid_argument, "need 0 < sigma_floor <= sigma_cap");
    if (!(gamma >= 0.0)) fail(Errc::invalid_argument, "gamma must be non-negative");
  }
};

// Gaussian factors along x and y. The 2-D kernel is their outer product, so
// normalizing each factor normalizes the product.
struct SeparableKernel {
  int radius = 0;
  std::vector<double> kx;
  std::vector<double> ky;

  double operator()(int dy, int dx) const noexcept {
    return ky[static_cast<std::size_t>(dy + radius)] * kx[static_cast<std::size_t>(dx + radius)];
  }
};

// `sub` is the sub-cell position of the center relative to its nearest cell.
inline SeparableKernel make_separable_kernel(const KernelSpec& spec, Point2 sub = {}) {
  if (!(spec.sigma > 0.0)) fail(Errc::invalid_argument, "kernel sigma must be positive");
  if (spec.truncation_radius < static_cast<int>(std::ceil(3.0 * spec.sigma)))
    fail(Errc::invalid_argument, "truncation radius below 3 sigma");
  SeparableKernel k;
  k.radius = spec.truncation_radius;
  const int n = 2 * k.radius + 1;
  k.kx.resize(static_cast<std::size_t>(n));
  k.ky.resize(static_cast<std::size_t>(n));
  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double ex = (i - k.radius) - sub.x;
    const double ey = (i - k.radius) - sub.y;
    k.kx[static_cast<std::size_t>(i)] = std::exp(-ex * ex * inv);
    k.ky[static_cast<std::size_t>(i)] = std::exp(-ey * ey * inv);
    sx += k.kx[static_cast<std::size_t>(i)];
    sy += k.ky[static_cast<std::size_t>(i)];
  }
  if (spec.normalized) {
    for (double& v : k.kx) v /= sx;
    for (double& v : k.ky) v /= sy;
  }
  return k;
}

// Dense (2r+1)x(2r+1) form of the kernel.
inline Grid<double> make_kernel(const KernelSpec& spec, Point2 sub = {}) {
  const SeparableKernel s = make_separable_kernel(spec, sub);
  const int r = s.radius;
  Grid<double> k(2 * r + 1, 2 * r + 1);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) k(dy + r, dx + r) = s(dy, dx);
  return k;
}

// Adds `kernel` centred on `cell`; out-of-grid weights are dropped.
inline void splat(Grid<double>& g, const SeparableKernel& kernel, GridCell cell,
                  double scale = 1.0) {
  const int r = kernel.radius;
  const int y0 = std::max(0, cell.y - r), y1 = std::min(g.height() - 1, cell.y + r);
  const int x0 = std::max(0, cell.x - r), x1 = std::min(g.width() - 1, cell.x + r);
  for (int y = y0; y <= y1; ++y) {
    const double wy = scale * kernel.ky[static_cast<std::size_t>(y - cell.y + r)];
    const double* kx = &kernel.kx[static_cast<std::size_t>(x0 - cell.x + r)];
    double* row = &g(y, x0);
    for (int x = 0; x <= x1 - x0; ++x) row[x] += wy * kx[x];
  }
}

inline double heatmap_sigma(const BBox& b, const GridGeometry& geom) {
  const double hg = b.h / geom.r();
  const double wg = b.w / geom.r();
  return std::max(1.0, (hg + wg) / 2.0 * 0.1);
}

inline void require_inside(const BBox& b, const GridGeometry& geom) {
  if (!b.valid() || b.x < 0.0 || b.y < 0.0 || b.right() > geom.in_w() ||
      b.bottom() > geom.in_h()) {
    fail(Errc::out_of_bounds, "box (" + std::to_string(b.x) + ", " + std::to_string(b.y) +
                                  ", " + std::to_string(b.w) + ", " + std::to_string(b.h) +
                                  ") not inside the image");
  }
}

// Center heatmap: peak-1 Gaussians combined with an elementwise max so the
// map stays in [0, 1] for overlapping objects.
inline Grid<double> heatmap_from_boxes(std::span<const BBox> boxes, const GridGeometry& geom) {
  Grid<double> m(geom.grid_h(), geom.grid_w());
  for (const BBox& b : boxes) {
    require_inside(b, geom);
    const GridCell c = detection_cell(b, geom);
    const double s = heatmap_sigma(b, geom);
    const double inv = 1.0 / (2.0 * s * s);
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        const double dx = x - c.x, dy = y - c.y;
        m(y, x) = std::max(m(y, x), std::exp(-(dx * dx + dy * dy) * inv));
      }
    }
  }
  return m;
}

// One heatmap per class; detections route by class_id.
inline std::vector<Grid<double>> heatmap_from_detections(std::span<const Detection> dets,
                                                         const GridGeometry& geom,
                                                         int num_classes = 1) {
  if (num_classes < 1) fail(Errc::invalid_argument, "need at least one class");
  std::vector<std::vector<BBox>> per_class(static_cast<std::size_t>(num_classes));
  for (const Detection& d : dets) {
    if (d.class_id < 0 || d.class_id >= num_classes)
      fail(Errc::invalid_argument, "class_id out of range");
    per_class[static_cast<std::size_t>(d.class_id)].push_back(d.bbox);
  }
  std::vector<Grid<double>> out;
  out.reserve(per_class.size());
  for (const auto& boxes : per_class) out.push_back(heatmap_from_boxes(boxes, geom));
  return out;
}

inline std::vector<double> adaptive_sigmas(std::span<const Point2> centers,
                                           const AdaptiveSigmaConfig& cfg) {
  cfg.validate();
  if (centers.empty()) fail(Errc::invalid_argument, "adaptive_sigmas needs at least one center");
  const std::size_t n = centers.size();
  std::vector<double> sigmas(n);
  if (n == 1) {
    sigmas[0] = cfg.sigma_cap / 2.0;
    return sigmas;
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), n - 1);
  std::vector<double> dist;
  dist.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    dist.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      dist.push_back(std::hypot(centers[i].x - centers[j].x, centers[i].y - centers[j].y));
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += dist[i];
    mean /= static_cast<double>(k);
    sigmas[j] = std::clamp(cfg.gamma * mean, cfg.sigma_floor, cfg.sigma_cap);
  }
  return sigmas;
}

// Sum of unit-mass Gaussians, one per center (grid coordinates). Kernels are
// normalized before placement, so mass falling off the grid is lost.
inline DensityGrid density_from_centers(std::span<const Point2> centers,
                                        std::span<const double> sigmas, int grid_h, int grid_w) {
  if (centers.size() != sigmas.size())
    fail(Errc::shape_mismatch, "centers and sigmas differ in length");
  DensityGrid d(grid_h, grid_w);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Point2 p = centers[i];
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < grid_w && p.y < grid_h))
      fail(Errc::out_of_bounds, "density center outside grid");
    if (!(sigmas[i] > 0.0)) fail(Errc::invalid_argument, "sigma must be positive");
    const GridCell cell{static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
    splat(d, make_separable_kernel(KernelSpec::for_sigma(sigmas[i]), {p.x - cell.x, p.y - cell.y}),
          cell);
  }
  return d;
}

inline DensityGrid density_from_centers(std::span<const Point2> centers,
                                        std::span<const double> sigmas,
                                        const GridGeometry& geom) {
  return density_from_centers(centers, sigmas, geom.grid_h(), geom.grid_w());
}

// Set bits of an indicator grid in row-major order.
inline std::vector<Point2> set_cells(const IndicatorGrid& u) {
  std::vector<Point2> pts;
  for (int y = 0; y < u.height(); ++y)
    for (int x = 0; x < u.width(); ++x)
      if (u(y, x)) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
  return pts;
}

inline DensityGrid indicator_blur(const IndicatorGrid& u, const AdaptiveSigmaConfig& cfg) {
  const std::vector<Point2> pts = set_cells(u);
  if (pts.empty()) return DensityGrid(u.height(), u.width());
  const std::vector<double> sigmas = adaptive_sigmas(pts, cfg);
  return density_from_centers(pts, sigmas, u.height(), u.width());
}

// Summed-area table with one row/column of zero padding.
class IntegralImage {
 public:
  template <typename T>
  explicit IntegralImage(const Grid<T>& g) : h_(g.height()), w_(g.width()), s_(h_ + 1, w_ + 1) {
    const T* src = g.raw().data();
    double* s = s_.raw().data();
    const std::size_t stride = static_cast<std::size_t>(w_) + 1;
    for (int y = 0; y < h_; ++y) {
      const T* in = src + static_cast<std::size_t>(y) * w_;
      const double* above = s + static_cast<std::size_t>(y) * stride;
      double* cur = s + static_cast<std::size_t>(y + 1) * stride;
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += static_cast<double>(in[x]);
        cur[x + 1] = above[x + 1] + row;
      }
    }
  }

  // Sum over rows [y0, y1) and columns [x0, x1), clipped to the grid.
  double sum(int y0, int x0, int y1, int x1) const noexcept {
    y0 = std::clamp(y0, 0, h_);
    y1 = std::clamp(y1, 0, h_);
    x0 = std::clamp(x0, 0, w_);
    x1 = std::clamp(x1, 0, w_);
    if (y1 <= y0 || x1 <= x0) return 0.0;
    return s_(y1, x1) - s_(y0, x1) - s_(y1, x0) + s_(y0, x0);
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  const Grid<double>& table() const noexcept { return s_; }

 private:
  int h_;
  int w_;
  Grid<double> s_;
};

inline void require_odd_window(int window) {
  if (window < 1 || window % 2 == 0)
    fail(Errc::invalid_argument, "window must be odd and >= 1, got " + std::to_string(window));
}

// Count inside the window x window square centred on every cell, zero padded
// at the border: one value per cell, so K = H * W windows.
template <typename T>
Grid<double> window_counts(const Grid<T>& g, int window) {
  require_odd_window(window);
  const int h = g.height(), w = g.width(), r = window / 2;
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  // Reused summed-area table: repeated large allocations cost more than the
  // filter itself on some allocators.
  thread_local std::vector<double> table;
  table.assign(stride * (static_cast<std::size_t>(h) + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    const double* above = table.data() + static_cast<std::size_t>(y) * stride;
    double* cur = table.data() + static_cast<std::size_t>(y + 1) * stride;
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += static_cast<double>(g(y, x));
      cur[x + 1] = above[x + 1] + row;
    }
  }
  thread_local std::vector<int> x0, x1;
  x0.resize(w);
  x1.resize(w);
  for (int x = 0; x < w; ++x) {
    x0[x] = std::max(0, x - r);
    x1[x] = std::min(w, x + r + 1);
  }
  Grid<double> out(h, w);
  for (int y = 0; y < h; ++y) {
    const double* top = table.data() + static_cast<std::size_t>(std::max(0, y - r)) * stride;
    const double* bot = table.data() + static_cast<std::size_t>(std::min(h, y + r + 1)) * stride;
    double* o = &out(y, 0);
    for (int x = 0; x < w; ++x) o[x] = bot[x1[x]] - top[x1[x]] - bot[x0[x]] + top[x0[x]];
  }
  return out;
}

// Number of in-grid cells covered by the window centred at (y, x).
inline int window_support(int h, int w, int window, int y, int x) noexcept {
  const int r = window / 2;
  const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
  const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
  return ny * nx;
}

}  // namespace cmot
