#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cmot/error.hpp"

namespace cmot {

inline constexpr int kEmbeddingDim = 128;
inline constexpr double kUnitNormTol = 1e-6;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box in input-image pixels, stored MOTChallenge style
// (top-left corner plus extent).
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  Point2 center() const noexcept { return {x + w / 2.0, y + h / 2.0}; }
  double area() const noexcept { return w * h; }
  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }

  static BBox from_center(Point2 c, double w, double h) noexcept {
    return {c.x - w / 2.0, c.y - h / 2.0, w, h};
  }

  bool valid() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && w > 0.0 && h > 0.0;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// One identity-tagged box in one frame (ground truth or tracker output).
struct TrackBox {
  int frame = 1;
  int id = 1;
  BBox box;
  double confidence = 1.0;

  friend bool operator==(const TrackBox&, const TrackBox&) = default;
};

using Embedding = std::vector<double>;

struct Detection {
  BBox bbox;
  double confidence = 1.0;
  int class_id = 0;
  std::optional<Embedding> embedding;
};

inline double l2_norm(const Embedding& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

inline bool is_unit(const Embedding& e, double tol = kUnitNormTol) {
  return !e.empty() && std::abs(l2_norm(e) - 1.0) <= tol;
}

inline Embedding normalized(Embedding e) {
  const double n = l2_norm(e);
  if (!(n > 0.0)) fail(Errc::invalid_argument, "cannot normalize a zero vector");
  for (double& v : e) v /= n;
  return e;
}

// Input image size plus downsampling factor; the feature grid is the image
// divided by r in each direction.
class GridGeometry {
 public:
  GridGeometry() : GridGeometry(1088, 608, 4) {}
  GridGeometry(int in_w, int in_h, int r) : in_w_(in_w), in_h_(in_h), r_(r) {
    if (r <= 0) fail(Errc::invalid_argument, "downsample factor must be positive");
    if (in_w <= 0 || in_h <= 0) fail(Errc::invalid_argument, "image size must be positive");
    if (in_w % r != 0 || in_h % r != 0) {
      fail(Errc::invalid_argument,
           "image size " + std::to_string(in_w) + "x" + std::to_string(in_h) +
               " is not divisible by r=" + std::to_string(r));
    }
  }

  int in_w() const noexcept { return in_w_; }
  int in_h() const noexcept { return in_h_; }
  int r() const noexcept { return r_; }
  int grid_w() const noexcept { return in_w_ / r_; }
  int grid_h() const noexcept { return in_h_ / r_; }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;

 private:
  int in_w_;
  int in_h_;
  int r_;
};

struct GridCell {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridLocation {
  GridCell cell;
  Point2 offset;  // fractional part, each component in [0, 1)
};

inline GridLocation center_to_grid(Point2 p, const GridGeometry& geom) {
  if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < geom.in_w() && p.y < geom.in_h())) {
    fail(Errc::out_of_bounds, "point (" + std::to_string(p.x) + ", " +
                                  std::to_string(p.y) + ") outside " +
                                  std::to_string(geom.in_w()) + "x" +
                                  std::to_string(geom.in_h()) + " image");
  }
  const double r = geom.r();
  const double gx = p.x / r;
  const double gy = p.y / r;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  return {{static_cast<int>(fx), static_cast<int>(fy)}, {gx - fx, gy - fy}};
}

// Cell of a detection center, clamped into the image. Detectors and jittered
// boxes can put the center a hair outside the frame.
inline GridCell detection_cell(const BBox& b, const GridGeometry& geom) {
  Point2 c = b.center();
  c.x = std::clamp(c.x, 0.0, std::nextafter(static_cast<double>(geom.in_w()), 0.0));
  c.y = std::clamp(c.y, 0.0, std::nextafter(static_cast<double>(geom.in_h()), 0.0));
  return center_to_grid(c, geom).cell;
}

// Pixel center of a grid cell.
inline Point2 cell_center_px(GridCell c, const GridGeometry& geom) {
  return {(c.x + 0.5) * geom.r(), (c.y + 0.5) * geom.r()};
}

inline double iou(const BBox& a, const BBox& b) noexcept {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double cosine_distance(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) fail(Errc::shape_mismatch, "embedding dimensions differ");
  if (!is_unit(a) || !is_unit(b)) fail(Errc::invalid_argument, "embedding is not unit-norm");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(1.0 - dot, 0.0, 2.0);
}

}  // namespace cmot
