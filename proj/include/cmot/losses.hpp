#pragma once

// Training objectives for the joint detection / counting / re-identification
// model, each returning its value together with the analytic gradient.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "cmot/density.hpp"
#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/ssim.hpp"

namespace cmot {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
};

struct CountLossParams {
  double mu = 1000.0;
  SsimParams ssim;
  // Adds (1 - SSIM) instead of SSIM. Off by default: the objective is
  // transcribed as MSE + SSIM.
  bool ssim_as_dissimilarity = false;
};

struct UncertaintyWeights {
  double w1 = -2.0;
  double w2 = -1.0;
  double w3 = -1.0;
};

struct GridLoss {
  double value = 0.0;
  Grid<double> grad;
};

inline constexpr double kHeatmapEps = 1e-6;

// Penalty-reduced pixel focal loss on a center heatmap, normalized by the
// number of gt == 1 cells.
inline GridLoss focal_center_loss(const Grid<double>& pred, const Grid<double>& gt,
                                  const FocalParams& params = {}) {
  require_same_shape(pred, gt, "focal_center_loss");
  std::size_t n_pos = 0;
  for (double g : gt.values()) n_pos += (g == 1.0);
  if (n_pos == 0) fail(Errc::invalid_argument, "focal_center_loss: no positive cells");
  const double inv_n = 1.0 / static_cast<double>(n_pos);
  const double a = params.alpha, b = params.beta;

  GridLoss out{0.0, Grid<double>(pred.height(), pred.width())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred.raw()[i];
    const double p = std::clamp(raw, kHeatmapEps, 1.0 - kHeatmapEps);
    const bool inside = raw == p;
    const double g = gt.raw()[i];
    double term, dterm;
    if (g == 1.0) {
      const double q = 1.0 - p;
      term = std::pow(q, a) * std::log(p);
      dterm = -a * std::pow(q, a - 1.0) * std::log(p) + std::pow(q, a) / p;
    } else {
      const double wneg = std::pow(1.0 - g, b);
      term = wneg * std::pow(p, a) * std::log(1.0 - p);
      dterm = wneg * (a * std::pow(p, a - 1.0) * std::log(1.0 - p) - std::pow(p, a) / (1.0 - p));
    }
    out.value -= term * inv_n;
    out.grad.raw()[i] = inside ? -dterm * inv_n : 0.0;
  }
  return out;
}

using Pair2 = std::array<double, 2>;

struct ScaleOffsetLoss {
  double value = 0.0;
  std::vector<Pair2> grad_scale;
  std::vector<Pair2> grad_offset;
};

inline double sign0(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Sum of L1 distances of per-object sizes and sub-cell offsets.
inline ScaleOffsetLoss scale_offset_loss(std::span<const Pair2> pred_s, std::span<const Pair2> gt_s,
                                         std::span<const Pair2> pred_o,
                                         std::span<const Pair2> gt_o) {
  const std::size_t n = pred_s.size();
  if (gt_s.size() != n || pred_o.size() != n || gt_o.size() != n)
    fail(Errc::shape_mismatch, "scale_offset_loss: object lists differ in length");
  ScaleOffsetLoss out;
  out.grad_scale.resize(n);
  out.grad_offset.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double ds = pred_s[i][c] - gt_s[i][c];
      const double doff = pred_o[i][c] - gt_o[i][c];
      out.value += std::abs(ds) + std::abs(doff);
      out.grad_scale[i][c] = sign0(ds);
      out.grad_offset[i][c] = sign0(doff);
    }
  }
  return out;
}

// Squared L2 to the amplified target plus the SSIM term.
inline GridLoss counting_loss(const DensityGrid& pred, const DensityGrid& gt,
                              const CountLossParams& params = {}) {
  require_same_shape(pred, gt, "counting_loss");
  if (!(params.mu > 0.0)) fail(Errc::invalid_argument, "mu must be positive");
  DensityGrid target(gt.height(), gt.width());
  for (std::size_t i = 0; i < gt.size(); ++i) target.raw()[i] = params.mu * gt.raw()[i];

  const SsimResult s = ssim_eval(pred, target, params.ssim, true);
  GridLoss out{0.0, Grid<double>(pred.height(), pred.width())};
  const double sign = params.ssim_as_dissimilarity ? -1.0 : 1.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.raw()[i] - target.raw()[i];
    out.value += d * d;
    out.grad.raw()[i] = 2.0 * d + sign * s.grad.raw()[i];
  }
  out.value += params.ssim_as_dissimilarity ? 1.0 - s.value : s.value;
  return out;
}

inline double squared_distance(const Grid<double>& a, const Grid<double>& b) {
  require_same_shape(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.raw()[i] - b.raw()[i];
    s += d * d;
  }
  return s;
}

// Blurred detections against the (fixed) predicted density.
inline double det_count_loss(const IndicatorGrid& u, const DensityGrid& dhat,
                             const AdaptiveSigmaConfig& cfg = {}) {
  require_same_shape(u, dhat, "det_count_loss");
  return squared_distance(indicator_blur(u, cfg), dhat);
}

// Same objective with real-valued weights on the candidate centers. The
// kernel bandwidths depend only on which cells are non-zero, so the loss is
// quadratic in the weights; the gradient is reported on those cells only.
inline GridLoss det_count_loss_relaxed(const Grid<double>& weights, const DensityGrid& dhat,
                                       const AdaptiveSigmaConfig& cfg = {}) {
  require_same_shape(weights, dhat, "det_count_loss_relaxed");
  std::vector<Point2> pts;
  std::vector<GridCell> cells;
  for (int y = 0; y < weights.height(); ++y)
    for (int x = 0; x < weights.width(); ++x)
      if (weights(y, x) != 0.0) {
        pts.push_back({static_cast<double>(x), static_cast<double>(y)});
        cells.push_back({x, y});
      }
  GridLoss out{0.0, Grid<double>(weights.height(), weights.width())};
  DensityGrid blur(weights.height(), weights.width());
  std::vector<SeparableKernel> kernels;
  if (!pts.empty()) {
    const std::vector<double> sigmas = adaptive_sigmas(pts, cfg);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      kernels.push_back(make_separable_kernel(KernelSpec::for_sigma(sigmas[i])));
      splat(blur, kernels.back(), cells[i], weights(cells[i].y, cells[i].x));
    }
  }
  DensityGrid resid(weights.height(), weights.width());
  for (std::size_t i = 0; i < blur.size(); ++i) {
    resid.raw()[i] = blur.raw()[i] - dhat.raw()[i];
    out.value += resid.raw()[i] * resid.raw()[i];
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SeparableKernel& k = kernels[i];
    const GridCell c = cells[i];
    double g = 0.0;
    for (int dy = -k.radius; dy <= k.radius; ++dy)
      for (int dx = -k.radius; dx <= k.radius; ++dx)
        if (resid.contains(c.y + dy, c.x + dx)) g += k(dy, dx) * resid(c.y + dy, c.x + dx);
    out.grad(c.y, c.x) = 2.0 * g;
  }
  return out;
}

// Mean squared difference of window counts between the density map and the
// detection indicator, over all K = H * W zero-padded windows. The gradient
// is with respect to the density; the adjoint of a centred box sum is the
// same box sum.
template <typename U>
GridLoss window_count_loss(const DensityGrid& dhat, const Grid<U>& u, int window) {
  require_same_shape(dhat, u, "window_count_loss");
  require_odd_window(window);
  DensityGrid diff(dhat.height(), dhat.width());
  for (std::size_t i = 0; i < dhat.size(); ++i)
    diff.raw()[i] = dhat.raw()[i] - static_cast<double>(u.raw()[i]);
  const Grid<double> s = window_counts(diff, window);
  const double k = static_cast<double>(dhat.size());
  GridLoss out{0.0, window_counts(s, window)};
  for (double v : s.values()) out.value += v * v;
  out.value /= k;
  for (double& g : out.grad.raw()) g *= 2.0 / k;
  return out;
}

struct ReidBatch {
  Grid<double> logits;     // N rows, L identity classes
  std::vector<int> labels; // index of the one-hot entry per row

  // Logits of a linear identity classifier applied to embeddings.
  static ReidBatch from_embeddings(const Grid<double>& embeddings, const Grid<double>& classifier,
                                   std::vector<int> labels) {
    if (embeddings.width() != classifier.width())
      fail(Errc::shape_mismatch, "embedding and classifier dimensions differ");
    ReidBatch b{Grid<double>(embeddings.height(), classifier.height()), std::move(labels)};
    for (int i = 0; i < embeddings.height(); ++i)
      for (int l = 0; l < classifier.height(); ++l) {
        double s = 0.0;
        for (int d = 0; d < embeddings.width(); ++d) s += embeddings(i, d) * classifier(l, d);
        b.logits(i, l) = s;
      }
    return b;
  }
};

// Softmax cross-entropy summed over objects.
inline GridLoss reid_loss(const ReidBatch& batch) {
  const int n = batch.logits.height(), l = batch.logits.width();
  if (n < 1) fail(Errc::invalid_argument, "reid_loss needs at least one object");
  if (l < 2) fail(Errc::invalid_argument, "reid_loss needs at least two identities");
  if (static_cast<int>(batch.labels.size()) != n)
    fail(Errc::shape_mismatch, "reid_loss: one label per row required");
  GridLoss out{0.0, Grid<double>(n, l)};
  for (int i = 0; i < n; ++i) {
    const int label = batch.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= l)
      fail(Errc::invalid_argument, "reid label " + std::to_string(label) + " outside [0, " +
                                       std::to_string(l) + ")");
    double m = batch.logits(i, 0);
    for (int c = 1; c < l; ++c) m = std::max(m, batch.logits(i, c));
    double z = 0.0;
    for (int c = 0; c < l; ++c) z += std::exp(batch.logits(i, c) - m);
    const double lse = m + std::log(z);
    out.value += lse - batch.logits(i, label);
    for (int c = 0; c < l; ++c) out.grad(i, c) = std::exp(batch.logits(i, c) - lse);
    out.grad(i, label) -= 1.0;
  }
  return out;
}

struct TotalLoss {
  double value = 0.0;
  std::array<double, 3> grad_w{};
};

// Uncertainty-weighted sum of the three task losses.
inline TotalLoss total_loss(double l_det_dc, double l_cnt_cd, double l_id,
                            const UncertaintyWeights& w = {}) {
  const std::array<double, 3> l{l_det_dc, l_cnt_cd, l_id};
  const std::array<double, 3> ws{w.w1, w.w2, w.w3};
  TotalLoss out;
  for (int i = 0; i < 3; ++i) {
    const double e = std::exp(-ws[i]);
    out.value += 0.5 * e * l[i] + ws[i];
    out.grad_w[i] = -0.5 * e * l[i] + 1.0;
  }
  return out;
}

}  // namespace cmot
