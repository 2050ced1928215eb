#pragma once

// Seeded synthetic crowd scenes: ground-truth trajectories, occlusion-driven
// missed detections, clutter, identity embeddings and gt density maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "cmot/density.hpp"
#include "cmot/error.hpp"
#include "cmot/model.hpp"
#include "cmot/rng.hpp"

namespace cmot {

struct SimConfig {
  std::uint64_t seed = 1;
  int width = 1088;
  int height = 608;
  int r = 4;
  int n_agents = 8;
  int n_frames = 60;
  double agent_height_min = 80.0;
  double agent_height_max = 140.0;
  double agent_aspect = 0.4;  // w / h
  double speed_min = 1.0;
  double speed_max = 3.0;
  double turn_noise_std = 0.05;  // radians per frame
  double occlusion_miss_base = 0.0;
  double occlusion_miss_gain = 0.0;
  double fp_rate = 0.0;
  double box_jitter_std = 0.0;
  double embedding_noise_std = 0.0;
  AdaptiveSigmaConfig sigma;

  void validate() const {
    GridGeometry(width, height, r);
    if (n_agents < 0 || n_frames < 1) fail(Errc::invalid_argument, "bad agent/frame count");
    if (n_agents > kEmbeddingDim)
      fail(Errc::invalid_argument, "at most " + std::to_string(kEmbeddingDim) + " agents");
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0))
        fail(Errc::invalid_argument, std::string(name) + " must lie in [0, 1]");
    };
    prob(occlusion_miss_base, "occlusion_miss_base");
    prob(occlusion_miss_gain, "occlusion_miss_gain");
    if (fp_rate < 0.0 || box_jitter_std < 0.0 || embedding_noise_std < 0.0)
      fail(Errc::invalid_argument, "rates and noise levels must be non-negative");
    if (!(agent_height_min > 0.0 && agent_height_min <= agent_height_max))
      fail(Errc::invalid_argument, "bad agent height range");
    if (agent_height_max >= height || agent_height_max * agent_aspect >= width)
      fail(Errc::invalid_argument, "agents do not fit in the image");
    if (!(speed_min >= 0.0 && speed_min <= speed_max))
      fail(Errc::invalid_argument, "bad speed range");
    sigma.validate();
  }
};

struct SceneFrame {
  std::vector<TrackBox> gt;
  std::vector<Detection> detections;
  std::vector<int> det_source;  // gt id per detection, -1 for clutter
  DensityGrid density;
};

struct Scene {
  SimConfig cfg;
  GridGeometry geom;
  std::vector<Embedding> identity_basis;  // row i belongs to gt id i + 1
  std::vector<SceneFrame> frames;
};

namespace detail {

inline double quantize(double v) { return std::round(v * 100.0) / 100.0; }

inline BBox quantize(const BBox& b) {
  return {quantize(b.x), quantize(b.y), std::max(0.01, quantize(b.w)),
          std::max(0.01, quantize(b.h))};
}

inline Embedding random_unit(SplitMix64& rng, int dim) {
  Embedding e(static_cast<std::size_t>(dim));
  for (double& v : e) v = rng.normal();
  return normalized(std::move(e));
}

// Orthonormal identity codes via Gram-Schmidt on Gaussian vectors.
inline std::vector<Embedding> orthonormal_basis(SplitMix64& rng, int count, int dim) {
  std::vector<Embedding> basis;
  while (static_cast<int>(basis.size()) < count) {
    Embedding v = random_unit(rng, dim);
    for (const Embedding& b : basis) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += v[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
      for (int i = 0; i < dim; ++i) v[static_cast<std::size_t>(i)] -= dot * b[static_cast<std::size_t>(i)];
    }
    if (l2_norm(v) > 1e-6) basis.push_back(normalized(std::move(v)));
  }
  return basis;
}

inline Embedding noisy(const Embedding& base, double stddev, SplitMix64& rng) {
  Embedding e = base;
  for (double& v : e) v += rng.normal(0.0, stddev);
  return normalized(std::move(e));
}

struct Agent {
  double cx, cy, w, h, vx, vy;
  BBox box() const noexcept { return BBox::from_center({cx, cy}, w, h); }
};

inline void reflect(double& c, double& v, double half, double extent) {
  if (c - half < 0.0) {
    c = 2.0 * half - c;
    v = -v;
  }
  if (c + half > extent) {
    c = 2.0 * (extent - half) - c;
    v = -v;
  }
  c = std::clamp(c, half, extent - half);
}

}  // namespace detail

// Probability that an agent is missed given its overlap with agents nearer
// to the camera (larger bottom edge).
inline double miss_probability(const SimConfig& cfg, double max_iou_nearer) {
  return std::min(1.0, cfg.occlusion_miss_base + cfg.occlusion_miss_gain * max_iou_nearer);
}

inline std::vector<double> nearer_overlap(const std::vector<BBox>& boxes) {
  std::vector<double> out(boxes.size(), 0.0);
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = 0; j < boxes.size(); ++j)
      if (j != i && boxes[j].bottom() > boxes[i].bottom())
        out[i] = std::max(out[i], iou(boxes[i], boxes[j]));
  return out;
}

inline Scene generate(const SimConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  Scene scene{cfg, GridGeometry(cfg.width, cfg.height, cfg.r), {}, {}};
  scene.identity_basis = detail::orthonormal_basis(rng, cfg.n_agents, kEmbeddingDim);

  std::vector<detail::Agent> agents;
  agents.reserve(static_cast<std::size_t>(cfg.n_agents));
  for (int i = 0; i < cfg.n_agents; ++i) {
    detail::Agent a{};
    a.h = rng.uniform(cfg.agent_height_min, cfg.agent_height_max);
    a.w = a.h * cfg.agent_aspect;
    a.cx = rng.uniform(a.w / 2.0, cfg.width - a.w / 2.0);
    a.cy = rng.uniform(a.h / 2.0, cfg.height - a.h / 2.0);
    const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    a.vx = speed * std::cos(heading);
    a.vy = speed * std::sin(heading);
    agents.push_back(a);
  }

  scene.frames.reserve(static_cast<std::size_t>(cfg.n_frames));
  for (int f = 1; f <= cfg.n_frames; ++f) {
    if (f > 1) {
      for (detail::Agent& a : agents) {
        const double turn = rng.normal(0.0, cfg.turn_noise_std);
        const double c = std::cos(turn), s = std::sin(turn);
        const double vx = c * a.vx - s * a.vy, vy = s * a.vx + c * a.vy;
        a.vx = vx;
        a.vy = vy;
        a.cx += a.vx;
        a.cy += a.vy;
        detail::reflect(a.cx, a.vx, a.w / 2.0, cfg.width);
        detail::reflect(a.cy, a.vy, a.h / 2.0, cfg.height);
      }
    }

    SceneFrame frame;
    std::vector<BBox> boxes;
    std::vector<Point2> centers;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const BBox b = detail::quantize(agents[i].box());
      boxes.push_back(b);
      frame.gt.push_back({f, static_cast<int>(i) + 1, b, 1.0});
      const GridCell c = detection_cell(b, scene.geom);
      centers.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
    }

    const std::vector<double> overlap = nearer_overlap(boxes);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const double u = rng.uniform();
      if (u < miss_probability(cfg, overlap[i])) continue;
      BBox b = boxes[i];
      if (cfg.box_jitter_std > 0.0) {
        b.x += rng.normal(0.0, cfg.box_jitter_std);
        b.y += rng.normal(0.0, cfg.box_jitter_std);
        b.w = std::max(1.0, b.w + rng.normal(0.0, cfg.box_jitter_std));
        b.h = std::max(1.0, b.h + rng.normal(0.0, cfg.box_jitter_std));
      }
      Detection d;
      d.bbox = detail::quantize(b);
      d.confidence = detail::quantize(rng.uniform(0.6, 1.0));
      d.embedding = cfg.embedding_noise_std > 0.0
                        ? detail::noisy(scene.identity_basis[i], cfg.embedding_noise_std, rng)
                        : scene.identity_basis[i];
      frame.detections.push_back(std::move(d));
      frame.det_source.push_back(static_cast<int>(i) + 1);
    }

    const int n_fp = rng.poisson(cfg.fp_rate);
    for (int k = 0; k < n_fp; ++k) {
      const double h = rng.uniform(cfg.agent_height_min, cfg.agent_height_max);
      const double w = h * cfg.agent_aspect;
      const double x = rng.uniform(0.0, cfg.width - w);
      const double y = rng.uniform(0.0, cfg.height - h);
      Detection d;
      d.bbox = detail::quantize(BBox{x, y, w, h});
      d.confidence = detail::quantize(rng.uniform(0.1, 0.5));
      d.embedding = detail::random_unit(rng, kEmbeddingDim);
      frame.detections.push_back(std::move(d));
      frame.det_source.push_back(-1);
    }

    if (centers.empty()) {
      frame.density = DensityGrid(scene.geom.grid_h(), scene.geom.grid_w());
    } else {
      const std::vector<double> sigmas = adaptive_sigmas(centers, cfg.sigma);
      frame.density = density_from_centers(centers, sigmas, scene.geom);
    }
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

inline const std::vector<std::string_view>& preset_names() {
  static const std::vector<std::string_view> names{"sparse", "crowded", "mot20like"};
  return names;
}

inline SimConfig preset(std::string_view name) {
  SimConfig c;
  if (name == "sparse") {
    c.seed = 7;
    c.n_agents = 8;
    c.n_frames = 60;
    c.occlusion_miss_base = 0.02;
    c.occlusion_miss_gain = 0.5;
    c.fp_rate = 0.5;
    c.box_jitter_std = 1.0;
    c.embedding_noise_std = 0.03;
  } else if (name == "crowded") {
    c.seed = 20241;
    c.n_agents = 40;
    c.n_frames = 100;
    c.occlusion_miss_base = 0.05;
    c.occlusion_miss_gain = 0.8;
    c.fp_rate = 2.0;
    c.box_jitter_std = 1.5;
    c.embedding_noise_std = 0.05;
  } else if (name == "mot20like") {
    c.seed = 2020;
    c.n_agents = 100;
    c.n_frames = 60;
    c.agent_height_min = 60.0;
    c.agent_height_max = 100.0;
    c.occlusion_miss_base = 0.08;
    c.occlusion_miss_gain = 0.9;
    c.fp_rate = 4.0;
    c.box_jitter_std = 1.5;
    c.embedding_noise_std = 0.05;
  } else {
    fail(Errc::invalid_argument, "unknown preset '" + std::string(name) + "'");
  }
  return c;
}

// Fraction of gt boxes without a detection, and clutter detections per frame.
struct SceneStats {
  double miss_rate = 0.0;
  double fp_per_frame = 0.0;
};

inline SceneStats scene_stats(const Scene& s) {
  std::size_t gt = 0, hit = 0, fp = 0;
  for (const SceneFrame& f : s.frames) {
    gt += f.gt.size();
    for (int src : f.det_source) (src < 0 ? fp : hit) += 1;
  }
  SceneStats st;
  if (gt) st.miss_rate = 1.0 - static_cast<double>(hit) / static_cast<double>(gt);
  if (!s.frames.empty()) st.fp_per_frame = static_cast<double>(fp) / static_cast<double>(s.frames.size());
  return st;
}

}  // namespace cmot
