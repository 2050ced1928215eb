#pragma once

// Online association: Kalman prediction, a first matching stage on blended
// appearance/motion cost for confirmed tracks, a second IoU stage for the
// rest, and track birth/confirmation/termination.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cmot/assignment.hpp"
#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/kalman.hpp"
#include "cmot/model.hpp"

namespace cmot {

struct AssocConfig {
  double lambda = 0.98;
  double tau = 0.5;
  int max_age = 30;
  double gating_threshold = 9.4877;  // chi-square, 4 dof, 0.95
  double embedding_momentum = 0.9;
  int n_init = 3;
  // First-stage pairs whose blended cost exceeds this are not matched.
  double max_embedding_cost = 0.4;
  // Unmatched detections below this confidence do not start tracks.
  double new_track_confidence = 0.4;
  KalmanParams kalman;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(Errc::invalid_argument, "lambda must lie in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) fail(Errc::invalid_argument, "tau must lie in [0, 1]");
    if (max_age < 0) fail(Errc::invalid_argument, "max_age must be non-negative");
    if (!(gating_threshold > 0.0)) fail(Errc::invalid_argument, "gating_threshold must be positive");
    if (!(embedding_momentum >= 0.0 && embedding_momentum <= 1.0))
      fail(Errc::invalid_argument, "embedding_momentum must lie in [0, 1]");
    if (n_init < 1) fail(Errc::invalid_argument, "n_init must be >= 1");
  }
};

enum class TrackStatus { tentative, confirmed, deleted };

struct Track {
  int id = 0;
  KalmanState state;
  std::optional<Embedding> embedding;
  int hits = 0;
  int age = 0;
  int time_since_update = 0;
  TrackStatus status = TrackStatus::tentative;

  BBox box() const { return box_from_state(state.mean); }
  bool confirmed() const noexcept { return status == TrackStatus::confirmed; }
};

struct CostMatrix {
  Grid<double> cost;
  Grid<std::uint8_t> feasible;
};

// cost = lambda * cosine + (1 - lambda) * min(1, mahalanobis / gate). Pairs
// outside the chi-square gate, or lacking an embedding on either side, are
// infeasible.
inline CostMatrix build_cost_matrix(std::span<const Track> tracks, std::span<const Detection> dets,
                                    const AssocConfig& cfg) {
  const int n = static_cast<int>(tracks.size()), m = static_cast<int>(dets.size());
  CostMatrix out{Grid<double>(n, m, 1.0), Grid<std::uint8_t>(n, m, 0)};
  for (int t = 0; t < n; ++t) {
    const Track& tr = tracks[static_cast<std::size_t>(t)];
    const Projection proj = kf_project(tr.state, cfg.kalman);
    const Eigen::LLT<Matrix4> llt(proj.covariance);
    if (llt.info() != Eigen::Success)
      fail(Errc::singular, "build_cost_matrix: innovation covariance is not positive definite");
    for (int d = 0; d < m; ++d) {
      const Detection& det = dets[static_cast<std::size_t>(d)];
      if (!tr.embedding || !det.embedding) continue;
      const Vector4 diff = to_measurement(det.bbox) - proj.mean;
      const double maha = llt.matrixL().solve(diff).squaredNorm();
      if (maha > cfg.gating_threshold) continue;
      const double cos = cosine_distance(*tr.embedding, *det.embedding);
      out.cost(t, d) = cfg.lambda * cos + (1.0 - cfg.lambda) * std::min(1.0, maha / cfg.gating_threshold);
      out.feasible(t, d) = 1;
    }
  }
  return out;
}

struct FrameOutput {
  std::vector<TrackBox> records;
};

class Tracker {
 public:
  explicit Tracker(AssocConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const AssocConfig& config() const noexcept { return cfg_; }
  const std::vector<Track>& tracks() const noexcept { return tracks_; }
  int frames_seen() const noexcept { return frame_; }

  // Advances one frame; returns confirmed tracks updated in this frame.
  FrameOutput step(std::span<const Detection> dets) {
    ++frame_;
    for (Track& t : tracks_) {
      t.state = kf_predict(t.state, cfg_.kalman);
      ++t.age;
      ++t.time_since_update;
    }

    std::vector<int> det_free(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) det_free[i] = static_cast<int>(i);
    std::vector<int> track_free;
    std::vector<std::pair<int, int>> matched;

    // Stage 1: confirmed tracks on blended appearance + motion cost.
    std::vector<int> confirmed_idx;
    for (std::size_t i = 0; i < tracks_.size(); ++i)
      if (tracks_[i].confirmed()) confirmed_idx.push_back(static_cast<int>(i));
      else track_free.push_back(static_cast<int>(i));
    {
      std::vector<Track> subset;
      subset.reserve(confirmed_idx.size());
      for (int i : confirmed_idx) subset.push_back(tracks_[static_cast<std::size_t>(i)]);
      CostMatrix cm = build_cost_matrix(subset, dets, cfg_);
      for (int r = 0; r < cm.cost.height(); ++r)
        for (int c = 0; c < cm.cost.width(); ++c)
          if (cm.feasible(r, c) && cm.cost(r, c) > cfg_.max_embedding_cost) cm.feasible(r, c) = 0;
      const Assignment a = hungarian(cm.cost, cm.feasible);
      std::vector<char> det_used(dets.size(), 0);
      for (auto [r, c] : a.matches) {
        matched.emplace_back(confirmed_idx[static_cast<std::size_t>(r)], c);
        det_used[static_cast<std::size_t>(c)] = 1;
      }
      for (int r : a.unmatched_rows) track_free.push_back(confirmed_idx[static_cast<std::size_t>(r)]);
      std::erase_if(det_free, [&](int d) { return det_used[static_cast<std::size_t>(d)] != 0; });
    }
    std::sort(track_free.begin(), track_free.end());

    // Stage 2: everything left, on 1 - IoU with the tau gate.
    {
      const int n = static_cast<int>(track_free.size()), m = static_cast<int>(det_free.size());
      Grid<double> cost(n, m, 1.0);
      Grid<std::uint8_t> ok(n, m, 0);
      for (int r = 0; r < n; ++r) {
        const BBox tb = tracks_[static_cast<std::size_t>(track_free[static_cast<std::size_t>(r)])].box();
        for (int c = 0; c < m; ++c) {
          const double v = iou(tb, dets[static_cast<std::size_t>(det_free[static_cast<std::size_t>(c)])].bbox);
          cost(r, c) = 1.0 - v;
          ok(r, c) = v >= cfg_.tau ? 1 : 0;
        }
      }
      const Assignment a = hungarian(cost, ok);
      std::vector<int> still_free_dets;
      for (auto [r, c] : a.matches)
        matched.emplace_back(track_free[static_cast<std::size_t>(r)], det_free[static_cast<std::size_t>(c)]);
      for (int c : a.unmatched_cols) still_free_dets.push_back(det_free[static_cast<std::size_t>(c)]);
      det_free = std::move(still_free_dets);
    }

    for (auto [t, d] : matched) update_track(tracks_[static_cast<std::size_t>(t)], dets[static_cast<std::size_t>(d)]);

    for (Track& t : tracks_) {
      if (t.time_since_update == 0) continue;
      if (t.status == TrackStatus::tentative || t.time_since_update > cfg_.max_age)
        t.status = TrackStatus::deleted;
    }
    std::erase_if(tracks_, [](const Track& t) { return t.status == TrackStatus::deleted; });

    std::sort(det_free.begin(), det_free.end());
    for (int d : det_free)
      if (dets[static_cast<std::size_t>(d)].confidence >= cfg_.new_track_confidence)
        start_track(dets[static_cast<std::size_t>(d)]);

    FrameOutput out;
    for (const Track& t : tracks_)
      if (t.confirmed() && t.time_since_update == 0)
        out.records.push_back({frame_, t.id, t.box(), 1.0});
    std::sort(out.records.begin(), out.records.end(),
              [](const TrackBox& a, const TrackBox& b) { return a.id < b.id; });
    return out;
  }

 private:
  void update_track(Track& t, const Detection& det) {
    t.state = kf_update(t.state, det, cfg_.kalman);
    if (det.embedding) {
      if (t.embedding) {
        Embedding e(t.embedding->size());
        for (std::size_t i = 0; i < e.size(); ++i)
          e[i] = cfg_.embedding_momentum * (*t.embedding)[i] +
                 (1.0 - cfg_.embedding_momentum) * (*det.embedding)[i];
        t.embedding = normalized(std::move(e));
      } else {
        t.embedding = det.embedding;
      }
    }
    ++t.hits;
    t.time_since_update = 0;
    if (t.status == TrackStatus::tentative && t.hits >= cfg_.n_init) t.status = TrackStatus::confirmed;
  }

  void start_track(const Detection& det) {
    Track t;
    t.id = next_id_++;
    t.state = kf_initiate(det, cfg_.kalman);
    t.embedding = det.embedding;
    t.hits = 1;
    t.age = 1;
    t.time_since_update = 0;
    // Tracks seen in the very first frame have no history to wait for.
    t.status = (frame_ == 1 || cfg_.n_init <= 1) ? TrackStatus::confirmed : TrackStatus::tentative;
    tracks_.push_back(std::move(t));
  }

  AssocConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int frame_ = 0;
};

// Runs a tracker over a whole sequence of per-frame detections.
inline std::vector<TrackBox> track_sequence(std::span<const std::vector<Detection>> frames,
                                            const AssocConfig& cfg = {}) {
  Tracker tracker(cfg);
  std::vector<TrackBox> out;
  for (const auto& dets : frames) {
    FrameOutput fo = tracker.step(dets);
    out.insert(out.end(), fo.records.begin(), fo.records.end());
  }
  return out;
}

}  // namespace cmot
