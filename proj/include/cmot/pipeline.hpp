#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cmot/config.hpp"
#include "cmot/metrics.hpp"
#include "cmot/refine.hpp"
#include "cmot/sim.hpp"
#include "cmot/track.hpp"

namespace cmot {

struct PipelineResult {
  std::vector<TrackBox> tracks;
  std::vector<RefineReport> reports;  // one per frame when densities were given
};

// Optional per-frame refinement against a density map, then association.
inline PipelineResult run_tracking(std::span<const std::vector<Detection>> frames,
                                   std::span<const DensityGrid> densities, const RunConfig& cfg) {
  if (!densities.empty() && densities.size() < frames.size())
    fail(Errc::dimension_mismatch, "fewer density frames (" + std::to_string(densities.size()) +
                                       ") than detection frames (" + std::to_string(frames.size()) + ")");
  PipelineResult out;
  Tracker tracker(cfg.assoc);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    FrameOutput fo;
    if (densities.empty()) {
      fo = tracker.step(frames[f]);
    } else {
      RefinedFrame rf = refine_frame(frames[f], densities[f], cfg.refine);
      fo = tracker.step(rf.detections);
      out.reports.push_back(std::move(rf.report));
    }
    out.tracks.insert(out.tracks.end(), fo.records.begin(), fo.records.end());
  }
  return out;
}

inline std::vector<std::vector<Detection>> scene_detections(const Scene& s) {
  std::vector<std::vector<Detection>> out;
  out.reserve(s.frames.size());
  for (const SceneFrame& f : s.frames) out.push_back(f.detections);
  return out;
}

inline std::vector<DensityGrid> scene_densities(const Scene& s) {
  std::vector<DensityGrid> out;
  out.reserve(s.frames.size());
  for (const SceneFrame& f : s.frames) out.push_back(f.density);
  return out;
}

inline std::vector<TrackBox> scene_ground_truth(const Scene& s) {
  std::vector<TrackBox> out;
  for (const SceneFrame& f : s.frames) out.insert(out.end(), f.gt.begin(), f.gt.end());
  return out;
}

// Tracks a simulated scene (optionally refining against its gt density)
// and scores the result against its ground truth.
inline SequenceEval evaluate_scene(const Scene& s, const RunConfig& cfg, bool use_density) {
  const auto dets = scene_detections(s);
  const auto dens = use_density ? scene_densities(s) : std::vector<DensityGrid>{};
  RunConfig c = cfg;
  c.refine.geom = s.geom;
  const PipelineResult r = run_tracking(dets, dens, c);
  const auto gt = scene_ground_truth(s);
  return evaluate_sequence(gt, r.tracks, cfg.iou_match);
}

}  // namespace cmot
