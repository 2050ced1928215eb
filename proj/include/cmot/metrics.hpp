#pragma once

// CLEAR MOT (MOTA, FP, FN, IDS, MT, ML), IDF1 and density-map counting
// diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmot/assignment.hpp"
#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/model.hpp"
#include "cmot/ssim.hpp"

namespace cmot {

struct ClearMot {
  long fp = 0;
  long fn = 0;
  long ids = 0;
  long matches = 0;
  long gt_total = 0;
  int gt_trajectories = 0;
  int mt = 0;
  int ml = 0;
  double mota = 0.0;
  double motp = 0.0;  // mean IoU of matched pairs

  double mt_ratio() const { return gt_trajectories ? static_cast<double>(mt) / gt_trajectories : 0.0; }
  double ml_ratio() const { return gt_trajectories ? static_cast<double>(ml) / gt_trajectories : 0.0; }
};

struct IdScores {
  long idtp = 0;
  long idfp = 0;
  long idfn = 0;
  double idf1 = 0.0;
};

struct SequenceEval {
  ClearMot clear;
  IdScores id;
  std::optional<double> counting_mae;
  std::optional<double> counting_ssim;
};

using FrameIndex = std::map<int, std::vector<TrackBox>>;

// Groups records by frame (ascending id within a frame) and rejects
// duplicate (frame, id) pairs.
inline FrameIndex index_by_frame(std::span<const TrackBox> recs, const char* what) {
  FrameIndex idx;
  std::set<std::pair<int, int>> seen;
  for (const TrackBox& r : recs) {
    if (r.frame < 1 || r.id < 1)
      fail(Errc::invalid_argument, std::string(what) + ": frame and id must be positive");
    if (!seen.insert({r.frame, r.id}).second)
      fail(Errc::invalid_argument, std::string(what) + ": duplicate id " + std::to_string(r.id) +
                                       " in frame " + std::to_string(r.frame));
    idx[r.frame].push_back(r);
  }
  for (auto& [f, v] : idx)
    std::sort(v.begin(), v.end(), [](const TrackBox& a, const TrackBox& b) { return a.id < b.id; });
  return idx;
}

// Matches of one frame as (gt index, hyp index). `last` maps gt id to the
// hyp id it was most recently matched with; those pairs are kept when still
// above threshold, the rest are assigned by minimum total (1 - IoU).
inline std::vector<std::pair<int, int>> match_frame(const std::vector<TrackBox>& gt,
                                                    const std::vector<TrackBox>& hyp,
                                                    const std::map<int, int>& last, double iou_match) {
  std::vector<std::pair<int, int>> out;
  std::vector<char> gt_used(gt.size(), 0), hyp_used(hyp.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto it = last.find(gt[g].id);
    if (it == last.end()) continue;
    for (std::size_t h = 0; h < hyp.size(); ++h) {
      if (hyp[h].id != it->second || hyp_used[h]) continue;
      if (iou(gt[g].box, hyp[h].box) >= iou_match) {
        out.emplace_back(static_cast<int>(g), static_cast<int>(h));
        gt_used[g] = hyp_used[h] = 1;
      }
    }
  }
  std::vector<int> gr, hr;
  for (std::size_t g = 0; g < gt.size(); ++g) if (!gt_used[g]) gr.push_back(static_cast<int>(g));
  for (std::size_t h = 0; h < hyp.size(); ++h) if (!hyp_used[h]) hr.push_back(static_cast<int>(h));
  Grid<double> cost(static_cast<int>(gr.size()), static_cast<int>(hr.size()), 1.0);
  Grid<std::uint8_t> ok(cost.height(), cost.width(), 0);
  for (int i = 0; i < cost.height(); ++i)
    for (int j = 0; j < cost.width(); ++j) {
      const double v = iou(gt[static_cast<std::size_t>(gr[static_cast<std::size_t>(i)])].box,
                           hyp[static_cast<std::size_t>(hr[static_cast<std::size_t>(j)])].box);
      cost(i, j) = 1.0 - v;
      ok(i, j) = v >= iou_match;
    }
  for (auto [i, j] : hungarian(cost, ok).matches)
    out.emplace_back(gr[static_cast<std::size_t>(i)], hr[static_cast<std::size_t>(j)]);
  std::sort(out.begin(), out.end());
  return out;
}

inline ClearMot clear_mot(std::span<const TrackBox> gt, std::span<const TrackBox> hyp,
                          double iou_match = 0.5) {
  const FrameIndex gi = index_by_frame(gt, "gt");
  const FrameIndex hi = index_by_frame(hyp, "hypothesis");
  std::set<int> frames;
  for (const auto& [f, v] : gi) frames.insert(f);
  for (const auto& [f, v] : hi) frames.insert(f);

  ClearMot m;
  std::map<int, int> last;
  std::map<int, std::pair<int, int>> coverage;  // gt id -> (matched, present)
  double iou_sum = 0.0;
  static const std::vector<TrackBox> none;
  for (int f : frames) {
    const auto git = gi.find(f);
    const auto hit = hi.find(f);
    const std::vector<TrackBox>& g = git == gi.end() ? none : git->second;
    const std::vector<TrackBox>& h = hit == hi.end() ? none : hit->second;
    const auto pairs = match_frame(g, h, last, iou_match);
    for (const TrackBox& r : g) coverage[r.id].second += 1;
    for (auto [gi_, hi_] : pairs) {
      const int gid = g[static_cast<std::size_t>(gi_)].id, hid = h[static_cast<std::size_t>(hi_)].id;
      const auto it = last.find(gid);
      if (it != last.end() && it->second != hid) ++m.ids;
      last[gid] = hid;
      coverage[gid].first += 1;
      iou_sum += iou(g[static_cast<std::size_t>(gi_)].box, h[static_cast<std::size_t>(hi_)].box);
    }
    m.matches += static_cast<long>(pairs.size());
    m.gt_total += static_cast<long>(g.size());
    m.fn += static_cast<long>(g.size() - pairs.size());
    m.fp += static_cast<long>(h.size() - pairs.size());
  }
  m.gt_trajectories = static_cast<int>(coverage.size());
  for (const auto& [id, c] : coverage) {
    const double ratio = static_cast<double>(c.first) / c.second;
    if (ratio >= 0.8) ++m.mt;
    if (ratio <= 0.2) ++m.ml;
  }
  m.mota = m.gt_total ? 1.0 - static_cast<double>(m.fp + m.fn + m.ids) / static_cast<double>(m.gt_total)
                      : 0.0;
  m.motp = m.matches ? iou_sum / static_cast<double>(m.matches) : 0.0;
  return m;
}

// Identity-level precision/recall: one global one-to-one assignment of gt to
// hypothesis identities maximizing the number of co-located detections.
inline IdScores id_scores(std::span<const TrackBox> gt, std::span<const TrackBox> hyp,
                          double iou_match = 0.5) {
  const FrameIndex gi = index_by_frame(gt, "gt");
  const FrameIndex hi = index_by_frame(hyp, "hypothesis");
  std::map<int, int> gid_index, hid_index;
  for (const TrackBox& r : gt) gid_index.emplace(r.id, 0);
  for (const TrackBox& r : hyp) hid_index.emplace(r.id, 0);
  int k = 0;
  for (auto& [id, i] : gid_index) i = k++;
  k = 0;
  for (auto& [id, i] : hid_index) i = k++;

  Grid<double> overlap(static_cast<int>(gid_index.size()), static_cast<int>(hid_index.size()), 0.0);
  for (const auto& [f, g] : gi) {
    const auto hit = hi.find(f);
    if (hit == hi.end()) continue;
    for (const TrackBox& a : g)
      for (const TrackBox& b : hit->second)
        if (iou(a.box, b.box) >= iou_match) overlap(gid_index[a.id], hid_index[b.id]) += 1.0;
  }
  Grid<double> cost = overlap;
  for (double& v : cost.raw()) v = -v;

  IdScores s;
  for (auto [r, c] : hungarian(cost).matches) s.idtp += static_cast<long>(overlap(r, c));
  s.idfn = static_cast<long>(gt.size()) - s.idtp;
  s.idfp = static_cast<long>(hyp.size()) - s.idtp;
  const long denom = 2 * s.idtp + s.idfp + s.idfn;
  s.idf1 = denom ? 2.0 * static_cast<double>(s.idtp) / static_cast<double>(denom) : 0.0;
  return s;
}

inline double idf1(std::span<const TrackBox> gt, std::span<const TrackBox> hyp, double iou_match = 0.5) {
  return id_scores(gt, hyp, iou_match).idf1;
}

struct CountingEval {
  double mae = 0.0;
  double ssim = 0.0;
};

inline CountingEval counting_eval(std::span<const DensityGrid> pred, std::span<const int> gt_count,
                                  std::span<const DensityGrid> gt_density, const SsimParams& params = {}) {
  if (pred.size() != gt_count.size() || pred.size() != gt_density.size())
    fail(Errc::shape_mismatch, "counting_eval: frame lists differ in length");
  CountingEval e;
  if (pred.empty()) return e;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    e.mae += std::abs(grid_sum(pred[i]) - gt_count[i]);
    e.ssim += ssim(pred[i], gt_density[i], params);
  }
  e.mae /= static_cast<double>(pred.size());
  e.ssim /= static_cast<double>(pred.size());
  return e;
}

inline SequenceEval evaluate_sequence(std::span<const TrackBox> gt, std::span<const TrackBox> hyp,
                                      double iou_match = 0.5) {
  SequenceEval e;
  e.clear = clear_mot(gt, hyp, iou_match);
  e.id = id_scores(gt, hyp, iou_match);
  return e;
}

inline std::string csv_header() { return "sequence,MOTA,IDF1,FP,FN,IDS,MT,ML,GT,MAE,SSIM"; }

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string csv_row(const std::string& name, const SequenceEval& e) {
  const ClearMot& c = e.clear;
  std::string s = name + "," + format_fixed(c.mota, 6) + "," + format_fixed(e.id.idf1, 6) + "," +
                  std::to_string(c.fp) + "," + std::to_string(c.fn) + "," + std::to_string(c.ids) +
                  "," + std::to_string(c.mt) + "," + std::to_string(c.ml) + "," +
                  std::to_string(c.gt_total) + ",";
  if (e.counting_mae) s += format_fixed(*e.counting_mae, 6);
  s += ",";
  if (e.counting_ssim) s += format_fixed(*e.counting_ssim, 6);
  return s;
}

inline std::string metrics_table(const std::string& name, const SequenceEval& e) {
  const ClearMot& c = e.clear;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-12s %8s %8s %7s %7s %6s %10s %10s\n%-12s %8.3f %8.3f %7ld %7ld %6ld %4d(%4.1f%%) %4d(%4.1f%%)\n",
                "sequence", "MOTA", "IDF1", "FP", "FN", "IDS", "MT", "ML", name.c_str(), c.mota,
                e.id.idf1, c.fp, c.fn, c.ids, c.mt, 100.0 * c.mt_ratio(), c.ml, 100.0 * c.ml_ratio());
  std::string s = buf;
  if (e.counting_mae && e.counting_ssim) {
    std::snprintf(buf, sizeof buf, "counting     MAE %.4f  SSIM %.4f\n", *e.counting_mae, *e.counting_ssim);
    s += buf;
  }
  return s;
}

}  // namespace cmot
