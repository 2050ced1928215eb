#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cmot/refine.hpp"
#include "support.hpp"

using namespace cmot;

namespace {

// 40x40 grid at R = 4.
RefineConfig small_config(int window = 5) {
  RefineConfig c;
  c.geom = GridGeometry(160, 160, 4);
  c.window = window;
  return c;
}

Detection det_at(GridCell c, const GridGeometry& g, double conf = 0.9, double w = 12,
                 double h = 28) {
  Detection d;
  d.bbox = BBox::from_center(cell_center_px(c, g), w, h);
  d.confidence = conf;
  return d;
}

DensityGrid blobs(const std::vector<GridCell>& cells, double sigma, const GridGeometry& g) {
  std::vector<Point2> pts;
  for (auto c : cells) pts.push_back({double(c.x), double(c.y)});
  return density_from_centers(pts, std::vector<double>(pts.size(), sigma), g);
}

double sum_if(const Grid<double>& g, bool positive) {
  double s = 0.0;
  for (double v : g.values())
    if ((v > 0) == positive) s += v;
  return s;
}

// Window-count loss of a detection set, by direct window enumeration.
double naive_gap(const std::vector<Detection>& dets, const DensityGrid& dhat, int window,
                 const GridGeometry& g) {
  Grid<double> diff = dhat;
  for (const auto& d : dets) {
    const GridCell c = detection_cell(d.bbox, g);
    diff(c.y, c.x) -= 1.0;
  }
  const Grid<double> s = test::naive_window_counts(diff, window);
  double v = 0.0;
  for (double x : s.values()) v += x * x;
  return v / static_cast<double>(s.size());
}

// Greedy recovery recomputed from scratch every round: residual, window
// masses and the per-cell loss change are all rebuilt by direct summation.
std::vector<Detection> naive_recover(const std::vector<Detection>& dets, const DensityGrid& dhat,
                                     const RefineConfig& cfg) {
  const GridGeometry& g = cfg.geom;
  const int h = g.grid_h(), w = g.grid_w(), r = cfg.window / 2;
  const Grid<double> base = residual_density(dets, dhat, cfg.sigma, g);
  std::vector<Point2> centers;
  for (const auto& d : dets) {
    const GridCell c = detection_cell(d.bbox, g);
    centers.push_back({double(c.x), double(c.y)});
  }
  std::vector<GridCell> added_cells;
  std::vector<double> added_sigma;
  std::vector<Detection> added;
  while (static_cast<int>(added.size()) < cfg.max_added_per_frame) {
    Grid<double> res = base;
    for (std::size_t i = 0; i < added_cells.size(); ++i)
      splat(res, make_separable_kernel(KernelSpec::for_sigma(added_sigma[i])), added_cells[i], -1.0);
    Grid<double> pos = res;
    for (double& v : pos.raw()) v = std::max(v, 0.0);
    const Grid<double> mass = test::naive_window_counts(pos, cfg.window);

    std::vector<Detection> all = dets;
    all.insert(all.end(), added.begin(), added.end());
    Grid<double> diff = dhat;
    for (const auto& d : all) {
      const GridCell c = detection_cell(d.bbox, g);
      diff(c.y, c.x) -= 1.0;
    }
    const Grid<double> s = test::naive_window_counts(diff, cfg.window);

    double best = -std::numeric_limits<double>::infinity();
    GridCell q{-1, -1};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool near = false;
        for (auto c : added_cells)
          near |= std::hypot(c.x - x, c.y - y) < cfg.min_peak_separation;
        if (near || mass(y, x) < cfg.add_mass_threshold) continue;
        double delta = 0.0;  // sum over windows containing (y, x) of (s-1)^2 - s^2
        for (int wy = y - r; wy <= y + r; ++wy)
          for (int wx = x - r; wx <= x + r; ++wx)
            if (s.contains(wy, wx)) delta += 1.0 - 2.0 * s(wy, wx);
        if (!(delta < 0.0)) continue;
        // Masses equal to 1e-9 tie; the first in row-major order wins.
        const double key = std::round(mass(y, x) * 1e9);
        if (key > best) best = key, q = {x, y};
      }
    if (q.x < 0) break;

    double sw = 0, sh = 0;
    int nb = 0;
    for (const auto& d : dets) {
      const GridCell c = detection_cell(d.bbox, g);
      if (std::hypot(c.x - q.x, c.y - q.y) <= 2.0 * cfg.window) sw += d.bbox.w, sh += d.bbox.h, ++nb;
    }
    Detection d;
    d.bbox = BBox::from_center(cell_center_px(q, g), nb ? sw / nb : cfg.default_box_w,
                               nb ? sh / nb : cfg.default_box_h);
    d.confidence = cfg.recovered_confidence;
    added.push_back(d);

    // kNN bandwidth among the centers present before this addition.
    std::vector<double> dist;
    for (auto c : centers) dist.push_back(std::hypot(c.x - q.x, c.y - q.y));
    double sigma = cfg.sigma.sigma_cap / 2.0;
    if (!dist.empty()) {
      std::sort(dist.begin(), dist.end());
      const std::size_t k = std::min<std::size_t>(cfg.sigma.k, dist.size());
      double m = 0;
      for (std::size_t i = 0; i < k; ++i) m += dist[i];
      sigma = std::clamp(cfg.sigma.gamma * m / k, cfg.sigma.sigma_floor, cfg.sigma.sigma_cap);
    }
    centers.push_back({double(q.x), double(q.y)});
    added_cells.push_back(q);
    added_sigma.push_back(sigma);
  }
  return added;
}

struct Scene {
  std::vector<Detection> dets;
  DensityGrid dhat;
};

Scene random_scene(std::mt19937_64& rng, const RefineConfig& cfg) {
  const GridGeometry& g = cfg.geom;
  std::uniform_int_distribution<int> cell(2, g.grid_w() - 3), n(3, 12);
  std::uniform_real_distribution<double> conf(0.1, 1.0), sig(1.0, 2.5);
  std::bernoulli_distribution detected(0.6), spurious(0.3);
  Scene s;
  s.dhat = DensityGrid(g.grid_h(), g.grid_w());
  const int objects = n(rng);
  for (int i = 0; i < objects; ++i) {
    const GridCell c{cell(rng), cell(rng)};
    const std::vector<Point2> p{{double(c.x), double(c.y)}};
    const std::vector<double> sg{sig(rng)};
    const DensityGrid b = density_from_centers(p, sg, g);
    for (std::size_t k = 0; k < b.size(); ++k) s.dhat.raw()[k] += b.raw()[k];
    if (detected(rng)) s.dets.push_back(det_at(c, g, conf(rng)));
    if (spurious(rng)) s.dets.push_back(det_at({cell(rng), cell(rng)}, g, conf(rng)));
  }
  return s;
}

}  // namespace

TEST(Refine, ResidualExamples) {
  RefineConfig cfg = small_config();
  cfg.sigma.sigma_cap = 4.0;  // lone detection blurs with sigma 2
  const GridGeometry& g = cfg.geom;
  const DensityGrid one = blobs({{12, 14}}, 2.0, g);
  const std::vector<Detection> exact{det_at({12, 14}, g)};
  for (double v : residual_density(exact, one, cfg.sigma, g).values()) EXPECT_NEAR(v, 0.0, 1e-6);

  const Grid<double> same = residual_density({}, one, cfg.sigma, g);
  EXPECT_EQ(same.raw(), one.raw());

  const std::vector<Detection> wrong{det_at({28, 26}, g)};
  const Grid<double> res = residual_density(wrong, one, cfg.sigma, g);
  EXPECT_NEAR(sum_if(res, true), 1.0, 1e-6);
  EXPECT_NEAR(sum_if(res, false), -1.0, 1e-6);
}

TEST(Refine, NothingToRecoverOnZeroResidual) {
  const RefineConfig cfg = small_config();
  EXPECT_TRUE(recover_missed({}, DensityGrid(40, 40), cfg).empty());
}

TEST(Refine, RecoversSingleBlobAtItsCenter) {
  const RefineConfig cfg = small_config();
  const DensityGrid d = blobs({{17, 21}}, 1.5, cfg.geom);
  const auto added = recover_missed({}, d, cfg);
  ASSERT_EQ(added.size(), 1u);
  EXPECT_EQ(detection_cell(added[0].bbox, cfg.geom), (GridCell{17, 21}));
  EXPECT_DOUBLE_EQ(added[0].confidence, cfg.recovered_confidence);
  EXPECT_DOUBLE_EQ(added[0].bbox.w, cfg.default_box_w);
}

TEST(Refine, RecoversTwoSeparatedBlobs) {
  const RefineConfig cfg = small_config(5);
  const DensityGrid d = blobs({{8, 20}, {8 + 15, 20}}, 1.5, cfg.geom);
  const auto added = recover_missed({}, d, cfg);
  ASSERT_EQ(added.size(), 2u);
  // The blobs tie up to rounding, so either may come first.
  const GridCell a = detection_cell(added[0].bbox, cfg.geom), b = detection_cell(added[1].bbox, cfg.geom);
  EXPECT_TRUE((a == GridCell{8, 20} && b == GridCell{23, 20}) || (a == GridCell{23, 20} && b == GridCell{8, 20}));
}

TEST(Refine, RecoveredBoxTakesNearbyMeanSize) {
  const RefineConfig cfg = small_config(5);
  const std::vector<Detection> dets{det_at({10, 10}, cfg.geom, 0.9, 10, 30),
                                    det_at({14, 10}, cfg.geom, 0.9, 20, 50)};
  DensityGrid d = blobs({{10, 10}, {14, 10}, {12, 16}}, 1.2, cfg.geom);
  const auto added = recover_missed(dets, d, cfg);
  ASSERT_EQ(added.size(), 1u);
  EXPECT_DOUBLE_EQ(added[0].bbox.w, 15.0);
  EXPECT_DOUBLE_EQ(added[0].bbox.h, 40.0);
}

TEST(Refine, RecoverMatchesNaiveGreedy) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    RefineConfig cfg = small_config(trial % 2 ? 5 : 9);
    cfg.add_mass_threshold = 0.4;
    const Scene s = random_scene(rng, cfg);
    const auto fast = recover_missed(s.dets, s.dhat, cfg);
    const auto slow = naive_recover(s.dets, s.dhat, cfg);
    ASSERT_EQ(fast.size(), slow.size()) << "trial " << trial;
    for (std::size_t i = 0; i < fast.size(); ++i) {
      EXPECT_EQ(fast[i].bbox, slow[i].bbox) << "trial " << trial << " add " << i;
    }
  }
}

TEST(Refine, RespectsMaxAddedAndSeparation) {
  RefineConfig cfg = small_config(5);
  cfg.max_added_per_frame = 2;
  const DensityGrid d = blobs({{5, 5}, {20, 5}, {35, 5}, {20, 30}}, 1.5, cfg.geom);
  EXPECT_EQ(recover_missed({}, d, cfg).size(), 2u);
  cfg.max_added_per_frame = 64;
  cfg.min_peak_separation = 6.0;
  const auto added = recover_missed({}, blobs({{10, 10}, {13, 10}, {30, 30}}, 1.0, cfg.geom), cfg);
  for (std::size_t i = 0; i < added.size(); ++i)
    for (std::size_t j = i + 1; j < added.size(); ++j) {
      const GridCell a = detection_cell(added[i].bbox, cfg.geom), b = detection_cell(added[j].bbox, cfg.geom);
      EXPECT_GE(std::hypot(a.x - b.x, a.y - b.y), 6.0);
    }
}

TEST(Refine, RejectsLowConfidenceOverEmptyDensity) {
  const RefineConfig cfg = small_config();
  const DensityGrid zero(40, 40);
  const std::vector<Detection> dets{det_at({20, 20}, cfg.geom, 0.3)};
  const double before = naive_gap(dets, zero, cfg.window, cfg.geom);
  const double after = naive_gap({}, zero, cfg.window, cfg.geom);
  EXPECT_LT(after, before);
  const auto removed = reject_false(dets, zero, cfg);
  ASSERT_EQ(removed.size(), 1u);
  // The same detection at high confidence is exempt.
  const std::vector<Detection> sure{det_at({20, 20}, cfg.geom, 0.9)};
  EXPECT_TRUE(reject_false(sure, zero, cfg).empty());
}

TEST(Refine, RejectsOnlyTheWeakDuplicate) {
  const RefineConfig cfg = small_config();
  const DensityGrid d = blobs({{20, 20}}, 1.5, cfg.geom);
  const std::vector<Detection> dets{det_at({20, 20}, cfg.geom, 0.9), det_at({21, 20}, cfg.geom, 0.3)};
  const auto removed = reject_false(dets, d, cfg);
  ASSERT_EQ(removed.size(), 1u);
  EXPECT_DOUBLE_EQ(removed[0].confidence, 0.3);
  std::vector<Detection> kept{dets[0]};
  EXPECT_LT(naive_gap(kept, d, cfg.window, cfg.geom), naive_gap(dets, d, cfg.window, cfg.geom));
}

TEST(Refine, ConsistentDetectionsAreKept) {
  const RefineConfig cfg = small_config();
  const std::vector<GridCell> cells{{8, 8}, {20, 12}, {30, 30}};
  std::vector<Detection> dets;
  for (auto c : cells) dets.push_back(det_at(c, cfg.geom, 0.5));
  const DensityGrid d = blobs(cells, 1.5, cfg.geom);
  EXPECT_TRUE(reject_false(dets, d, cfg).empty());
  const auto out = refine_frame(dets, d, cfg);
  EXPECT_TRUE(out.report.added.empty());
  EXPECT_TRUE(out.report.removed.empty());
  ASSERT_EQ(out.detections.size(), dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) EXPECT_EQ(out.detections[i].bbox, dets[i].bbox);
  EXPECT_DOUBLE_EQ(out.report.initial_count_gap, out.report.final_count_gap);
  // Idempotent: a second pass changes nothing.
  const auto again = refine_frame(out.detections, d, cfg);
  EXPECT_TRUE(again.report.added.empty() && again.report.removed.empty());
}

TEST(Refine, CrowdedGroupWithMisplacedDetection) {
  // Four adjacent people; two are detected, one low-confidence box sits on
  // empty ground nearby.
  RefineConfig cfg = small_config(5);
  cfg.min_peak_separation = 2.0;
  const std::vector<GridCell> people{{14, 20}, {17, 20}, {20, 20}, {23, 20}};
  const DensityGrid d = blobs(people, 1.0, cfg.geom);
  const std::vector<Detection> dets{det_at(people[0], cfg.geom, 0.8), det_at(people[2], cfg.geom, 0.8),
                                    det_at({19, 30}, cfg.geom, 0.35)};
  const auto out = refine_frame(dets, d, cfg);
  EXPECT_EQ(out.report.removed.size(), 1u);
  EXPECT_EQ(out.report.added.size(), 2u);
  EXPECT_LT(out.report.final_count_gap, out.report.initial_count_gap);
  // Placement is the best window centre, so it may sit a cell off the person.
  for (const auto& a : out.report.added) {
    const GridCell c = detection_cell(a.bbox, cfg.geom);
    auto near = [&](GridCell p) { return std::abs(c.x - p.x) <= 1 && std::abs(c.y - p.y) <= 1; };
    EXPECT_TRUE(near(people[1]) || near(people[3])) << c.x << "," << c.y;
  }
}

TEST(Refine, GapNeverIncreasesAndBookkeepingHolds) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const RefineConfig cfg = small_config(trial % 3 == 0 ? 3 : trial % 3 == 1 ? 7 : 19);
    const Scene s = random_scene(rng, cfg);
    const auto out = refine_frame(s.dets, s.dhat, cfg);
    const double before = naive_gap(s.dets, s.dhat, cfg.window, cfg.geom);
    const double after = naive_gap(out.detections, s.dhat, cfg.window, cfg.geom);
    EXPECT_NEAR(out.report.initial_count_gap, before, 1e-9);
    EXPECT_NEAR(out.report.final_count_gap, after, 1e-9);
    EXPECT_LE(after, before + 1e-12);
    EXPECT_EQ(out.detections.size(), s.dets.size() - out.report.removed.size() + out.report.added.size());
    for (const auto& r : out.report.removed) EXPECT_LT(r.confidence, cfg.exempt_confidence);
  }
}

TEST(Refine, RecoveryIsDeterministic) {
  std::mt19937_64 rng(5);
  const RefineConfig cfg = small_config(7);
  const Scene s = random_scene(rng, cfg);
  const auto a = recover_missed(s.dets, s.dhat, cfg), b = recover_missed(s.dets, s.dhat, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].bbox, b[i].bbox);
}

TEST(Refine, RejectsBadConfigAndGeometry) {
  RefineConfig cfg = small_config();
  cfg.window = 4;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config();
  cfg.add_mass_threshold = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config();
  try {
    refine_frame({}, DensityGrid(30, 40), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    EXPECT_NE(std::string(e.what()).find("30x40"), std::string::npos);
  }
}
