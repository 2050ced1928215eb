#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "cmot/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cmot;

namespace {

std::vector<TrackBox> line(int id, int frames, double x0 = 10, int first = 1) {
  std::vector<TrackBox> v;
  for (int f = 0; f < frames; ++f) v.push_back({first + f, id, {x0 + 5 * f, 20, 20, 50}, 1.0});
  return v;
}

}  // namespace

TEST(Metrics, PerfectTracker) {
  auto gt = line(1, 10);
  const auto b = line(2, 10, 200);
  gt.insert(gt.end(), b.begin(), b.end());
  const ClearMot m = clear_mot(gt, gt);
  EXPECT_DOUBLE_EQ(m.mota, 1.0);
  EXPECT_EQ(m.fp + m.fn + m.ids, 0);
  EXPECT_EQ(m.mt, 2);
  EXPECT_DOUBLE_EQ(m.mt_ratio(), 1.0);
  EXPECT_DOUBLE_EQ(idf1(gt, gt), 1.0);
}

TEST(Metrics, TwoMissedFrames) {
  const auto gt = line(1, 10);
  auto hyp = gt;
  hyp.erase(hyp.begin() + 4, hyp.begin() + 6);
  const ClearMot m = clear_mot(gt, hyp);
  EXPECT_EQ(m.fn, 2);
  EXPECT_DOUBLE_EQ(m.mota, 0.8);
}

TEST(Metrics, MidSequenceIdSplit) {
  const auto gt = line(1, 10);
  auto hyp = gt;
  for (int f = 5; f < 10; ++f) hyp[f].id = 7;
  const ClearMot m = clear_mot(gt, hyp);
  EXPECT_EQ(m.ids, 1);
  EXPECT_DOUBLE_EQ(m.mota, 1.0 - 1.0 / 10);
  const IdScores s = id_scores(gt, hyp);
  EXPECT_EQ(s.idtp, 5);
  EXPECT_EQ(s.idfp, 5);
  EXPECT_EQ(s.idfn, 5);
  EXPECT_DOUBLE_EQ(s.idf1, 0.5);
}

TEST(Metrics, EmptyHypothesis) {
  const auto gt = line(1, 10);
  EXPECT_DOUBLE_EQ(idf1(gt, {}), 0.0);
  const ClearMot m = clear_mot(gt, {});
  EXPECT_EQ(m.fn, 10);
  EXPECT_EQ(m.ml, 1);
  EXPECT_DOUBLE_EQ(m.mota, 0.0);
}

TEST(Metrics, MotaGoesNegativeUnclamped) {
  const auto gt = line(1, 2);
  std::vector<TrackBox> hyp;
  for (int f = 1; f <= 2; ++f)
    for (int k = 0; k < 5; ++k) hyp.push_back({f, 10 + k, {500.0 + 40 * k, 300, 20, 50}, 1});
  const ClearMot m = clear_mot(gt, hyp);
  EXPECT_DOUBLE_EQ(m.mota, 1.0 - (10.0 + 2.0) / 2.0);
}

TEST(Metrics, InjectedFalsePositivesLowerMota) {
  const auto gt = line(1, 10);
  auto hyp = gt;
  double prev = clear_mot(gt, hyp).mota;
  for (int k = 0; k < 5; ++k) {
    hyp.push_back({k + 1, 50 + k, {600, 400, 20, 50}, 1});
    const double now = clear_mot(gt, hyp).mota;
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Metrics, DuplicateIdsRejected) {
  std::vector<TrackBox> gt = line(1, 3);
  gt.push_back(gt[1]);
  EXPECT_THROW(clear_mot(gt, {}), Error);
  EXPECT_THROW(idf1(line(1, 3), gt), Error);
}

TEST(Metrics, IdentityCarriesOverAboveThreshold) {
  // gt 1 is matched to hyp 5; in frame 2 hyp 6 fits slightly better but the
  // carried pair is still valid, so no switch.
  std::vector<TrackBox> gt{{1, 1, {0, 0, 10, 10}, 1}, {2, 1, {0, 0, 10, 10}, 1}};
  std::vector<TrackBox> hyp{{1, 5, {0, 0, 10, 10}, 1}, {2, 5, {2, 0, 10, 10}, 1}, {2, 6, {1, 0, 10, 10}, 1}};
  const ClearMot m = clear_mot(gt, hyp);
  EXPECT_EQ(m.ids, 0);
  EXPECT_EQ(m.fp, 1);
}

TEST(Metrics, IdfOneInvariantUnderRelabeling) {
  std::mt19937_64 rng(41);
  auto gt = line(1, 12);
  const auto g2 = line(2, 12, 300);
  gt.insert(gt.end(), g2.begin(), g2.end());
  auto hyp = gt;
  for (auto& r : hyp)
    if (r.frame > 6 && r.id == 1) r.id = 3;
  hyp.erase(hyp.begin() + 2);
  const double base = idf1(gt, hyp);
  for (auto& r : hyp) r.id = 100 - r.id;
  EXPECT_DOUBLE_EQ(idf1(gt, hyp), base);
}

TEST(Metrics, RandomMicroSequencesMatchBruteForce) {
  std::mt19937_64 rng(42);
  for (int seq = 0; seq < 50; ++seq) {
    const auto [gt, hyp] = test::micro_sequence(rng);
    const ClearMot m = clear_mot(gt, hyp);
    const test::Counts c = test::brute_clear(gt, hyp, 0.5);
    ASSERT_EQ(m.fp, c.fp) << "sequence " << seq;
    ASSERT_EQ(m.fn, c.fn) << "sequence " << seq;
    ASSERT_EQ(m.ids, c.ids) << "sequence " << seq;
    ASSERT_DOUBLE_EQ(m.mota, 1.0 - double(c.fp + c.fn + c.ids) / c.gt);
    ASSERT_EQ(id_scores(gt, hyp).idtp, test::brute_idtp(gt, hyp, 0.5)) << "sequence " << seq;
  }
}

TEST(Metrics, CountingEvalExamples) {
  std::mt19937_64 rng(43);
  std::vector<DensityGrid> gt_d, twice;
  std::vector<int> counts;
  for (int f = 0; f < 4; ++f) {
    DensityGrid g = test::random_grid(rng, 16, 16);
    const double s = grid_sum(g);
    for (double& v : g.raw()) v *= 3.0 / s;  // exactly 3 objects of mass
    gt_d.push_back(g);
    for (double& v : g.raw()) v *= 2;
    twice.push_back(g);
    counts.push_back(3);
  }
  const CountingEval same = counting_eval(gt_d, counts, gt_d);
  EXPECT_NEAR(same.mae, 0.0, 1e-12);
  EXPECT_NEAR(same.ssim, 1.0, 1e-12);
  EXPECT_NEAR(counting_eval(twice, counts, gt_d).mae, 3.0, 1e-12);
  EXPECT_THROW(counting_eval(twice, std::vector<int>{1}, gt_d), Error);
}

TEST(Metrics, CountingEvalMatchesLoop) {
  std::mt19937_64 rng(44);
  std::vector<DensityGrid> p, g;
  std::vector<int> n;
  double mae = 0, ss = 0;
  for (int f = 0; f < 6; ++f) {
    p.push_back(test::random_grid(rng, 14, 18));
    g.push_back(test::random_grid(rng, 14, 18));
    n.push_back(f * 20);
    mae += std::abs(grid_sum(p.back()) - n.back());
    ss += ssim(p.back(), g.back());
  }
  const CountingEval e = counting_eval(p, n, g);
  EXPECT_NEAR(e.mae, mae / 6, 1e-12);
  EXPECT_NEAR(e.ssim, ss / 6, 1e-12);
}

TEST(Metrics, CsvRowLayout) {
  const auto gt = line(1, 10);
  SequenceEval e = evaluate_sequence(gt, gt);
  EXPECT_EQ(csv_header(), "sequence,MOTA,IDF1,FP,FN,IDS,MT,ML,GT,MAE,SSIM");
  EXPECT_EQ(csv_row("s", e), "s,1.000000,1.000000,0,0,0,1,0,10,,");
  e.counting_mae = 0.5;
  e.counting_ssim = 0.25;
  EXPECT_EQ(csv_row("s", e), "s,1.000000,1.000000,0,0,0,1,0,10,0.500000,0.250000");
  EXPECT_NE(metrics_table("s", e).find("MAE 0.5000"), std::string::npos);
}
