#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmot/model.hpp"

using namespace cmot;

TEST(Model, CenterToGridExamples) {
  const GridGeometry g(64, 64, 4);
  auto a = center_to_grid({10, 10}, g);
  EXPECT_EQ(a.cell, (GridCell{2, 2}));
  EXPECT_DOUBLE_EQ(a.offset.x, 0.5);
  EXPECT_DOUBLE_EQ(a.offset.y, 0.5);
  auto b = center_to_grid({0, 0}, g);
  EXPECT_EQ(b.cell, (GridCell{0, 0}));
  EXPECT_DOUBLE_EQ(b.offset.x, 0.0);
  auto c = center_to_grid({7, 13}, g);
  EXPECT_EQ(c.cell, (GridCell{1, 3}));
  EXPECT_DOUBLE_EQ(c.offset.x, 0.75);
  EXPECT_DOUBLE_EQ(c.offset.y, 0.25);
}

TEST(Model, CenterToGridReconstructsEveryQuarterPixel) {
  const GridGeometry g(64, 64, 4);
  for (int iy = 0; iy < 64 * 4; ++iy)
    for (int ix = 0; ix < 64 * 4; ++ix) {
      const Point2 p{ix / 4.0, iy / 4.0};
      const auto loc = center_to_grid(p, g);
      ASSERT_GE(loc.offset.x, 0.0);
      ASSERT_LT(loc.offset.x, 1.0);
      ASSERT_DOUBLE_EQ((loc.cell.x + loc.offset.x) * 4, p.x);
      ASSERT_DOUBLE_EQ((loc.cell.y + loc.offset.y) * 4, p.y);
    }
}

TEST(Model, CenterToGridRejectsOutside) {
  const GridGeometry g(64, 32, 4);
  for (Point2 p : {Point2{-0.1, 1}, Point2{1, -1}, Point2{64, 1}, Point2{1, 32}}) {
    try {
      center_to_grid(p, g);
      FAIL() << "accepted out-of-bounds point";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::out_of_bounds);
    }
  }
}

TEST(Model, GeometryRejectsIndivisible) {
  EXPECT_THROW(GridGeometry(30, 32, 4), Error);
  EXPECT_THROW(GridGeometry(32, 32, 0), Error);
  const GridGeometry d;
  EXPECT_EQ(d.grid_w(), 272);
  EXPECT_EQ(d.grid_h(), 152);
}

TEST(Model, IouExamples) {
  const BBox a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, {20, 20, 5, 5}), 0.0);
  EXPECT_NEAR(iou(a, {5, 0, 10, 10}), 50.0 / 150.0, 1e-12);
}

TEST(Model, IouProperties) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0, 50), ext(0.5, 30);
  for (int i = 0; i < 2000; ++i) {
    const BBox a{pos(rng), pos(rng), ext(rng), ext(rng)};
    const BBox b{pos(rng), pos(rng), ext(rng), ext(rng)};
    const double v = iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(v, iou(b, a));
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

namespace {
Embedding basis(int i, int n = kEmbeddingDim) {
  Embedding e(static_cast<std::size_t>(n), 0.0);
  e[static_cast<std::size_t>(i)] = 1.0;
  return e;
}
}  // namespace

TEST(Model, CosineDistanceExamples) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Embedding e(kEmbeddingDim);
  for (double& v : e) v = n01(rng);
  e = normalized(e);
  Embedding neg = e;
  for (double& v : neg) v = -v;
  EXPECT_NEAR(cosine_distance(e, e), 0.0, 1e-12);
  EXPECT_NEAR(cosine_distance(e, neg), 2.0, 1e-12);
  EXPECT_NEAR(cosine_distance(basis(0), basis(5)), 1.0, 1e-12);
}

TEST(Model, CosineDistanceRejectsNonUnit) {
  Embedding e = basis(0);
  e[0] = 2.0;
  EXPECT_THROW(cosine_distance(e, basis(1)), Error);
  EXPECT_THROW(cosine_distance(basis(0, 4), basis(0, 5)), Error);
  EXPECT_THROW(normalized(Embedding(4, 0.0)), Error);
}
