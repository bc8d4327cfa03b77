#include <gtest/gtest.h>

#include <numbers>

#include "lama/maskgen.hpp"

using namespace lama;

namespace {

// Independent point-in-capsule test: distance to the infinite line when the
// foot of the perpendicular falls inside the segment, else to the nearer end.
bool in_capsule(double px, double py, Point a, Point b, double r) {
  const double vx = b.x - a.x, vy = b.y - a.y, wx = px - a.x, wy = py - a.y;
  const double dot = vx * wx + vy * wy, len2 = vx * vx + vy * vy;
  double d2;
  if (len2 == 0 || dot <= 0) {
    d2 = wx * wx + wy * wy;
  } else if (dot >= len2) {
    d2 = (px - b.x) * (px - b.x) + (py - b.y) * (py - b.y);
  } else {
    const double cross = vx * wy - vy * wx;
    d2 = cross * cross / len2;
  }
  return d2 <= r * r;
}

}  // namespace

TEST(WideMask, CapsuleAreaHorizontalSegment) {
  Mask m(64, 64);
  const double r = 4, L = 32;
  rasterize_capsule(m, {16, 32}, {16 + L, 32}, r);
  const double area = 2 * r * L + std::numbers::pi * r * r;
  EXPECT_NEAR(double(m.missing()), area, 0.05 * area);
}

TEST(WideMask, DegeneratePolylineIsDisk) {
  for (double r : {3.0, 6.5, 10.0}) {
    Mask m(64, 64);
    rasterize_stroke(m, Stroke{{{31.3, 30.7}, {31.3, 30.7}}, r});
    const double area = std::numbers::pi * r * r;
    EXPECT_NEAR(double(m.missing()), area, 0.05 * area) << r;
    Mask single(64, 64);
    rasterize_stroke(single, Stroke{{{31.3, 30.7}}, r});
    EXPECT_EQ(single.known, m.known);
  }
}

TEST(WideMask, RasterizationEqualsPointInCapsuleOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t H = 24 + trial % 5 * 8, W = 32 + trial % 3 * 8;
    Mask m = sample_wide_mask(rng, H, W);
    ASSERT_FALSE(m.strokes.empty());
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        bool hit = false;
        for (const auto& s : m.strokes)
          for (std::size_t k = 0; k + 1 < s.vertices.size() || (k == 0 && s.vertices.size() == 1); ++k) {
            const Point a = s.vertices[k], b = s.vertices[std::min(k + 1, s.vertices.size() - 1)];
            hit = hit || in_capsule(j + 0.5, i + 0.5, a, b, s.radius);
          }
        ASSERT_EQ(m.at(i, j), hit ? 0 : 1) << trial << " " << i << " " << j;
      }
  }
}

TEST(WideMask, ParametersRespected) {
  std::mt19937_64 rng(2);
  WideMaskParams p;
  for (int t = 0; t < 200; ++t) {
    Mask m = sample_wide_mask(rng, 64, 48, p);
    EXPECT_EQ(m.height, 64u);
    EXPECT_EQ(m.width, 48u);
    EXPECT_GE(int(m.strokes.size()), p.strokes_min);
    EXPECT_LE(int(m.strokes.size()), p.strokes_max);
    for (const auto& s : m.strokes) {
      EXPECT_GE(int(s.vertices.size()), p.vertices_min);
      EXPECT_LE(int(s.vertices.size()), p.vertices_max);
      EXPECT_GE(s.radius, p.radius_min * 48);
      EXPECT_LE(s.radius, p.radius_max * 48);
    }
    for (auto v : m.known) ASSERT_TRUE(v == 0 || v == 1);
  }
}

TEST(WideMask, DeterministicPerSeed) {
  std::mt19937_64 a(7), b(7);
  for (int t = 0; t < 10; ++t) EXPECT_EQ(sample_wide_mask(a, 32, 32).known, sample_wide_mask(b, 32, 32).known);
}

TEST(WideMask, RejectsTinyImagesAndBadParams) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_wide_mask(rng, 7, 32), std::invalid_argument);
  WideMaskParams p;
  p.radius_min = 0;
  EXPECT_THROW(sample_wide_mask(rng, 32, 32, p), std::invalid_argument);
}

TEST(BoxMask, ExactRectangleArea) {
  Mask m(64, 64, MaskKind::box);
  add_box(m, 8, 24, 8, 40);
  EXPECT_EQ(m.missing(), 512u);
}

TEST(BoxMask, ClippedToBounds) {
  Mask m(32, 32, MaskKind::box);
  add_box(m, -10, 50, 20, 60);
  EXPECT_EQ(m.missing(), 32u * 12);
  EXPECT_LT(m.coverage(), 1.0);
}

TEST(BoxMask, DisjointBoxesAdd) {
  Mask m(40, 40, MaskKind::box);
  add_box(m, 0, 10, 0, 5);
  add_box(m, 20, 30, 20, 36);
  EXPECT_DOUBLE_EQ(m.coverage(), (50.0 + 160.0) / 1600.0);
}

TEST(BoxMask, SampledBoxesWithinParameterRanges) {
  std::mt19937_64 rng(3);
  BoxMaskParams p;
  for (int t = 0; t < 200; ++t) {
    Mask m = sample_box_mask(rng, 32, 48, p);
    EXPECT_EQ(m.kind, MaskKind::box);
    EXPECT_TRUE(m.strokes.empty());
    EXPECT_GT(m.missing(), 0u);
    // At most boxes_max boxes of at most size_max per side.
    EXPECT_LE(m.missing(), std::size_t(p.boxes_max * std::lround(p.size_max * 32) * std::lround(p.size_max * 48)));
  }
}

TEST(TrainingMask, LargePolicyIsFairCoin) {
  std::mt19937_64 rng(11);
  int wide = 0;
  for (int t = 0; t < 10000; ++t) wide += sample_training_mask(rng, 16, 16, MaskPolicy::large).kind == MaskKind::wide;
  EXPECT_GE(wide, 4800);
  EXPECT_LE(wide, 5200);
}

TEST(TrainingMask, LargeCoversMoreThanNarrow) {
  std::mt19937_64 a(12), b(13);
  double cov_large = 0, cov_narrow = 0, rad_large = 0, rad_narrow = 0;
  for (int t = 0; t < 1000; ++t) {
    Mask l = sample_training_mask(a, 32, 32, MaskPolicy::large), n = sample_training_mask(b, 32, 32, MaskPolicy::narrow);
    EXPECT_EQ(n.kind, MaskKind::narrow);
    cov_large += l.coverage();
    cov_narrow += n.coverage();
    rad_large += l.stroke_radius;
    rad_narrow += n.stroke_radius;
  }
  EXPECT_GT(cov_large, cov_narrow);
  EXPECT_GT(rad_large, rad_narrow);
}

TEST(TrainingMask, PolicyNames) {
  EXPECT_EQ(parse_mask_policy("large"), MaskPolicy::large);
  EXPECT_EQ(parse_mask_policy("wide-only"), MaskPolicy::wide);
  EXPECT_EQ(parse_mask_policy("box"), MaskPolicy::box);
  EXPECT_THROW(parse_mask_policy("segm"), std::invalid_argument);
}

TEST(TestMaskGate, CoverageThreshold) {
  auto with_missing = [](std::size_t n) {
    Mask m(10, 10);
    for (std::size_t i = 0; i < n; ++i) m.known[i] = 0;
    return m;
  };
  EXPECT_TRUE(test_mask_gate(with_missing(49)));
  EXPECT_TRUE(test_mask_gate(with_missing(50)));
  EXPECT_FALSE(test_mask_gate(with_missing(51)));
  EXPECT_FALSE(test_mask_gate(with_missing(0)));
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) EXPECT_TRUE(test_mask_gate(sample_test_mask(rng, 32, 32)));
}

TEST(Masks, TensorLayout) {
  Mask a(8, 8), b(8, 8);
  a.known[3] = 0;
  b.known[60] = 0;
  Tensor t = masks_to_tensor({a, b});
  EXPECT_EQ(t.shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(t.at(0, 0, 0, 3), 0.0);
  EXPECT_EQ(t.at(1, 0, 7, 4), 0.0);
  EXPECT_EQ(t.at(1, 0, 0, 3), 1.0);
  EXPECT_THROW(masks_to_tensor({a, Mask(8, 9)}), ShapeError);
}
