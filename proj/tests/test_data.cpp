#include <gtest/gtest.h>

#include "lama/data.hpp"

using namespace lama;

namespace {

double px(const std::vector<double>& img, std::size_t H, std::size_t W, std::size_t c, std::size_t i, std::size_t j) {
  return img[(c * H + i) * W + j];
}

TextureParams two_tone(Pattern p, int period) {
  TextureParams t;
  t.pattern = p;
  t.period = period;
  t.a = {0.1, 0.2, 0.3};
  t.b = {0.9, 0.7, 0.5};
  return t;
}

}  // namespace

TEST(Texture, StripesRowConstantWithExactPeriod) {
  const std::size_t H = 20, W = 40;
  auto img = render_texture(two_tone(Pattern::stripes, 8), H, W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        EXPECT_EQ(px(img, H, W, c, i, j), px(img, H, W, c, 0, j));
        if (j + 8 < W) {
          EXPECT_EQ(px(img, H, W, c, i, j), px(img, H, W, c, i, j + 8));
        }
      }
  // The cycle is exactly 8, not a divisor of it.
  for (int d : {1, 2, 4}) {
    bool differs = false;
    for (std::size_t j = 0; j + d < W; ++j) differs |= px(img, H, W, 0, 0, j) != px(img, H, W, 0, 0, j + d);
    EXPECT_TRUE(differs) << d;
  }
}

TEST(Texture, CheckerboardInvariantToPeriodTranslate) {
  const std::size_t H = 24, W = 24;
  auto img = render_texture(two_tone(Pattern::checkerboard, 4), H, W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i + 4 < H; ++i)
      for (std::size_t j = 0; j + 4 < W; ++j) EXPECT_EQ(px(img, H, W, c, i, j), px(img, H, W, c, i + 4, j + 4));
  // Half-period translate swaps the colors.
  EXPECT_NE(px(img, H, W, 0, 0, 0), px(img, H, W, 0, 0, 2));
  EXPECT_NE(px(img, H, W, 0, 0, 0), px(img, H, W, 0, 2, 0));
}

TEST(Texture, BrickPeriodicWithMortar) {
  const std::size_t H = 32, W = 32;
  auto t = two_tone(Pattern::brick, 8);
  auto img = render_texture(t, H, W);
  for (std::size_t i = 0; i + 8 < H; ++i)
    for (std::size_t j = 0; j + 8 < W; ++j) EXPECT_EQ(px(img, H, W, 1, i, j), px(img, H, W, 1, i + 8, j + 8));
  for (std::size_t j = 0; j < W; ++j) EXPECT_EQ(px(img, H, W, 0, 0, j), t.a[0]);  // horizontal mortar row
  EXPECT_EQ(px(img, H, W, 0, 1, 0), t.a[0]);                                   // vertical joint, row 0
  EXPECT_EQ(px(img, H, W, 0, 5, 4), t.a[0]);                                   // shifted joint, next row
  EXPECT_EQ(px(img, H, W, 0, 1, 4), t.b[0]);
}

TEST(Texture, NoiseFreeRegenerationIsBitIdentical) {
  TextureSpec spec;
  std::mt19937_64 a(9), b(9);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(sample_texture(a, spec, 32, 32).pixels, sample_texture(b, spec, 32, 32).pixels);
}

TEST(Texture, SampledParametersInRange) {
  TextureSpec spec;
  spec.noise = 0.1;
  std::mt19937_64 rng(4);
  int seen[3] = {0, 0, 0};
  for (int k = 0; k < 300; ++k) {
    auto t = sample_texture(rng, spec, 16, 16);
    ++seen[int(t.params.pattern)];
    EXPECT_EQ(t.params.period % 2, 0);
    EXPECT_GE(t.params.period, spec.period_min);
    EXPECT_LE(t.params.period, spec.period_max);
    double d2 = 0;
    for (int c = 0; c < 3; ++c) d2 += (t.params.a[c] - t.params.b[c]) * (t.params.a[c] - t.params.b[c]);
    EXPECT_GE(std::sqrt(d2), spec.min_contrast);
    for (double v : t.pixels) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  for (int n : seen) EXPECT_GT(n, 50);
}

TEST(Texture, BadSpecsRejected) {
  TextureSpec s;
  s.period_min = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.period_min = 5;
  s.period_max = 5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(parse_pattern("plaid"), std::invalid_argument);
}

TEST(Texture, BatchTensorLayout) {
  std::mt19937_64 rng(1);
  auto imgs = synth_dataset(rng, TextureSpec{}, 3, 16);
  Tensor t = images_to_tensor(imgs, 16, 16);
  EXPECT_EQ(t.shape(), (Shape{3, 3, 16, 16}));
  EXPECT_EQ(t.at(2, 1, 5, 7), px(imgs[2].pixels, 16, 16, 1, 5, 7));
}
