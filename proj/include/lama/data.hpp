#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lama/tensor.hpp"

namespace lama {

enum class Pattern { stripes, checkerboard, brick, mixed };

inline Pattern parse_pattern(const std::string& s) {
  if (s == "stripes") return Pattern::stripes;
  if (s == "checkerboard") return Pattern::checkerboard;
  if (s == "brick" || s == "brick-grid") return Pattern::brick;
  if (s == "mixed") return Pattern::mixed;
  throw std::invalid_argument("unknown texture pattern '" + s + "' (stripes, checkerboard, brick, mixed)");
}

inline const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::stripes: return "stripes";
    case Pattern::checkerboard: return "checkerboard";
    case Pattern::brick: return "brick";
    case Pattern::mixed: return "mixed";
  }
  return "?";
}

/// Distribution of synthetic periodic textures. Periods are even pixel counts
/// so half-period features land on the pixel grid.
struct TextureSpec {
  Pattern pattern = Pattern::mixed;
  int period_min = 6, period_max = 12;
  double orientation_min_deg = 0.0, orientation_max_deg = 180.0;  // stripes only
  double noise = 0.0;
  double min_contrast = 0.3;  // minimum RGB distance between the two colors

  void validate() const {
    if (period_min < 2 || period_max < period_min) throw std::invalid_argument("TextureSpec: need 2 <= period_min <= period_max");
    if (period_max / 2 < (period_min + 1) / 2) throw std::invalid_argument("TextureSpec: period range has no even value");
    if (noise < 0 || orientation_max_deg < orientation_min_deg) throw std::invalid_argument("TextureSpec: bad noise/orientation range");
  }
};

using Color = std::array<double, 3>;

/// Concrete parameters of one texture instance.
struct TextureParams {
  Pattern pattern = Pattern::stripes;
  int period = 8;
  double orientation_deg = 0.0;
  int offset_x = 0, offset_y = 0;
  Color a{0, 0, 0}, b{1, 1, 1};
};

/// 3 x H x W values in [0,1] (before noise).
inline std::vector<double> render_texture(const TextureParams& p, std::size_t H, std::size_t W) {
  std::vector<double> img(3 * H * W);
  const int P = p.period, half = std::max(1, P / 2);
  const double th = p.orientation_deg * std::numbers::pi / 180.0, c = std::cos(th), s = std::sin(th);
  auto floor_mod = [](long v, long m) { return ((v % m) + m) % m; };
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const long y = long(i) + p.offset_y, x = long(j) + p.offset_x;
      bool first = false;
      switch (p.pattern) {
        case Pattern::stripes:
          if (p.orientation_deg == 0.0) {
            first = floor_mod(x, P) < half;
          } else {
            const double u = double(x) * c + double(y) * s;
            first = std::fmod(std::fmod(u, P) + P, P) < half;
          }
          break;
        case Pattern::checkerboard:
          first = (floor_mod(x, P) < half) != (floor_mod(y, P) < half);
          break;
        case Pattern::brick: {
          // Rows of height P/2, bricks P wide, alternate rows shifted by P/2;
          // one-pixel mortar lines in color a.
          const long row = y >= 0 ? y / half : (y - half + 1) / half;
          const long shift = floor_mod(row, 2) ? half : 0;
          first = floor_mod(y, half) == 0 || floor_mod(x + shift, P) == 0;
          break;
        }
        case Pattern::mixed:
          throw std::invalid_argument("render_texture: pattern must be concrete");
      }
      const Color& col = first ? p.a : p.b;
      for (std::size_t ch = 0; ch < 3; ++ch) img[(ch * H + i) * W + j] = col[ch];
    }
  return img;
}

inline TextureParams sample_texture_params(std::mt19937_64& rng, const TextureSpec& spec) {
  spec.validate();
  TextureParams p;
  p.pattern = spec.pattern;
  if (p.pattern == Pattern::mixed) p.pattern = static_cast<Pattern>(std::uniform_int_distribution<int>(0, 2)(rng));
  p.period = 2 * std::uniform_int_distribution<int>((spec.period_min + 1) / 2, spec.period_max / 2)(rng);
  p.orientation_deg = p.pattern == Pattern::stripes
                          ? std::uniform_real_distribution<double>(spec.orientation_min_deg, spec.orientation_max_deg)(rng)
                          : 0.0;
  p.offset_x = std::uniform_int_distribution<int>(0, p.period - 1)(rng);
  p.offset_y = std::uniform_int_distribution<int>(0, p.period - 1)(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    for (auto& v : p.a) v = u(rng);
    for (auto& v : p.b) v = u(rng);
    double d2 = 0;
    for (int k = 0; k < 3; ++k) d2 += (p.a[k] - p.b[k]) * (p.a[k] - p.b[k]);
    if (d2 >= spec.min_contrast * spec.min_contrast) break;
  }
  return p;
}

struct TextureImage {
  TextureParams params;
  std::vector<double> pixels;  // 3 x H x W
};

inline TextureImage sample_texture(std::mt19937_64& rng, const TextureSpec& spec, std::size_t H, std::size_t W) {
  TextureImage t{sample_texture_params(rng, spec), {}};
  t.pixels = render_texture(t.params, H, W);
  if (spec.noise > 0) {
    std::uniform_real_distribution<double> n(-spec.noise, spec.noise);
    for (auto& v : t.pixels) v = std::clamp(v + n(rng), 0.0, 1.0);
  }
  return t;
}

inline std::vector<TextureImage> synth_dataset(std::mt19937_64& rng, const TextureSpec& spec, std::size_t count,
                                               std::size_t size) {
  std::vector<TextureImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_texture(rng, spec, size, size));
  return out;
}

/// Stacks 3 x H x W images into a B x 3 x H x W tensor.
inline Tensor images_to_tensor(const std::vector<TextureImage>& imgs, std::size_t H, std::size_t W) {
  if (imgs.empty()) throw ShapeError("images_to_tensor: empty batch");
  std::vector<double> v;
  v.reserve(imgs.size() * 3 * H * W);
  for (const auto& im : imgs) {
    if (im.pixels.size() != 3 * H * W) throw ShapeError("images_to_tensor: image size mismatch");
    v.insert(v.end(), im.pixels.begin(), im.pixels.end());
  }
  return Tensor({imgs.size(), 3, H, W}, std::move(v));
}

}  // namespace lama
