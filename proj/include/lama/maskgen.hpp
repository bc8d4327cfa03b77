#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lama/tensor.hpp"

namespace lama {

enum class MaskKind { wide, box, narrow };

inline const char* mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::wide: return "wide";
    case MaskKind::box: return "box";
    case MaskKind::narrow: return "narrow";
  }
  return "?";
}

struct Point {
  double x = 0;  // column axis, pixel centers at j + 0.5
  double y = 0;  // row axis
};

struct Stroke {
  std::vector<Point> vertices;
  double radius = 0;
};

/// Binary grid, 1 = known, 0 = missing.
struct Mask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> known;
  MaskKind kind = MaskKind::wide;
  std::vector<Stroke> strokes;  // empty for box masks
  // Mean stroke radius in pixels; for boxes, half the shorter side.
  double stroke_radius = 0;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, MaskKind k = MaskKind::wide) : height(h), width(w), known(h * w, 1), kind(k) {}

  std::uint8_t at(std::size_t i, std::size_t j) const { return known[i * width + j]; }
  std::size_t missing() const { return static_cast<std::size_t>(std::count(known.begin(), known.end(), 0)); }
  double coverage() const { return known.empty() ? 0.0 : double(missing()) / double(known.size()); }
};

inline void fill_mask_tensor(const Mask& m, double* dst) {
  for (std::size_t i = 0; i < m.known.size(); ++i) dst[i] = m.known[i];
}

/// Stacks masks into a B x 1 x H x W tensor.
inline Tensor masks_to_tensor(const std::vector<Mask>& masks) {
  if (masks.empty()) throw ShapeError("masks_to_tensor: empty batch");
  const std::size_t H = masks[0].height, W = masks[0].width;
  std::vector<double> v(masks.size() * H * W);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b].height != H || masks[b].width != W) throw ShapeError("masks_to_tensor: mixed mask sizes");
    fill_mask_tensor(masks[b], v.data() + b * H * W);
  }
  return Tensor({masks.size(), 1, H, W}, std::move(v));
}

inline double segment_distance_sq(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return ex * ex + ey * ey;
}

/// Marks every pixel whose center lies within distance r of segment ab.
inline void rasterize_capsule(Mask& m, Point a, Point b, double r) {
  const long r0 = std::max(0L, long(std::floor(std::min(a.y, b.y) - r - 1)));
  const long r1 = std::min(long(m.height) - 1, long(std::ceil(std::max(a.y, b.y) + r + 1)));
  const long c0 = std::max(0L, long(std::floor(std::min(a.x, b.x) - r - 1)));
  const long c1 = std::min(long(m.width) - 1, long(std::ceil(std::max(a.x, b.x) + r + 1)));
  for (long i = r0; i <= r1; ++i)
    for (long j = c0; j <= c1; ++j)
      if (segment_distance_sq({j + 0.5, i + 0.5}, a, b) <= r * r) m.known[i * m.width + j] = 0;
}

inline void rasterize_stroke(Mask& m, const Stroke& s) {
  if (s.vertices.size() == 1) rasterize_capsule(m, s.vertices[0], s.vertices[0], s.radius);
  for (std::size_t k = 0; k + 1 < s.vertices.size(); ++k)
    rasterize_capsule(m, s.vertices[k], s.vertices[k + 1], s.radius);
}

/// Rows [r0, r1) x cols [c0, c1) become missing, clipped to the image.
inline void add_box(Mask& m, long r0, long r1, long c0, long c1) {
  r0 = std::clamp(r0, 0L, long(m.height)), r1 = std::clamp(r1, 0L, long(m.height));
  c0 = std::clamp(c0, 0L, long(m.width)), c1 = std::clamp(c1, 0L, long(m.width));
  for (long i = r0; i < r1; ++i)
    for (long j = c0; j < c1; ++j) m.known[i * m.width + j] = 0;
}

struct WideMaskParams {
  int strokes_min = 1, strokes_max = 3;
  int vertices_min = 4, vertices_max = 12;
  double step_min = 0.10, step_max = 0.25;  // fraction of min(H, W)
  double max_turn_deg = 60.0;
  double radius_min = 0.05, radius_max = 0.15;  // fraction of min(H, W)

  void validate() const {
    if (strokes_min < 1 || strokes_max < strokes_min || vertices_min < 1 || vertices_max < vertices_min ||
        step_min < 0 || step_max < step_min || radius_min <= 0 || radius_max < radius_min || max_turn_deg < 0)
      throw std::invalid_argument("WideMaskParams: empty or negative range");
  }
};

inline WideMaskParams narrow_mask_params() {
  WideMaskParams p;
  p.radius_min = 0.01;
  p.radius_max = 0.03;
  return p;
}

struct BoxMaskParams {
  int boxes_min = 1, boxes_max = 3;
  double size_min = 0.1, size_max = 0.5;  // each side, fraction of that axis
  double margin = 0.1;                    // boxes may start this far (fraction) outside the image

  void validate() const {
    if (boxes_min < 1 || boxes_max < boxes_min || size_min <= 0 || size_max < size_min || size_max > 1 || margin < 0)
      throw std::invalid_argument("BoxMaskParams: empty or invalid range");
  }
};

namespace detail {
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline void require_min_size(std::size_t H, std::size_t W) {
  if (H < 8 || W < 8) throw std::invalid_argument("mask sampling needs H, W >= 8");
}
}  // namespace detail

/// Random polygonal chains dilated to capsules of a random radius.
inline Mask sample_wide_mask(std::mt19937_64& rng, std::size_t H, std::size_t W, const WideMaskParams& p = {},
                             MaskKind kind = MaskKind::wide) {
  detail::require_min_size(H, W);
  p.validate();
  Mask m(H, W, kind);
  const double side = double(std::min(H, W));
  const double turn = p.max_turn_deg * std::numbers::pi / 180.0;
  const int n_strokes = detail::uniform_int(rng, p.strokes_min, p.strokes_max);
  double radius_sum = 0;
  for (int s = 0; s < n_strokes; ++s) {
    Stroke st;
    st.radius = detail::uniform(rng, p.radius_min, p.radius_max) * side;
    Point cur{detail::uniform(rng, 0, double(W)), detail::uniform(rng, 0, double(H))};
    double angle = detail::uniform(rng, 0, 2 * std::numbers::pi);
    st.vertices.push_back(cur);
    const int n_vertices = detail::uniform_int(rng, p.vertices_min, p.vertices_max);
    for (int v = 1; v < n_vertices; ++v) {
      angle += detail::uniform(rng, -turn, turn);
      const double len = detail::uniform(rng, p.step_min, p.step_max) * side;
      cur = {std::clamp(cur.x + len * std::cos(angle), 0.0, double(W)),
             std::clamp(cur.y + len * std::sin(angle), 0.0, double(H))};
      st.vertices.push_back(cur);
    }
    rasterize_stroke(m, st);
    radius_sum += st.radius;
    m.strokes.push_back(std::move(st));
  }
  m.stroke_radius = radius_sum / n_strokes;
  return m;
}

inline Mask sample_box_mask(std::mt19937_64& rng, std::size_t H, std::size_t W, const BoxMaskParams& p = {}) {
  detail::require_min_size(H, W);
  p.validate();
  Mask m(H, W, MaskKind::box);
  const int n = detail::uniform_int(rng, p.boxes_min, p.boxes_max);
  double half_sum = 0;
  for (int k = 0; k < n; ++k) {
    const long h = std::max(1L, std::lround(detail::uniform(rng, p.size_min, p.size_max) * double(H)));
    const long w = std::max(1L, std::lround(detail::uniform(rng, p.size_min, p.size_max) * double(W)));
    const long mh = std::lround(p.margin * double(H)), mw = std::lround(p.margin * double(W));
    const long r = std::lround(detail::uniform(rng, double(-mh), double(long(H) - h + mh)));
    const long c = std::lround(detail::uniform(rng, double(-mw), double(long(W) - w + mw)));
    add_box(m, r, r + h, c, c + w);
    half_sum += 0.5 * double(std::min(h, w));
  }
  m.stroke_radius = half_sum / n;
  return m;
}

enum class MaskPolicy { large, narrow, wide, box };

inline MaskPolicy parse_mask_policy(const std::string& s) {
  if (s == "large") return MaskPolicy::large;
  if (s == "narrow") return MaskPolicy::narrow;
  if (s == "wide" || s == "wide-only") return MaskPolicy::wide;
  if (s == "box" || s == "box-only") return MaskPolicy::box;
  throw std::invalid_argument("unknown mask policy '" + s + "' (large, narrow, wide, box)");
}

inline const char* mask_policy_name(MaskPolicy p) {
  switch (p) {
    case MaskPolicy::large: return "large";
    case MaskPolicy::narrow: return "narrow";
    case MaskPolicy::wide: return "wide";
    case MaskPolicy::box: return "box";
  }
  return "?";
}

inline Mask sample_training_mask(std::mt19937_64& rng, std::size_t H, std::size_t W, MaskPolicy policy) {
  switch (policy) {
    case MaskPolicy::large:
      return std::bernoulli_distribution(0.5)(rng) ? sample_wide_mask(rng, H, W) : sample_box_mask(rng, H, W);
    case MaskPolicy::narrow: return sample_wide_mask(rng, H, W, narrow_mask_params(), MaskKind::narrow);
    case MaskPolicy::wide: return sample_wide_mask(rng, H, W);
    case MaskPolicy::box: return sample_box_mask(rng, H, W);
  }
  throw std::invalid_argument("unknown mask policy");
}

/// Evaluation masks must leave something to inpaint and cover at most half the image.
inline bool test_mask_gate(const Mask& m) {
  const std::size_t miss = m.missing();
  return miss > 0 && 2 * miss <= m.known.size();
}

/// Draws wide masks until one passes the evaluation gate.
inline Mask sample_test_mask(std::mt19937_64& rng, std::size_t H, std::size_t W, const WideMaskParams& p = {}) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Mask m = sample_wide_mask(rng, H, W, p);
    if (test_mask_gate(m)) return m;
  }
  throw std::runtime_error("sample_test_mask: no mask passed the coverage gate");
}

}  // namespace lama
