#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lama/fft.hpp"
#include "lama/tensor.hpp"

namespace lama {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

inline void require_4d(const Tensor& x, const char* op) {
  if (x.ndim() != 4)
    throw ShapeError(std::string(op) + ": expected B x C x H x W, got " + shape_str(x.shape()));
}

template <class F>
std::vector<double> map_values(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  const double* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(p[i]);
  return out;
}

template <class F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.numel());
  const double* p = a.data();
  const double* q = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(p[i], q[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  return make_result(a.shape(), detail::zip_values(a, b, [](double x, double y) { return x + y; }), "add",
                     {a, b}, [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g, g};
                     });
}

inline Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), detail::map_values(a, [s](double x) { return x * s; }), "scale", {a},
                     [s](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scale(g, s)};
                     });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return make_result(a.shape(), detail::map_values(a, [s](double x) { return x + s; }), "add_scalar",
                     {a}, [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g}; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  return make_result(a.shape(), detail::zip_values(a, b, [](double x, double y) { return x - y; }), "sub",
                     {a, b}, [](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{g, needs[1] ? neg(g) : Tensor()};
                     });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  return make_result(a.shape(), detail::zip_values(a, b, [](double x, double y) { return x * y; }), "mul",
                     {a, b}, [a, b](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? mul(g, b) : Tensor(),
                                                  needs[1] ? mul(g, a) : Tensor()};
                     });
}

inline Tensor square(const Tensor& a) {
  return make_result(a.shape(), detail::map_values(a, [](double x) { return x * x; }), "square", {a},
                     [a](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, scale(a, 2.0))};
                     });
}

// Piecewise-linear activations: the backward multiplies by a constant slope
// mask, which is the exact derivative almost everywhere at every order.
inline Tensor leaky_relu(const Tensor& a, double slope) {
  auto out = detail::map_values(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
  return make_result(a.shape(), std::move(out), slope == 0.0 ? "relu" : "leaky_relu", {a},
                     [a, slope](const Tensor& g, const std::vector<bool>&) {
                       Tensor m(a.shape(), detail::map_values(a, [slope](double x) {
                                  return x > 0.0 ? 1.0 : slope;
                                }));
                       return std::vector<Tensor>{mul(g, m)};
                     });
}

inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

inline double sigmoid_value(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Tensor sigmoid(const Tensor& a) {
  return make_result(a.shape(), detail::map_values(a, sigmoid_value), "sigmoid", {a},
                     [a](const Tensor& g, const std::vector<bool>&) {
                       Tensor s = sigmoid(a);
                       return std::vector<Tensor>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                     });
}

/// log(clamp(p, lo, hi)); zero gradient where the clamp is active.
inline Tensor log_clamped(const Tensor& p, double lo, double hi) {
  auto out = detail::map_values(p, [lo, hi](double x) { return std::log(std::clamp(x, lo, hi)); });
  return make_result(
      p.shape(), std::move(out), "log_clamped", {p},
      [p, lo, hi](const Tensor& g, const std::vector<bool>&) {
        Tensor d(p.shape(), detail::map_values(p, [lo, hi](double x) {
                   return (x >= lo && x <= hi) ? 1.0 / x : 0.0;
                 }));
        return std::vector<Tensor>{mul(g, d)};
      },
      false);
}

inline Tensor detach(const Tensor& a) { return a.detach(); }

// ---------------------------------------------------------------- reductions

inline Tensor expand_scalar(const Tensor& s, const Shape& shape);

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Shape shape = a.shape();
  return make_result({}, {acc}, "sum", {a}, [shape](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{expand_scalar(g, shape)};
  });
}

inline Tensor expand_scalar(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("expand_scalar: input is not a scalar");
  return make_result(shape, std::vector<double>(shape_numel(shape), s.item()), "expand_scalar", {s},
                     [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{sum(g)}; });
}

inline Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor channel_broadcast(const Tensor& v, const Shape& shape);

/// Per-channel sum over batch and spatial axes: B x C x H x W -> C.
inline Tensor channel_sum(const Tensor& x) {
  detail::require_4d(x, "channel_sum");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> out(C, 0.0);
  const double* p = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) out[c] += p[(b * C + c) * HW + i];
  Shape shape = x.shape();
  return make_result({C}, std::move(out), "channel_sum", {x},
                     [shape](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{channel_broadcast(g, shape)};
                     });
}

/// Broadcasts a length-C vector over a B x C x H x W shape.
inline Tensor channel_broadcast(const Tensor& v, const Shape& shape) {
  if (shape.size() != 4 || v.numel() != shape[1])
    throw ShapeError("channel_broadcast: " + shape_str(v.shape()) + " onto " + shape_str(shape));
  const std::size_t B = shape[0], C = shape[1], HW = shape[2] * shape[3];
  std::vector<double> out(B * C * HW);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) std::fill_n(out.begin() + (b * C + c) * HW, HW, v[c]);
  return make_result(shape, std::move(out), "channel_broadcast", {v},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{channel_sum(g)};
                     });
}

inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  return add(x, channel_broadcast(bias, x.shape()));
}

// ---------------------------------------------------------------- channels

inline Tensor embed_channels(const Tensor& g, std::size_t start, std::size_t total);

inline Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t count) {
  detail::require_4d(x, "slice_channels");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (start + count > C) throw ShapeError("slice_channels: range out of bounds");
  std::vector<double> out(B * count * HW);
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(x.data() + (b * C + start) * HW, count * HW, out.begin() + b * count * HW);
  return make_result({B, count, x.dim(2), x.dim(3)}, std::move(out), "slice_channels", {x},
                     [start, C](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{embed_channels(g, start, C)};
                     });
}

/// Places `g` at channel offset `start` of a zero tensor with `total` channels.
inline Tensor embed_channels(const Tensor& g, std::size_t start, std::size_t total) {
  detail::require_4d(g, "embed_channels");
  const std::size_t B = g.dim(0), n = g.dim(1), HW = g.dim(2) * g.dim(3);
  if (start + n > total) throw ShapeError("embed_channels: range out of bounds");
  std::vector<double> out(B * total * HW, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(g.data() + b * n * HW, n * HW, out.begin() + (b * total + start) * HW);
  return make_result({B, total, g.dim(2), g.dim(3)}, std::move(out), "embed_channels", {g},
                     [start, n](const Tensor& gy, const std::vector<bool>&) {
                       return std::vector<Tensor>{slice_channels(gy, start, n)};
                     });
}

inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const std::size_t B = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  std::size_t C = 0;
  for (const auto& p : parts) {
    detail::require_4d(p, "concat_channels");
    if (p.dim(0) != B || p.dim(2) != H || p.dim(3) != W)
      throw ShapeError("concat_channels: incompatible " + shape_str(p.shape()));
    C += p.dim(1);
  }
  const std::size_t HW = H * W;
  std::vector<double> out(B * C * HW);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(p.data() + b * p.dim(1) * HW, p.dim(1) * HW, out.begin() + (b * C + off) * HW);
    off += p.dim(1);
  }
  std::vector<std::size_t> counts;
  for (const auto& p : parts) counts.push_back(p.dim(1));
  return make_result({B, C, H, W}, std::move(out), "concat_channels", parts,
                     [offsets, counts](const Tensor& g, const std::vector<bool>& needs) {
                       std::vector<Tensor> gs(offsets.size());
                       for (std::size_t i = 0; i < gs.size(); ++i)
                         if (needs[i]) gs[i] = slice_channels(g, offsets[i], counts[i]);
                       return gs;
                     });
}

// ---------------------------------------------------------------- padding

enum class PadMode { zero, reflect };

struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;
  static Padding same(std::size_t p) { return {p, p, p, p}; }
  bool none() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
};

namespace detail {

// Source index for padded coordinate i (may be negative) or -1 for zero fill.
inline long pad_source(long i, long n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zero) return -1;
  return i < 0 ? -i : 2 * (n - 1) - i;
}

inline void check_padding(const Tensor& x, const Padding& p, PadMode mode, const char* op) {
  if (mode != PadMode::reflect) return;
  const std::size_t H = x.dim(2), W = x.dim(3);
  if (std::max(p.top, p.bottom) >= H || std::max(p.left, p.right) >= W)
    throw ShapeError(std::string(op) + ": reflect padding must be smaller than the input extent");
}

}  // namespace detail

inline Tensor pad2d_adjoint(const Tensor& g, const Padding& p, PadMode mode, std::size_t H, std::size_t W);

inline Tensor pad2d(const Tensor& x, const Padding& p, PadMode mode) {
  detail::require_4d(x, "pad2d");
  if (p.none()) return x;
  detail::check_padding(x, p, mode, "pad2d");
  const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Hp = H + p.top + p.bottom, Wp = W + p.left + p.right;
  std::vector<double> out(BC * Hp * Wp, 0.0);
  const double* src = x.data();
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t i = 0; i < Hp; ++i) {
      long si = detail::pad_source(static_cast<long>(i) - static_cast<long>(p.top), H, mode);
      if (si < 0) continue;
      for (std::size_t j = 0; j < Wp; ++j) {
        long sj = detail::pad_source(static_cast<long>(j) - static_cast<long>(p.left), W, mode);
        if (sj < 0) continue;
        out[(bc * Hp + i) * Wp + j] = src[(bc * H + si) * W + sj];
      }
    }
  return make_result({x.dim(0), x.dim(1), Hp, Wp}, std::move(out), "pad2d", {x},
                     [p, mode, H, W](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{pad2d_adjoint(g, p, mode, H, W)};
                     });
}

/// Adjoint of pad2d: folds padded gradients back onto their source pixels.
inline Tensor pad2d_adjoint(const Tensor& g, const Padding& p, PadMode mode, std::size_t H, std::size_t W) {
  detail::require_4d(g, "pad2d_adjoint");
  const std::size_t BC = g.dim(0) * g.dim(1), Hp = g.dim(2), Wp = g.dim(3);
  if (Hp != H + p.top + p.bottom || Wp != W + p.left + p.right)
    throw ShapeError("pad2d_adjoint: extent mismatch");
  std::vector<double> out(BC * H * W, 0.0);
  const double* src = g.data();
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t i = 0; i < Hp; ++i) {
      long si = detail::pad_source(static_cast<long>(i) - static_cast<long>(p.top), H, mode);
      if (si < 0) continue;
      for (std::size_t j = 0; j < Wp; ++j) {
        long sj = detail::pad_source(static_cast<long>(j) - static_cast<long>(p.left), W, mode);
        if (sj < 0) continue;
        out[(bc * H + si) * W + sj] += src[(bc * Hp + i) * Wp + j];
      }
    }
  return make_result({g.dim(0), g.dim(1), H, W}, std::move(out), "pad2d_adjoint", {g},
                     [p, mode](const Tensor& gy, const std::vector<bool>&) {
                       return std::vector<Tensor>{pad2d(gy, p, mode)};
                     });
}

// ---------------------------------------------------------------- convolution

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t dilation = 1;
};

namespace detail {

inline std::size_t conv_out_extent(std::size_t n, std::size_t k, const ConvGeometry& g) {
  const std::size_t span = g.dilation * (k - 1) + 1;
  if (n < span)
    throw ShapeError("conv2d: kernel extent " + std::to_string(span) + " larger than padded input " +
                     std::to_string(n));
  return (n - span) / g.stride + 1;
}

// C[M x N] += A[M x K] * B[K x N], all row-major.
inline void gemm_acc(const double* A, const double* Bm, double* Cm, std::size_t M, std::size_t K,
                     std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = Cm + i * N;
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = Bm + k * N;
      for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// Unfolds one image (Ci x H x W) into col[R x N], R = Ci*k*k, N = Ho*Wo.
inline void im2col(const double* x, std::size_t Ci, std::size_t H, std::size_t W, std::size_t k,
                   const ConvGeometry& g, std::size_t Ho, std::size_t Wo, double* col) {
  const std::size_t N = Ho * Wo;
  for (std::size_t ci = 0; ci < Ci; ++ci)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((ci * k + ki) * k + kj) * N;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const double* src = x + (ci * H + oh * g.stride + ki * g.dilation) * W + kj * g.dilation;
          double* dst = row + oh * Wo;
          if (g.stride == 1)
            std::copy_n(src, Wo, dst);
          else
            for (std::size_t ow = 0; ow < Wo; ++ow) dst[ow] = src[ow * g.stride];
        }
      }
}

inline void col2im(const double* col, std::size_t Ci, std::size_t H, std::size_t W, std::size_t k,
                   const ConvGeometry& g, std::size_t Ho, std::size_t Wo, double* x) {
  const std::size_t N = Ho * Wo;
  for (std::size_t ci = 0; ci < Ci; ++ci)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((ci * k + ki) * k + kj) * N;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          double* dst = x + (ci * H + oh * g.stride + ki * g.dilation) * W + kj * g.dilation;
          const double* src = row + oh * Wo;
          for (std::size_t ow = 0; ow < Wo; ++ow) dst[ow * g.stride] += src[ow];
        }
      }
}

inline bool is_pointwise(std::size_t k, const ConvGeometry& g) { return k == 1 && g.stride == 1; }

}  // namespace detail

inline Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& in_shape, ConvGeometry geo);
inline Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, const Shape& w_shape, ConvGeometry geo);

/// Unpadded cross-correlation: x B x Ci x H x W, w Co x Ci x k x k.
inline Tensor conv2d_valid(const Tensor& x, const Tensor& w, ConvGeometry geo = {}) {
  detail::require_4d(x, "conv2d");
  detail::require_4d(w, "conv2d weight");
  const std::size_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Ci || w.dim(3) != k)
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  const std::size_t Ho = detail::conv_out_extent(H, k, geo), Wo = detail::conv_out_extent(W, k, geo);
  const std::size_t R = Ci * k * k, N = Ho * Wo;
  std::vector<double> out(B * Co * N, 0.0);
  const bool pointwise = detail::is_pointwise(k, geo);
  std::vector<double> col(pointwise ? 0 : R * N);
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.data() + b * Ci * H * W;
    if (!pointwise) detail::im2col(xb, Ci, H, W, k, geo, Ho, Wo, col.data());
    detail::gemm_acc(w.data(), pointwise ? xb : col.data(), out.data() + b * Co * N, Co, R, N);
  }
  Shape xs = x.shape(), ws = w.shape();
  return make_result({B, Co, Ho, Wo}, std::move(out), "conv2d", {x, w},
                     [x, w, xs, ws, geo](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? conv2d_input_grad(g, w, xs, geo) : Tensor(),
                                                  needs[1] ? conv2d_weight_grad(x, g, ws, geo) : Tensor()};
                     });
}

/// Gradient of conv2d_valid with respect to its input (transposed convolution).
inline Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& in_shape, ConvGeometry geo) {
  const std::size_t B = in_shape[0], Ci = in_shape[1], H = in_shape[2], W = in_shape[3];
  const std::size_t Co = w.dim(0), k = w.dim(2);
  const std::size_t Ho = gy.dim(2), Wo = gy.dim(3), R = Ci * k * k, N = Ho * Wo;
  if (gy.dim(0) != B || gy.dim(1) != Co) throw ShapeError("conv2d_input_grad: gradient shape mismatch");
  // W^T: R x Co
  std::vector<double> wt(R * Co);
  for (std::size_t co = 0; co < Co; ++co)
    for (std::size_t r = 0; r < R; ++r) wt[r * Co + co] = w[co * R + r];
  std::vector<double> out(B * Ci * H * W, 0.0);
  const bool pointwise = detail::is_pointwise(k, geo);
  std::vector<double> col(R * N);
  for (std::size_t b = 0; b < B; ++b) {
    double* xb = out.data() + b * Ci * H * W;
    if (pointwise) {
      detail::gemm_acc(wt.data(), gy.data() + b * Co * N, xb, R, Co, N);
      continue;
    }
    std::fill(col.begin(), col.end(), 0.0);
    detail::gemm_acc(wt.data(), gy.data() + b * Co * N, col.data(), R, Co, N);
    detail::col2im(col.data(), Ci, H, W, k, geo, Ho, Wo, xb);
  }
  Shape ws = w.shape();
  return make_result(in_shape, std::move(out), "conv2d_input_grad", {gy, w},
                     [gy, w, ws, geo](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? conv2d_valid(g, w, geo) : Tensor(),
                                                  needs[1] ? conv2d_weight_grad(g, gy, ws, geo) : Tensor()};
                     });
}

/// Gradient of conv2d_valid with respect to its weight.
inline Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, const Shape& w_shape, ConvGeometry geo) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w_shape[0], k = w_shape[2];
  const std::size_t Ho = gy.dim(2), Wo = gy.dim(3), R = Ci * k * k, N = Ho * Wo;
  std::vector<double> out(Co * R, 0.0);
  std::vector<double> col(R * N), colt(N * R);
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.data() + b * Ci * H * W;
    const double* src = xb;
    if (!detail::is_pointwise(k, geo)) {
      detail::im2col(xb, Ci, H, W, k, geo, Ho, Wo, col.data());
      src = col.data();
    }
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t n = 0; n < N; ++n) colt[n * R + r] = src[r * N + n];
    detail::gemm_acc(gy.data() + b * Co * N, colt.data(), out.data(), Co, N, R);
  }
  Shape xs = x.shape();
  return make_result(w_shape, std::move(out), "conv2d_weight_grad", {x, gy},
                     [x, gy, xs, geo](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? conv2d_input_grad(gy, g, xs, geo) : Tensor(),
                                                  needs[1] ? conv2d_valid(x, g, geo) : Tensor()};
                     });
}

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
  PadMode pad_mode = PadMode::reflect;
};

/// Padded cross-correlation; output extent floor((H + 2p - d(k-1) - 1)/s) + 1.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const ConvOptions& opt = {}) {
  return conv2d_valid(pad2d(x, Padding::same(opt.padding), opt.pad_mode), w,
                      ConvGeometry{opt.stride, opt.dilation});
}

// ---------------------------------------------------------------- resampling

inline Tensor sum_pool2x(const Tensor& x);

inline Tensor upsample_nearest2x(const Tensor& x) {
  detail::require_4d(x, "upsample_nearest2x");
  const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> out(BC * 4 * H * W);
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t i = 0; i < 2 * H; ++i)
      for (std::size_t j = 0; j < 2 * W; ++j)
        out[(bc * 2 * H + i) * 2 * W + j] = x[(bc * H + i / 2) * W + j / 2];
  return make_result({x.dim(0), x.dim(1), 2 * H, 2 * W}, std::move(out), "upsample_nearest2x", {x},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sum_pool2x(g)};
                     });
}

/// Adjoint of nearest upsampling: sums each 2x2 block.
inline Tensor sum_pool2x(const Tensor& x) {
  detail::require_4d(x, "sum_pool2x");
  const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw ShapeError("sum_pool2x: odd spatial extent");
  std::vector<double> out(BC * (H / 2) * (W / 2), 0.0);
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        out[(bc * (H / 2) + i / 2) * (W / 2) + j / 2] += x[(bc * H + i) * W + j];
  return make_result({x.dim(0), x.dim(1), H / 2, W / 2}, std::move(out), "sum_pool2x", {x},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{upsample_nearest2x(g)};
                     });
}

// ---------------------------------------------------------------- spectral

namespace detail {

// Per-bin weights over a B x 2C x H x K spectrum: `edge` on the DC column and
// (even widths) the Nyquist column, `inner` elsewhere.
inline Tensor bin_weights(const Shape& shape, std::size_t width, double edge, double inner) {
  const std::size_t K = shape[3];
  std::vector<double> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t k = i % K;
    const bool is_edge = k == 0 || (width % 2 == 0 && k == width / 2);
    v[i] = is_edge ? edge : inner;
  }
  return Tensor(shape, std::move(v));
}

}  // namespace detail

inline Tensor irfft2d_channels(const Tensor& f, std::size_t width);

/// Real FFT over H, W with real and imaginary parts stacked along channels:
/// B x C x H x W -> B x 2C x H x (W/2+1), channels [re_0..re_{C-1}, im_0..im_{C-1}].
inline Tensor rfft2d_channels(const Tensor& x) {
  detail::require_4d(x, "rfft2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  ComplexTensor f = rfft2d(x);
  const std::size_t K = f.shape[3], plane = H * K;
  std::vector<double> out(B * 2 * C * plane);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(f.re.begin() + (b * C + c) * plane, plane, out.begin() + (b * 2 * C + c) * plane);
      std::copy_n(f.im.begin() + (b * C + c) * plane, plane, out.begin() + (b * 2 * C + C + c) * plane);
    }
  return make_result({B, 2 * C, H, K}, std::move(out), "rfft2d", {x},
                     [H, W](const Tensor& g, const std::vector<bool>&) {
                       // Adjoint: H*W * irfft of the gradient with paired bins halved.
                       Tensor half = mul(g, detail::bin_weights(g.shape(), W, 1.0, 0.5));
                       return std::vector<Tensor>{scale(irfft2d_channels(half, W), static_cast<double>(H * W))};
                     });
}

/// Inverse of rfft2d_channels, producing a B x C x H x width real tensor.
inline Tensor irfft2d_channels(const Tensor& f, std::size_t width) {
  detail::require_4d(f, "irfft2d");
  if (f.dim(1) % 2) throw ShapeError("irfft2d: channel count must be even (re/im halves)");
  const std::size_t B = f.dim(0), C = f.dim(1) / 2, H = f.dim(2), K = f.dim(3), plane = H * K;
  ComplexTensor z({B, C, H, K});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(f.data() + (b * 2 * C + c) * plane, plane, z.re.begin() + (b * C + c) * plane);
      std::copy_n(f.data() + (b * 2 * C + C + c) * plane, plane, z.im.begin() + (b * C + c) * plane);
    }
  Tensor spatial = irfft2d(z, width);
  std::vector<double> out(spatial.values().begin(), spatial.values().end());
  return make_result(spatial.shape(), std::move(out), "irfft2d", {f},
                     [H, width](const Tensor& g, const std::vector<bool>&) {
                       const double n = static_cast<double>(H * width);
                       Tensor spec = rfft2d_channels(g);
                       return std::vector<Tensor>{mul(spec, detail::bin_weights(spec.shape(), width, 1.0 / n, 2.0 / n))};
                     });
}

// ---------------------------------------------------------------- batchnorm

/// Running statistics of one batchnorm layer.
struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t c) : running_mean(c, 0.0), running_var(c, 1.0) {}
};

enum class Mode { train, eval };

/// Per-channel normalization over batch and spatial axes (train) or with
/// running statistics (eval), followed by the affine map gamma*x + beta.
inline Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                          Mode mode, double eps = 1e-5, double momentum = 0.1) {
  detail::require_4d(x, "batchnorm2d");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3), n = B * HW;
  if (gamma.numel() != C || beta.numel() != C || stats.running_mean.size() != C)
    throw ShapeError("batchnorm2d: parameter size mismatch for " + std::to_string(C) + " channels");
  std::vector<double> mu(C, 0.0), inv_std(C);
  const double* p = x.data();
  if (mode == Mode::train) {
    std::vector<double> var(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < HW; ++i) s += p[(b * C + c) * HW + i];
      mu[c] = s / static_cast<double>(n);
      double q = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[(b * C + c) * HW + i] - mu[c];
          q += d * d;
        }
      var[c] = q / static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
      const double unbiased = n > 1 ? var[c] * static_cast<double>(n) / static_cast<double>(n - 1) : var[c];
      stats.running_mean[c] = (1.0 - momentum) * stats.running_mean[c] + momentum * mu[c];
      stats.running_var[c] = (1.0 - momentum) * stats.running_var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + eps);
    }
  }
  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t idx = (b * C + c) * HW + i;
        xhat[idx] = (p[idx] - mu[c]) * inv_std[c];
        out[idx] = gamma[c] * xhat[idx] + beta[c];
      }
  const bool train = mode == Mode::train;
  return make_result(
      x.shape(), std::move(out), "batchnorm2d", {x, gamma, beta},
      [xhat = std::move(xhat), inv_std, gamma, B, C, HW, n, train](const Tensor& g,
                                                                  const std::vector<bool>& needs) {
        std::vector<double> gsum(C, 0.0), gxs(C, 0.0);
        const double* gp = g.data();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t idx = (b * C + c) * HW + i;
              gsum[c] += gp[idx];
              gxs[c] += gp[idx] * xhat[idx];
            }
        std::vector<Tensor> res(3);
        if (needs[0]) {
          std::vector<double> gx(B * C * HW);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const double k = gamma[c] * inv_std[c];
              const double mg = gsum[c] / static_cast<double>(n), mgx = gxs[c] / static_cast<double>(n);
              for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = (b * C + c) * HW + i;
                gx[idx] = train ? k * (gp[idx] - mg - xhat[idx] * mgx) : k * gp[idx];
              }
            }
          res[0] = Tensor(g.shape(), std::move(gx));
        }
        if (needs[1]) res[1] = Tensor({C}, gxs);
        if (needs[2]) res[2] = Tensor({C}, gsum);
        return res;
      },
      false);
}

}  // namespace lama
