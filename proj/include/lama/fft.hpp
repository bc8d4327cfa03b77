#pragma once

#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "lama/tensor.hpp"

namespace lama {

using cplx = std::complex<double>;

namespace fft {

// Mixed-radix decimation-in-time transform for any length. Twiddles come from
// one table of the top-level length; sub-transforms index it with a stride.
class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n), roots_(n), scratch_(n) {
    for (std::size_t k = 0; k < n; ++k) {
      double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      roots_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const { return n_; }

  // In place over `data` (stride `stride`). Unnormalized in both directions.
  void forward(cplx* data, std::size_t stride = 1) { execute(data, stride, false); }
  void inverse(cplx* data, std::size_t stride = 1) { execute(data, stride, true); }

 private:
  void execute(cplx* data, std::size_t stride, bool inverse) {
    if (n_ <= 1) return;
    std::vector<cplx> in(n_);
    for (std::size_t i = 0; i < n_; ++i) in[i] = data[i * stride];
    recurse(in.data(), 1, scratch_.data(), n_, inverse);
    for (std::size_t i = 0; i < n_; ++i) data[i * stride] = scratch_[i];
  }

  cplx root(std::size_t e, bool inverse) const {
    const cplx& r = roots_[e % n_];
    return inverse ? std::conj(r) : r;
  }

  void recurse(const cplx* in, std::size_t istride, cplx* out, std::size_t n, bool inverse) {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    std::size_t p = 2;
    while (n % p) ++p;
    const std::size_t m = n / p;
    for (std::size_t q = 0; q < p; ++q) recurse(in + q * istride, istride * p, out + q * m, m, inverse);
    // out[q*m + k] holds sub-transform q at bin k; combine the p sub-transforms.
    const std::size_t step = n_ / n;
    cplx tmp[64];
    std::vector<cplx> heap;
    cplx* acc = tmp;
    if (p > 64) {
      heap.resize(p);
      acc = heap.data();
    }
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t j = 0; j < p; ++j) {
        cplx s = 0.0;
        const std::size_t bin = k + j * m;
        for (std::size_t q = 0; q < p; ++q) s += out[q * m + k] * root(step * ((q * bin) % n), inverse);
        acc[j] = s;
      }
      for (std::size_t j = 0; j < p; ++j) out[k + j * m] = acc[j];
    }
  }

  std::size_t n_;
  std::vector<cplx> roots_;
  std::vector<cplx> scratch_;
};

}  // namespace fft

/// Complex counterpart of Tensor; real and imaginary planes share `shape`.
struct ComplexTensor {
  Shape shape;
  std::vector<double> re;
  std::vector<double> im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s) : shape(std::move(s)), re(shape_numel(shape)), im(shape_numel(shape)) {}

  cplx at(std::size_t i) const { return {re[i], im[i]}; }
  std::size_t numel() const { return re.size(); }
};

inline std::size_t half_spectrum_width(std::size_t w) { return w / 2 + 1; }

/// Unnormalized 2D real FFT over the last two axes of a B x C x H x W tensor;
/// keeps the W/2+1 non-redundant columns.
inline ComplexTensor rfft2d(const Tensor& t) {
  if (t.ndim() != 4) throw ShapeError("rfft2d expects B x C x H x W, got " + shape_str(t.shape()));
  const std::size_t B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  if (H == 0 || W == 0) throw ShapeError("rfft2d: empty spatial extent");
  const std::size_t K = half_spectrum_width(W);
  ComplexTensor out({B, C, H, K});
  fft::Plan row(W), col(H);
  std::vector<cplx> buf(H * K), line(W);
  const double* src = t.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) line[w] = src[(bc * H + h) * W + w];
      row.forward(line.data());
      for (std::size_t k = 0; k < K; ++k) buf[h * K + k] = line[k];
    }
    for (std::size_t k = 0; k < K; ++k) col.forward(buf.data() + k, K);
    for (std::size_t i = 0; i < H * K; ++i) {
      out.re[bc * H * K + i] = buf[i].real();
      out.im[bc * H * K + i] = buf[i].imag();
    }
  }
  return out;
}

/// Inverse of rfft2d with 1/(H*W) normalization. `out_width` picks between the
/// two widths (2K-2, 2K-1) that share a half-spectrum of K columns. Imaginary
/// parts of the DC column (and the Nyquist column for even widths) are ignored.
inline Tensor irfft2d(const ComplexTensor& f, std::size_t out_width) {
  if (f.shape.size() != 4) throw ShapeError("irfft2d expects B x C x H x K");
  const std::size_t B = f.shape[0], C = f.shape[1], H = f.shape[2], K = f.shape[3];
  if (H == 0 || K == 0) throw ShapeError("irfft2d: empty spatial extent");
  if (out_width == 0 || half_spectrum_width(out_width) != K)
    throw ShapeError("irfft2d: out_width " + std::to_string(out_width) +
                     " inconsistent with half-spectrum width " + std::to_string(K));
  const std::size_t W = out_width;
  Tensor out({B, C, H, W});
  double* dst = out.mutable_data();
  fft::Plan row(W), col(H);
  std::vector<cplx> buf(H * K), line(W);
  const double scale = 1.0 / static_cast<double>(H * W);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t i = 0; i < H * K; ++i) buf[i] = f.at(bc * H * K + i);
    for (std::size_t k = 0; k < K; ++k) col.inverse(buf.data() + k, K);
    for (std::size_t h = 0; h < H; ++h) {
      line[0] = buf[h * K].real();
      for (std::size_t k = 1; k < K; ++k) {
        const bool nyquist = (W % 2 == 0) && k == W / 2;
        line[k] = nyquist ? cplx(buf[h * K + k].real(), 0.0) : buf[h * K + k];
        if (!nyquist) line[W - k] = std::conj(buf[h * K + k]);
      }
      row.inverse(line.data());
      for (std::size_t w = 0; w < W; ++w) dst[(bc * H + h) * W + w] = line[w].real() * scale;
    }
  }
  check_finite(out.values(), "irfft2d");
  return out;
}

}  // namespace lama
