#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "lama/layers.hpp"

namespace lama {

/// Channel split and kernel settings of one fast Fourier convolution.
struct FfcConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  double global_ratio_in = 0.5;
  double global_ratio_out = 0.5;
  std::size_t kernel_size = 3;
  // Off: the global->global path is an ordinary spatial convolution.
  bool enable_spectral = true;
  // Test switches for the frequency-domain block (both on in real models).
  bool spectral_batchnorm = true;
  bool spectral_relu = true;

  std::size_t in_global() const { return split(in_channels, global_ratio_in); }
  std::size_t in_local() const { return in_channels - in_global(); }
  std::size_t out_global() const { return split(out_channels, global_ratio_out); }
  std::size_t out_local() const { return out_channels - out_global(); }

  void validate() const {
    if (in_channels == 0 || out_channels == 0) throw ShapeError("FfcConfig: zero channels");
    if (global_ratio_in < 0 || global_ratio_in > 1 || global_ratio_out < 0 || global_ratio_out > 1)
      throw ShapeError("FfcConfig: global ratios must lie in [0, 1]");
    if (kernel_size % 2 == 0) throw ShapeError("FfcConfig: kernel size must be odd");
  }

 private:
  static std::size_t split(std::size_t c, double r) {
    return static_cast<std::size_t>(std::lround(r * static_cast<double>(c)));
  }
};

/// Frequency-domain block of the global branch: a pointwise convolution over
/// the 2C real/imaginary channels, then batchnorm and ReLU.
struct SpectralTransform {
  Tensor conv;  // 2*Cout x 2*Cin x 1 x 1
  BatchNormLayer bn;
  bool use_batchnorm = true;
  bool use_relu = true;

  static SpectralTransform make(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    return {he_normal({2 * out, 2 * in, 1, 1}, rng), BatchNormLayer::make(2 * out)};
  }

  Tensor forward(const Tensor& x, Mode mode) {
    const std::size_t width = x.dim(3);
    Tensor f = rfft2d_channels(x);
    f = conv2d(f, conv);
    if (use_batchnorm) f = bn.forward(f, mode);
    if (use_relu) f = relu(f);
    return irfft2d_channels(f, width);
  }

  std::size_t parameter_count() const { return conv.numel() + 2 * bn.gamma.numel(); }
};

inline Tensor spectral_transform(const Tensor& x, SpectralTransform& weights, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) == 0) throw ShapeError("spectral_transform: needs at least one channel");
  return weights.forward(x, mode);
}

/// Fast Fourier convolution: local (spatial) and global (spectral) branches
/// with four cross paths, summed per destination branch, then BN (+ ReLU).
class FfcLayer {
 public:
  FfcLayer() = default;

  FfcLayer(const FfcConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t li = cfg_.in_local(), gi = cfg_.in_global();
    const std::size_t lo = cfg_.out_local(), go = cfg_.out_global(), k = cfg_.kernel_size;
    if (li && lo) l2l_ = Conv2dLayer::make(li, lo, k, rng);
    if (li && go) l2g_ = Conv2dLayer::make(li, go, k, rng);
    if (gi && lo) g2l_ = Conv2dLayer::make(gi, lo, k, rng);
    if (gi && go) {
      if (cfg_.enable_spectral) {
        g2g_ = SpectralTransform::make(gi, go, rng);
        g2g_->use_batchnorm = cfg_.spectral_batchnorm;
        g2g_->use_relu = cfg_.spectral_relu;
      } else {
        g2g_conv_ = Conv2dLayer::make(gi, go, k, rng);
      }
    }
    if (lo) bn_local_ = BatchNormLayer::make(lo);
    if (go) bn_global_ = BatchNormLayer::make(go);
  }

  const FfcConfig& config() const { return cfg_; }

  Tensor forward(const Tensor& x, Mode mode, bool activate = true) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
      throw ShapeError("ffc: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                       shape_str(x.shape()));
    const std::size_t li = cfg_.in_local(), gi = cfg_.in_global();
    Tensor xl = gi == 0 ? x : li ? slice_channels(x, 0, li) : Tensor();
    Tensor xg = li == 0 ? x : gi ? slice_channels(x, li, gi) : Tensor();

    auto accumulate = [](Tensor& acc, const Tensor& t) { acc = acc.defined() ? add(acc, t) : t; };
    Tensor out_l, out_g;
    if (l2l_) accumulate(out_l, l2l_->forward(xl));
    if (g2l_) accumulate(out_l, g2l_->forward(xg));
    if (l2g_) accumulate(out_g, l2g_->forward(xl));
    if (g2g_) accumulate(out_g, g2g_->forward(xg, mode));
    if (g2g_conv_) accumulate(out_g, g2g_conv_->forward(xg));

    auto finish = [&](Tensor t, BatchNormLayer& bn) {
      t = bn.forward(t, mode);
      return activate ? relu(t) : t;
    };
    if (out_l.defined()) out_l = finish(out_l, *bn_local_);
    if (out_g.defined()) out_g = finish(out_g, *bn_global_);
    if (!out_g.defined()) return out_l;
    if (!out_l.defined()) return out_g;
    return concat_channels({out_l, out_g});
  }

  void collect(const std::string& prefix, ParamList& out) const {
    if (l2l_) l2l_->collect(prefix + ".l2l", out);
    if (l2g_) l2g_->collect(prefix + ".l2g", out);
    if (g2l_) g2l_->collect(prefix + ".g2l", out);
    if (g2g_) {
      out.push_back({prefix + ".g2g.conv", g2g_->conv});
      g2g_->bn.collect(prefix + ".g2g.bn", out);
    }
    if (g2g_conv_) g2g_conv_->collect(prefix + ".g2g", out);
    if (bn_local_) bn_local_->collect(prefix + ".bn_l", out);
    if (bn_global_) bn_global_->collect(prefix + ".bn_g", out);
  }

  void collect_stats(const std::string& prefix, StatsList& out) {
    if (g2g_) g2g_->bn.collect_stats(prefix + ".g2g.bn", out);
    if (bn_local_) bn_local_->collect_stats(prefix + ".bn_l", out);
    if (bn_global_) bn_global_->collect_stats(prefix + ".bn_g", out);
  }

  std::size_t parameter_count() const {
    ParamList p;
    collect("", p);
    return count_parameters(p);
  }

  SpectralTransform* spectral() { return g2g_ ? &*g2g_ : nullptr; }
  Conv2dLayer* local_to_local() { return l2l_ ? &*l2l_ : nullptr; }
  BatchNormLayer* local_norm() { return bn_local_ ? &*bn_local_ : nullptr; }
  BatchNormLayer* global_norm() { return bn_global_ ? &*bn_global_ : nullptr; }

 private:
  FfcConfig cfg_;
  std::optional<Conv2dLayer> l2l_, l2g_, g2l_, g2g_conv_;
  std::optional<SpectralTransform> g2g_;
  std::optional<BatchNormLayer> bn_local_, bn_global_;
};

inline Tensor ffc_forward(const Tensor& x, FfcLayer& layer, Mode mode, bool activate = true) {
  return layer.forward(x, mode, activate);
}

/// Closed-form parameter tally of an FFC layer (bias-free convolutions, one
/// gamma/beta pair per normalized channel).
inline std::size_t ffc_parameter_count(const FfcConfig& cfg) {
  const std::size_t li = cfg.in_local(), gi = cfg.in_global();
  const std::size_t lo = cfg.out_local(), go = cfg.out_global(), kk = cfg.kernel_size * cfg.kernel_size;
  std::size_t n = (li * lo + li * go + gi * lo) * kk;
  if (gi && go) n += cfg.enable_spectral ? (2 * gi) * (2 * go) + 2 * (2 * go) : gi * go * kk;
  return n + 2 * lo + 2 * go;
}

}  // namespace lama
