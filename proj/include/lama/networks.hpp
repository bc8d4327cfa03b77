#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lama/ffc.hpp"

namespace lama {

/// x4 = stack(x * m, m). x: B x 3 x H x W in [0,1]; m: B x 1 x H x W with 1 = known.
inline Tensor stack_input(const Tensor& x, const Tensor& m) {
  if (x.ndim() != 4 || m.ndim() != 4 || x.dim(1) != 3 || m.dim(1) != 1 || x.dim(0) != m.dim(0) ||
      x.dim(2) != m.dim(2) || x.dim(3) != m.dim(3))
    throw ShapeError("stack_input: image " + shape_str(x.shape()) + " vs mask " + shape_str(m.shape()));
  Tensor m3 = concat_channels({m.detach(), m.detach(), m.detach()});
  return concat_channels({mul(x, m3), m.detach()});
}

struct GeneratorConfig {
  std::size_t base_width = 8;
  std::size_t n_down = 3;
  std::size_t n_residual = 6;
  std::size_t n_up = 3;
  bool ffc = true;
  double ffc_ratio = 0.5;
  // Channel count of the residual trunk; 0 means base_width * 2^n_down.
  // Lets a regular-conv model be width-adjusted to match an FFC model's size.
  std::size_t trunk_width = 0;
  std::uint64_t seed = 1;

  std::size_t trunk() const { return trunk_width ? trunk_width : base_width << n_down; }

  // Channel count entering each resolution level, index 0 = full resolution.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w(n_down + 1);
    for (std::size_t i = 0; i < n_down; ++i) w[i] = base_width << i;
    w[n_down] = trunk();
    return w;
  }

  FfcConfig residual_layer() const {
    const double r = ffc ? ffc_ratio : 0.0;
    return {.in_channels = trunk(), .out_channels = trunk(), .global_ratio_in = r, .global_ratio_out = r};
  }

  void validate() const {
    if (base_width == 0) throw ShapeError("GeneratorConfig: base_width must be positive");
    if (n_down != n_up) throw ShapeError("GeneratorConfig: n_down must equal n_up");
    residual_layer().validate();
  }
};

inline std::size_t generator_parameter_count(const GeneratorConfig& cfg) {
  auto conv_bn = [](std::size_t in, std::size_t out) { return 9 * in * out + 2 * out; };
  const auto w = cfg.widths();
  std::size_t n = conv_bn(4, w[0]);
  for (std::size_t i = 0; i < cfg.n_down; ++i) n += conv_bn(w[i], w[i + 1]) + conv_bn(w[i + 1], w[i]);
  n += 2 * cfg.n_residual * ffc_parameter_count(cfg.residual_layer());
  return n + 9 * w[0] * 3 + 3;
}

/// Encoder (stride-2 convs), residual trunk of FFC or plain conv blocks,
/// decoder (nearest x2 + conv), sigmoid RGB head.
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const auto w = cfg_.widths();
    stem_ = {Conv2dLayer::make(4, w[0], 3, rng), BatchNormLayer::make(w[0])};
    for (std::size_t i = 0; i < cfg_.n_down; ++i)
      down_.push_back({Conv2dLayer::make(w[i], w[i + 1], 3, rng, 2), BatchNormLayer::make(w[i + 1])});
    for (std::size_t i = 0; i < cfg_.n_residual; ++i)
      blocks_.push_back({FfcLayer(cfg_.residual_layer(), rng), FfcLayer(cfg_.residual_layer(), rng)});
    for (std::size_t i = cfg_.n_down; i > 0; --i)
      up_.push_back({Conv2dLayer::make(w[i], w[i - 1], 3, rng), BatchNormLayer::make(w[i - 1])});
    head_ = Conv2dLayer::make(w[0], 3, 3, rng, 1, 1, true);
  }

  const GeneratorConfig& config() const { return cfg_; }

  Tensor forward(const Tensor& x4, Mode mode) {
    const std::size_t stride = std::size_t{1} << cfg_.n_down;
    if (x4.ndim() != 4 || x4.dim(1) != 4) throw ShapeError("generator: expected B x 4 x H x W, got " + shape_str(x4.shape()));
    if (x4.dim(2) % stride || x4.dim(3) % stride || x4.dim(2) == 0 || x4.dim(3) == 0)
      throw ShapeError("generator: spatial size " + std::to_string(x4.dim(2)) + "x" + std::to_string(x4.dim(3)) +
                       " not divisible by " + std::to_string(stride));
    Tensor h = stem_.forward(x4, mode);
    for (auto& d : down_) h = d.forward(h, mode);
    for (auto& b : blocks_) h = add(h, b.second.forward(b.first.forward(h, mode), mode, false));
    for (auto& u : up_) h = u.forward(upsample_nearest2x(h), mode);
    return sigmoid(head_.forward(h));
  }

  ParamList parameters() const {
    ParamList p;
    stem_.conv.collect("stem.conv", p);
    stem_.bn.collect("stem.bn", p);
    for (std::size_t i = 0; i < down_.size(); ++i) {
      down_[i].conv.collect("down" + std::to_string(i) + ".conv", p);
      down_[i].bn.collect("down" + std::to_string(i) + ".bn", p);
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].first.collect("res" + std::to_string(i) + ".a", p);
      blocks_[i].second.collect("res" + std::to_string(i) + ".b", p);
    }
    for (std::size_t i = 0; i < up_.size(); ++i) {
      up_[i].conv.collect("up" + std::to_string(i) + ".conv", p);
      up_[i].bn.collect("up" + std::to_string(i) + ".bn", p);
    }
    head_.collect("head", p);
    return p;
  }

  StatsList buffers() {
    StatsList s;
    stem_.bn.collect_stats("stem.bn", s);
    for (std::size_t i = 0; i < down_.size(); ++i) down_[i].bn.collect_stats("down" + std::to_string(i) + ".bn", s);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].first.collect_stats("res" + std::to_string(i) + ".a", s);
      blocks_[i].second.collect_stats("res" + std::to_string(i) + ".b", s);
    }
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].bn.collect_stats("up" + std::to_string(i) + ".bn", s);
    return s;
  }

  std::size_t parameter_count() const { return count_parameters(parameters()); }

 private:
  struct ConvBnRelu {
    Conv2dLayer conv;
    BatchNormLayer bn;
    Tensor forward(const Tensor& x, Mode mode) { return relu(bn.forward(conv.forward(x), mode)); }
  };

  GeneratorConfig cfg_;
  ConvBnRelu stem_;
  std::vector<ConvBnRelu> down_, up_;
  std::vector<std::pair<FfcLayer, FfcLayer>> blocks_;
  Conv2dLayer head_;
};

struct DiscriminatorConfig {
  std::size_t n_layers = 3;
  std::size_t base_width = 16;
  std::size_t kernel_size = 3;
  double slope = 0.2;
  std::uint64_t seed = 2;
};

/// Input footprint of a logit cell: cell (i, j) sees rows
/// [start + i*jump, start + i*jump + size) and likewise for columns, before
/// clipping to the image.
struct PatchGeometry {
  long start = 0;
  std::size_t jump = 1;
  std::size_t size = 1;

  long first(std::size_t cell) const { return start + static_cast<long>(cell * jump); }
  long last(std::size_t cell) const { return first(cell) + static_cast<long>(size) - 1; }
};

struct DiscriminatorOutput {
  Tensor logits;                // B x 1 x h x w
  std::vector<Tensor> features; // activations after each nonlinearity
};

/// Patch discriminator: strided conv + leaky ReLU stack, then a stride-1 conv
/// to one logit per cell.
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    if (cfg_.n_layers == 0 || cfg_.base_width == 0 || cfg_.kernel_size % 2 == 0)
      throw ShapeError("DiscriminatorConfig: need >= 1 layer, positive width and odd kernel");
    std::mt19937_64 rng(cfg_.seed);
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
      const std::size_t out = cfg_.base_width << i;
      layers_.push_back(Conv2dLayer::make(in, out, cfg_.kernel_size, rng, 2, 1, true));
      in = out;
    }
    final_ = Conv2dLayer::make(in, 1, cfg_.kernel_size, rng, 1, 1, true);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  PatchGeometry geometry() const {
    PatchGeometry g;
    auto step = [&](const Conv2dLayer& c) {
      const std::size_t k = c.weight.dim(2);
      g.start -= static_cast<long>(c.options.padding * g.jump);
      g.size += (k - 1) * c.options.dilation * g.jump;
      g.jump *= c.options.stride;
    };
    for (const auto& l : layers_) step(l);
    step(final_);
    return g;
  }

  /// `frozen` evaluates D as a constant function of its weights.
  DiscriminatorOutput forward(const Tensor& img, bool frozen = false) const {
    if (img.ndim() != 4 || img.dim(1) != 3) throw ShapeError("discriminator: expected B x 3 x H x W");
    const std::size_t patch = geometry().size;
    if (img.dim(2) < patch || img.dim(3) < patch)
      throw ShapeError("discriminator: image " + shape_str(img.shape()) + " smaller than one " +
                       std::to_string(patch) + "px patch");
    DiscriminatorOutput out;
    Tensor h = img;
    for (const auto& l : layers_) {
      h = leaky_relu(l.forward(h, frozen), cfg_.slope);
      out.features.push_back(h);
    }
    out.logits = final_.forward(h, frozen);
    return out;
  }

  ParamList parameters() const {
    ParamList p;
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("conv" + std::to_string(i), p);
    final_.collect("logit", p);
    return p;
  }

  std::size_t parameter_count() const { return count_parameters(parameters()); }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2dLayer> layers_;
  Conv2dLayer final_;
};

struct HrfExtractorConfig {
  std::vector<std::size_t> widths{16, 16, 16, 16};
  std::vector<std::size_t> dilations{1, 2, 4, 8};
  std::uint64_t seed = 3;
};

/// Frozen random dilated-conv feature stack for the perceptual loss. Its
/// weights never track gradients, so no optimizer can see them.
class HrfExtractor {
 public:
  explicit HrfExtractor(const HrfExtractorConfig& cfg = {}) : cfg_(cfg) {
    if (cfg_.widths.empty() || cfg_.widths.size() != cfg_.dilations.size())
      throw ShapeError("HrfExtractorConfig: widths and dilations must be nonempty and equal length");
    std::mt19937_64 rng(cfg_.seed);
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
      Conv2dLayer c = Conv2dLayer::make(in, cfg_.widths[i], 3, rng, 1, cfg_.dilations[i]);
      c.weight.set_requires_grad(false);
      layers_.push_back(std::move(c));
      in = cfg_.widths[i];
    }
  }

  const HrfExtractorConfig& config() const { return cfg_; }

  std::vector<Tensor> features(const Tensor& img) const {
    if (img.ndim() != 4 || img.dim(1) != 3) throw ShapeError("hrf_features: expected B x 3 x H x W");
    std::vector<Tensor> taps;
    Tensor h = img;
    for (const auto& l : layers_) {
      h = relu(l.forward(h));
      taps.push_back(h);
    }
    return taps;
  }

  /// Theoretical receptive field (pixels per side) of the last tap.
  std::size_t receptive_field() const {
    std::size_t r = 1;
    for (auto d : cfg_.dilations) r += 2 * d;
    return r;
  }

  ParamList weights() const {
    ParamList p;
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("hrf" + std::to_string(i), p);
    return p;
  }

 private:
  HrfExtractorConfig cfg_;
  std::vector<Conv2dLayer> layers_;
};

inline std::vector<Tensor> hrf_features(const Tensor& img, const HrfExtractor& extractor) {
  return extractor.features(img);
}

}  // namespace lama
