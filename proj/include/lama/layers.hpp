#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lama/autograd.hpp"

namespace lama {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedStats {
  std::string name;
  BatchNormStats* stats;
};

using ParamList = std::vector<NamedTensor>;
using StatsList = std::vector<NamedStats>;

inline std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

// He fan-in normal initialization for a Co x Ci x k x k kernel.
inline Tensor he_normal(const Shape& shape, std::mt19937_64& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

inline Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

// Parameters are read through this so a caller can evaluate a network as a
// constant function of its weights (gradients reach only the inputs).
inline Tensor param(const Tensor& t, bool frozen) { return frozen ? t.detach() : t; }

struct Conv2dLayer {
  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias
  ConvOptions options;

  static Conv2dLayer make(std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng,
                          std::size_t stride = 1, std::size_t dilation = 1, bool with_bias = false,
                          PadMode pad_mode = PadMode::reflect) {
    Conv2dLayer c;
    c.weight = he_normal({out, in, k, k}, rng);
    if (with_bias) c.bias = trainable(Tensor::zeros({out}));
    c.options = {stride, dilation, dilation * (k / 2), pad_mode};
    return c;
  }

  Tensor forward(const Tensor& x, bool frozen = false) const {
    Tensor y = conv2d(x, param(weight, frozen), options);
    return bias.defined() ? add_bias(y, param(bias, frozen)) : y;
  }

  void collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
  }

  std::size_t parameter_count() const { return weight.numel() + (bias.defined() ? bias.numel() : 0); }
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;

  static BatchNormLayer make(std::size_t c) {
    return {trainable(Tensor::ones({c})), trainable(Tensor::zeros({c})), BatchNormStats(c)};
  }

  Tensor forward(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, stats, mode); }

  void collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }

  void collect_stats(const std::string& prefix, StatsList& out) { out.push_back({prefix, &stats}); }
};

}  // namespace lama
