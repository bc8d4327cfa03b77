#include <gtest/gtest.h>

#include <cmath>

#include "lama/autograd.hpp"
#include "test_support.hpp"

using namespace lama;
using namespace lama::testing;

namespace {

std::vector<std::complex<double>> full_spectrum_of(const Tensor& t) {
  return naive_dft2(t.data(), t.dim(2), t.dim(3));
}

}  // namespace

TEST(Rfft2d, ConstantImageHasOnlyDc) {
  Tensor t({1, 1, 4, 4}, 2.5);
  auto f = rfft2d(t);
  ASSERT_EQ(f.shape, (Shape{1, 1, 4, 3}));
  EXPECT_DOUBLE_EQ(f.re[0], 16 * 2.5);
  for (std::size_t i = 1; i < f.numel(); ++i) {
    EXPECT_NEAR(f.re[i], 0.0, 1e-12);
    EXPECT_NEAR(f.im[i], 0.0, 1e-12);
  }
}

TEST(Rfft2d, ImpulseHasFlatSpectrum) {
  Tensor t({1, 1, 4, 4}, 0.0);
  t.mutable_values()[0] = 1.0;
  auto f = rfft2d(t);
  for (std::size_t i = 0; i < f.numel(); ++i) {
    EXPECT_NEAR(f.re[i], 1.0, 1e-14);
    EXPECT_NEAR(f.im[i], 0.0, 1e-14);
  }
}

TEST(Rfft2d, MatchesDirectDftOnRandom8x8) {
  Tensor t = random_tensor({1, 1, 8, 8}, 11);
  auto f = rfft2d(t);
  auto ref = full_spectrum_of(t);
  double num = 0, den = 0;
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t v = 0; v < 5; ++v) {
      num += std::norm(f.at(u * 5 + v) - ref[u * 8 + v]);
      den += std::norm(ref[u * 8 + v]);
    }
  EXPECT_LE(std::sqrt(num / den), 1e-10);
}

TEST(Rfft2d, RejectsEmptyExtent) {
  EXPECT_THROW(rfft2d(Tensor({1, 1, 0, 4})), ShapeError);
}

TEST(Irfft2d, RoundTripEvenAndOddWidths) {
  for (std::size_t W : {8u, 7u}) {
    Tensor t = random_tensor({2, 3, 8, W}, 100 + W);
    Tensor back = irfft2d(rfft2d(t), W);
    EXPECT_LE(rel_error(back.values(), t.values()), 1e-10) << "W=" << W;
  }
}

TEST(Irfft2d, RejectsInconsistentWidth) {
  auto f = rfft2d(random_tensor({1, 1, 4, 8}, 3));
  EXPECT_THROW(irfft2d(f, 10), ShapeError);
  EXPECT_NO_THROW(irfft2d(f, 9));
}

TEST(Irfft2d, ParsevalFromReconstructedFullSpectrum) {
  const std::size_t H = 6, W = 7;
  Tensor t = random_tensor({1, 1, H, W}, 5);
  auto f = rfft2d(t);
  const std::size_t K = f.shape[3];
  double energy = 0.0;
  for (double v : t.values()) energy += v * v;
  double spec = 0.0;
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v) {
      // Columns beyond the half spectrum follow from Hermitian symmetry.
      cplx z = v < K ? f.at(u * K + v) : std::conj(f.at(((H - u) % H) * K + (W - v)));
      spec += std::norm(z);
    }
  EXPECT_NEAR(energy, spec / static_cast<double>(H * W), 1e-10 * energy);
}

TEST(Rfft2d, RoundTripAllSmallShapes) {
  for (std::size_t H = 1; H <= 16; ++H)
    for (std::size_t W = 1; W <= 16; ++W) {
      Tensor t = random_tensor({1, 2, H, W}, H * 31 + W);
      Tensor back = irfft2d(rfft2d(t), W);
      ASSERT_LE(rel_error(back.values(), t.values()), 1e-10) << H << "x" << W;
    }
}

TEST(Rfft2d, Linearity) {
  Tensor x = random_tensor({1, 2, 9, 6}, 1), y = random_tensor({1, 2, 9, 6}, 2);
  const double a = 0.7, b = -1.3;
  auto fxy = rfft2d(add(scale(x, a), scale(y, b)));
  auto fx = rfft2d(x), fy = rfft2d(y);
  double worst = 0.0;
  for (std::size_t i = 0; i < fxy.numel(); ++i)
    worst = std::max(worst, std::abs(fxy.at(i) - (a * fx.at(i) + b * fy.at(i))));
  EXPECT_LE(worst, 1e-10);
}

TEST(Conv2d, PointwiseIdentityKernel) {
  Tensor x = random_tensor({2, 3, 5, 5}, 9);
  Tensor w({3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w.mutable_values()[c * 3 + c] = 1.0;
  Tensor y = conv2d(x, w);
  EXPECT_EQ(max_abs_diff(y.values(), x.values()), 0.0);
}

TEST(Conv2d, ReflectPaddingPreservesConstants) {
  Tensor x({1, 1, 6, 6}, 1.0);
  Tensor w({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, {.padding = 1, .pad_mode = PadMode::reflect});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 6, 6}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 9.0);
}

TEST(Conv2d, MatchesNaiveOracle) {
  Tensor x = random_tensor({1, 2, 5, 5}, 21);
  Tensor w = random_tensor({3, 2, 3, 3}, 22);
  Tensor y = conv2d(x, w, {.padding = 1, .pad_mode = PadMode::zero});
  EXPECT_LE(max_abs_diff(y.values(), naive_conv2d(x, w, 1, 1, false)), 1e-12);
}

TEST(Conv2d, OracleAcrossStridesAndPaddingModes) {
  std::uint64_t seed = 40;
  for (std::size_t stride : {1u, 2u})
    for (bool reflect : {false, true})
      for (std::size_t trial = 0; trial < 4; ++trial) {
        const std::size_t H = 4 + (seed % 5), W = 4 + ((seed / 3) % 6), k = trial % 2 ? 3 : 1;
        Tensor x = random_tensor({2, 2, H, W}, seed++);
        Tensor w = random_tensor({3, 2, k, k}, seed++);
        const std::size_t pad = k / 2;
        Tensor y = conv2d(x, w, {.stride = stride, .padding = pad,
                                 .pad_mode = reflect ? PadMode::reflect : PadMode::zero});
        ASSERT_LE(max_abs_diff(y.values(), naive_conv2d(x, w, stride, pad, reflect)), 1e-12);
      }
}

TEST(Conv2d, DilatedMatchesOracle) {
  Tensor x = random_tensor({1, 2, 12, 12}, 7);
  Tensor w = random_tensor({2, 2, 3, 3}, 8);
  Tensor y = conv2d(x, w, {.dilation = 4, .padding = 4});
  EXPECT_LE(max_abs_diff(y.values(), naive_conv2d(x, w, 1, 4, true, 4)), 1e-12);
}

TEST(Conv2d, KernelLargerThanInputIsRejected) {
  EXPECT_THROW(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3})), ShapeError);
  EXPECT_THROW(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3})), ShapeError);
}

TEST(Elementwise, ReluSigmoid) {
  Tensor x({3}, std::vector<double>{-1, 0, 2});
  Tensor r = relu(x);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 2.0);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
}

TEST(BatchNorm, StandardizesThreeValues) {
  Tensor x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  BatchNormStats st(1);
  Tensor y = batchnorm2d(x, Tensor::ones({1}), Tensor::zeros({1}), st, Mode::train);
  EXPECT_NEAR(y[0], -1.2247, 1e-4);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], 1.2247, 1e-4);
}

TEST(BatchNorm, TrainModeMomentsAndZeroVariance) {
  Tensor x = random_tensor({4, 3, 5, 5}, 17, -3, 5);
  BatchNormStats st(3);
  Tensor y = batchnorm2d(x, Tensor::ones({3}), Tensor::zeros({3}), st, Mode::train);
  auto moments = [](const Tensor& t, std::size_t c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) m += t[(b * 3 + c) * 25 + i];
    m /= 100;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(t[(b * 3 + c) * 25 + i] - m, 2);
    return std::pair{m, v / 100};
  };
  for (std::size_t c = 0; c < 3; ++c) {
    auto [mx, vx] = moments(x, c);
    auto [my, vy] = moments(y, c);
    EXPECT_NEAR(my, 0.0, 1e-8);
    // Unit variance up to the eps = 1e-5 regularizer.
    EXPECT_NEAR(vy * (vx + 1e-5) / vx, 1.0, 1e-8);
    EXPECT_NEAR(st.running_mean[c], 0.1 * mx, 1e-12);
  }
  Tensor flat({2, 1, 2, 2}, 3.0);
  BatchNormStats st1(1);
  Tensor z = batchnorm2d(flat, Tensor::ones({1}), Tensor::zeros({1}), st1, Mode::train);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  BatchNormStats st(1);
  st.running_mean[0] = 2.0;
  st.running_var[0] = 4.0 - 1e-5;
  Tensor x({1, 1, 1, 2}, std::vector<double>{2.0, 4.0});
  Tensor y = batchnorm2d(x, Tensor::ones({1}), Tensor::zeros({1}), st, Mode::eval);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(Backward, SumOfSquares) {
  Tensor x({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad(true);
  backward(sum(square(x)));
  ASSERT_EQ(x.grad().size(), 3u);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Backward, StopGradientPassesValueOnly) {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  Tensor y = mul(detach(x), x);
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
  EXPECT_DOUBLE_EQ(grad(y, {x})[0].item(), 3.0);
}

TEST(Backward, NonScalarRootRejected) {
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  EXPECT_THROW(backward(scale(x, 2.0)), GraphError);
}

TEST(Backward, IgnoredLeafGetsExactZero) {
  Tensor a = random_tensor({4}, 1), b = random_tensor({4}, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto g = grad(sum(square(a)), {a, b});
  for (double v : g[1].values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonFiniteValuesAreErrors) {
  Tensor x({1}, std::vector<double>{1e308});
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(Backward, CreateGraphThroughBatchNormRejected) {
  Tensor x = random_tensor({2, 1, 2, 2}, 4);
  x.set_requires_grad(true);
  BatchNormStats st(1);
  Tensor y = batchnorm2d(x, Tensor::ones({1}), Tensor::zeros({1}), st, Mode::train);
  EXPECT_THROW(grad(weighted_sum(y, 5), {x}, true), GraphError);
}

TEST(Backward, SecondOrderThroughConvMatchesFiniteDifference) {
  // d/dw of ||d(sum conv(x, w)) / dx||^2, checked against central differences.
  Tensor x = random_tensor({1, 2, 6, 6}, 31);
  Tensor w0 = random_tensor({3, 2, 3, 3}, 32);
  auto penalty = [&](const std::vector<Tensor>& in) {
    const bool outer = grad_enabled();
    GradModeGuard record(true);
    Tensor xl = x.detach();
    xl.set_requires_grad(true);
    Tensor y = leaky_relu(conv2d(xl, in[0], {.stride = 2, .padding = 1}), 0.2);
    Tensor gx = grad(weighted_sum(y, 33), {xl}, outer)[0];
    return sum(square(gx));
  };
  EXPECT_LE(gradient_check(penalty, {w0}), 1e-6);
}

// Finite-difference checks of every differentiable primitive.
TEST(GradCheck, Elementwise) {
  Shape s{2, 3, 4, 4};
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(add(v[0], v[1]), 1); },
                           {random_tensor(s, 1), random_tensor(s, 2)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(sub(v[0], v[1]), 1); },
                           {random_tensor(s, 1), random_tensor(s, 2)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(mul(v[0], v[1]), 1); },
                           {random_tensor(s, 3), random_tensor(s, 4)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(square(v[0]), 1); }, {random_tensor(s, 5)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(scale(add_scalar(v[0], 2), -3), 1); },
                           {random_tensor(s, 5)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(relu(v[0]), 1); }, {random_away_from_zero(s, 6)}),
            1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(leaky_relu(v[0], 0.2), 1); },
                           {random_away_from_zero(s, 7)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(sigmoid(v[0]), 1); }, {random_tensor(s, 8)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(log_clamped(v[0], 1e-7, 1 - 1e-7), 1); },
                           {random_tensor(s, 9, 0.1, 0.9)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return mean(square(v[0])); }, {random_tensor(s, 10)}), 1e-6);
}

TEST(GradCheck, StructuralOps) {
  Tensor x = random_tensor({2, 4, 3, 4}, 1);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(slice_channels(v[0], 1, 2), 2); }, {x}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(concat_channels({v[0], v[1]}), 3); },
                           {x, random_tensor({2, 1, 3, 4}, 2)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(add_bias(v[0], v[1]), 4); },
                           {x, random_tensor({4}, 3)}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(upsample_nearest2x(v[0]), 5); }, {x}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(pad2d(v[0], {1, 2, 2, 1}, PadMode::reflect), 6); },
                           {x}), 1e-6);
  EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(pad2d(v[0], Padding::same(1), PadMode::zero), 6); },
                           {x}), 1e-6);
}

TEST(GradCheck, Convolutions) {
  Tensor x = random_tensor({2, 3, 7, 6}, 11);
  for (std::size_t stride : {1u, 2u}) {
    auto f = [stride](auto& v) { return weighted_sum(conv2d(v[0], v[1], {.stride = stride, .padding = 1}), 12); };
    EXPECT_LE(gradient_check(f, {x, random_tensor({4, 3, 3, 3}, 13)}), 1e-6) << stride;
  }
  auto dil = [](auto& v) { return weighted_sum(conv2d(v[0], v[1], {.dilation = 2, .padding = 2}), 14); };
  EXPECT_LE(gradient_check(dil, {x, random_tensor({2, 3, 3, 3}, 15)}), 1e-6);
  auto pw = [](auto& v) { return weighted_sum(conv2d(v[0], v[1]), 16); };
  EXPECT_LE(gradient_check(pw, {x, random_tensor({5, 3, 1, 1}, 17)}), 1e-6);
}

TEST(GradCheck, SpectralOps) {
  for (std::size_t W : {6u, 5u}) {
    Tensor x = random_tensor({2, 2, 4, W}, 20 + W);
    EXPECT_LE(gradient_check([](auto& v) { return weighted_sum(rfft2d_channels(v[0]), 21); }, {x}), 1e-6);
    Tensor f = rfft2d_channels(x);
    auto inv = [W](auto& v) { return weighted_sum(irfft2d_channels(v[0], W), 22); };
    EXPECT_LE(gradient_check(inv, {random_tensor(f.shape(), 23)}), 1e-6);
  }
}

TEST(GradCheck, BatchNormBothModes) {
  Tensor x = random_tensor({3, 2, 3, 3}, 30);
  for (Mode mode : {Mode::train, Mode::eval}) {
    auto f = [mode](auto& v) {
      BatchNormStats st(2);
      st.running_mean = {0.3, -0.2};
      st.running_var = {1.5, 0.7};
      return weighted_sum(batchnorm2d(v[0], v[1], v[2], st, mode), 31);
    };
    EXPECT_LE(gradient_check(f, {x, random_tensor({2}, 32), random_tensor({2}, 33)}), 1e-6);
  }
}
