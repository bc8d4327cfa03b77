#pragma once

#include <cmath>
#include <concepts>
#include <vector>

#include "lama/networks.hpp"

namespace lama {

struct LossWeights {
  double kappa = 10.0;   // adversarial
  double alpha = 30.0;   // HRF perceptual
  double beta = 100.0;   // discriminator feature matching
  double gamma = 0.001;  // R1
};

struct LossReport {
  double adv_g = 0, adv_d = 0, hrfpl = 0, discpl = 0, r1 = 0;
  double total_g = 0, total_d = 0;

  double total() const { return total_g + total_d; }
};

inline constexpr double kProbFloor = 1e-7;
inline constexpr double kProbCeil = 1.0 - 1e-7;

inline double weighted_total(double adv, double hrfpl, double discpl, double r1, const LossWeights& w) {
  return w.kappa * adv + w.alpha * hrfpl + w.beta * discpl + w.gamma * r1;
}

inline LossReport make_report(double adv_g, double adv_d, double hrfpl, double discpl, double r1,
                              const LossWeights& w) {
  LossReport r{adv_g, adv_d, hrfpl, discpl, r1};
  for (double v : {adv_g, adv_d, hrfpl, discpl, r1})
    if (!std::isfinite(v)) throw NumericError("loss component is not finite");
  r.total_g = weighted_total(adv_g, hrfpl, discpl, 0.0, w);
  r.total_d = w.kappa * adv_d + w.gamma * r1;
  return r;
}

/// Mean over layers of the per-layer mean squared difference.
inline Tensor two_stage_mean(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("two_stage_mean: layer lists differ");
  Tensor acc;
  for (std::size_t l = 0; l < a.size(); ++l) {
    Tensor t = mean(square(sub(a[l], b[l])));
    acc = acc.defined() ? add(acc, t) : t;
  }
  return scale(acc, 1.0 / static_cast<double>(a.size()));
}

inline Tensor hrf_perceptual_loss(const Tensor& x, const Tensor& xhat, const HrfExtractor& extractor) {
  if (x.shape() != xhat.shape())
    throw ShapeError("hrf_perceptual_loss: " + shape_str(x.shape()) + " vs " + shape_str(xhat.shape()));
  return two_stage_mean(extractor.features(x), extractor.features(xhat));
}

/// 1 where a logit cell's (clipped) input footprint contains a missing pixel.
/// m: B x 1 x H x W with 1 = known. Output B x 1 x h x w.
inline Tensor fake_cell_labels(const Tensor& m, const PatchGeometry& g, std::size_t h, std::size_t w) {
  if (m.ndim() != 4 || m.dim(1) != 1) throw ShapeError("fake_cell_labels: mask must be B x 1 x H x W");
  const std::size_t B = m.dim(0), H = m.dim(2), W = m.dim(3);
  // Summed-area table of the missing indicator, (H+1) x (W+1) per image.
  std::vector<double> sat((H + 1) * (W + 1));
  std::vector<double> out(B * h * w, 0.0);
  auto clip = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, long(n))); };
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(sat.begin(), sat.end(), 0.0);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double miss = m.at(b, 0, i, j) < 0.5 ? 1.0 : 0.0;
        sat[(i + 1) * (W + 1) + j + 1] = miss + sat[i * (W + 1) + j + 1] + sat[(i + 1) * (W + 1) + j] - sat[i * (W + 1) + j];
      }
    for (std::size_t ci = 0; ci < h; ++ci) {
      const std::size_t r0 = clip(g.first(ci), H), r1 = clip(g.last(ci) + 1, H);
      for (std::size_t cj = 0; cj < w; ++cj) {
        const std::size_t c0 = clip(g.first(cj), W), c1 = clip(g.last(cj) + 1, W);
        const double n = sat[r1 * (W + 1) + c1] - sat[r0 * (W + 1) + c1] - sat[r1 * (W + 1) + c0] + sat[r0 * (W + 1) + c0];
        out[(b * h + ci) * w + cj] = n > 0.5 ? 1.0 : 0.0;
      }
    }
  }
  return Tensor({B, 1, h, w}, std::move(out));
}

struct AdversarialLosses {
  Tensor d_loss;
  Tensor g_loss;
  std::size_t fake_cells = 0;  // zero flags a degenerate (hole-free) batch
};

/// Discriminator objective from logits. Every cell of the generated image
/// carries one label, so both generated-image terms are normalized by the
/// total cell count.
inline Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits, const Tensor& fake_labels) {
  const double n = static_cast<double>(fake_logits.numel());
  std::vector<double> wk(fake_labels.numel()), wf(fake_labels.numel());
  for (std::size_t i = 0; i < wk.size(); ++i) {
    wf[i] = fake_labels[i] / n;
    wk[i] = (1.0 - fake_labels[i]) / n;
  }
  Tensor p_real = sigmoid(real_logits), p_fake = sigmoid(fake_logits);
  Tensor real_term = mean(log_clamped(p_real, kProbFloor, kProbCeil));
  Tensor known_term = sum(mul(log_clamped(p_fake, kProbFloor, kProbCeil), Tensor(fake_labels.shape(), wk)));
  Tensor fake_term =
      sum(mul(log_clamped(add_scalar(neg(p_fake), 1.0), kProbFloor, kProbCeil), Tensor(fake_labels.shape(), wf)));
  return neg(add(add(real_term, known_term), fake_term));
}

inline Tensor generator_adversarial_loss(const Tensor& fake_logits) {
  return neg(mean(log_clamped(sigmoid(fake_logits), kProbFloor, kProbCeil)));
}

/// L_D with the generator output held constant and L_G with the
/// discriminator held constant, so each only trains its own network.
inline AdversarialLosses adversarial_losses(const Tensor& x, const Tensor& xhat, const Tensor& m,
                                            const Discriminator& disc) {
  AdversarialLosses out;
  Tensor real_logits = disc.forward(x.detach()).logits;
  Tensor fake_for_d = disc.forward(xhat.detach()).logits;
  Tensor labels = fake_cell_labels(m, disc.geometry(), fake_for_d.dim(2), fake_for_d.dim(3));
  for (double v : labels.values()) out.fake_cells += v > 0.5;
  out.d_loss = discriminator_loss(real_logits, fake_for_d, labels);
  out.g_loss = generator_adversarial_loss(disc.forward(xhat, true).logits);
  return out;
}

/// sg_theta(L_D) + sg_xi(L_G) as one scalar.
inline Tensor adversarial_objective(const Tensor& x, const Tensor& xhat, const Tensor& m, const Discriminator& disc) {
  auto l = adversarial_losses(x, xhat, m, disc);
  return add(l.d_loss, l.g_loss);
}

/// Batch mean of the squared input-gradient norm of the summed logits on
/// real images. Differentiable in the discriminator weights.
template <class LogitFn>
  requires std::invocable<LogitFn, const Tensor&>
Tensor r1_penalty(LogitFn&& logits_of, const Tensor& x) {
  Tensor xr = x.detach();
  xr.set_requires_grad(true);
  Tensor g = grad(sum(logits_of(xr)), {xr}, true)[0];
  return scale(sum(square(g)), 1.0 / static_cast<double>(x.dim(0)));
}

inline Tensor r1_penalty(const Discriminator& disc, const Tensor& x) {
  return r1_penalty([&](const Tensor& xr) { return disc.forward(xr).logits; }, x);
}

/// Two-stage mean over discriminator activations; D weights are constants.
inline Tensor feature_matching_loss(const Tensor& x, const Tensor& xhat, const Discriminator& disc) {
  return two_stage_mean(disc.forward(x.detach(), true).features, disc.forward(xhat, true).features);
}

}  // namespace lama
