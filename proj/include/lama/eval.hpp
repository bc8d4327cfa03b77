#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lama/io.hpp"
#include "lama/training.hpp"

namespace lama {

struct EvalReport {
  double l1 = 0, l2 = 0, psnr = 0;
  std::size_t hole_pixels = 0;
};

inline constexpr double kPsnrCap = 99.0;

/// Metrics over missing pixels ({m = 0}) only, averaged over pixels and channels.
inline EvalReport inpaint_metrics(const Tensor& x, const Tensor& xhat, const Tensor& m) {
  if (x.ndim() != 4 || x.shape() != xhat.shape() || m.ndim() != 4 || m.dim(1) != 1 || m.dim(0) != x.dim(0) ||
      m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3))
    throw ShapeError("inpaint_metrics: shapes " + shape_str(x.shape()) + ", " + shape_str(xhat.shape()) + ", " +
                     shape_str(m.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  double s1 = 0, s2 = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < HW; ++k) {
      if (m[b * HW + k] > 0.5) continue;
      ++n;
      for (std::size_t c = 0; c < C; ++c) {
        const double d = x[(b * C + c) * HW + k] - xhat[(b * C + c) * HW + k];
        s1 += std::abs(d);
        s2 += d * d;
      }
    }
  if (n == 0) throw std::invalid_argument("inpaint_metrics: mask has no missing pixels");
  EvalReport r;
  r.hole_pixels = n;
  r.l1 = s1 / double(n * C);
  r.l2 = s2 / double(n * C);
  r.psnr = r.l2 > 0 ? std::min(kPsnrCap, -10.0 * std::log10(r.l2)) : kPsnrCap;
  return r;
}

// ------------------------------------------------------------------- ERF probe

struct ErfMap {
  std::size_t height = 0, width = 0;
  std::vector<double> sensitivity;  // H x W
  std::size_t support = 0;          // pixels above the threshold

  double fraction() const { return double(support) / double(height * width); }
};

inline constexpr double kErfThreshold = 1e-12;

/// |d output(row, col) / d input| summed over input channels, accumulated over
/// each output channel separately so channels cannot cancel.
inline ErfMap erf_probe(const std::function<Tensor(const Tensor&)>& model, const Tensor& input, std::size_t row,
                        std::size_t col) {
  if (input.ndim() != 4 || input.dim(0) != 1) throw ShapeError("erf_probe: need a 1 x C x H x W input");
  Tensor x = input.detach();
  x.set_requires_grad(true);
  Tensor y = model(x);
  if (y.ndim() != 4 || row >= y.dim(2) || col >= y.dim(3)) throw ShapeError("erf_probe: position outside the output");
  const std::size_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  ErfMap map{H, W, std::vector<double>(H * W, 0.0), 0};
  for (std::size_t c = 0; c < y.dim(1); ++c) {
    Tensor pick = Tensor::zeros(y.shape());
    pick.mutable_values()[(c * y.dim(2) + row) * y.dim(3) + col] = 1.0;
    Tensor g = grad(sum(mul(y, pick)), {x})[0];
    for (std::size_t ci = 0; ci < C; ++ci)
      for (std::size_t k = 0; k < H * W; ++k) map.sensitivity[k] += std::abs(g[ci * H * W + k]);
  }
  for (double v : map.sensitivity) map.support += v > kErfThreshold;
  return map;
}

/// Fills batchnorm running statistics from `x` by repeated train-mode passes.
/// Untrained networks with the default statistics (mean 0, var 1) saturate the
/// sigmoid head, which flattens every input gradient below the threshold.
inline void calibrate_batchnorm(Generator& g, const Tensor& x, int passes = 20) {
  NoGradGuard ng;
  for (int k = 0; k < passes; ++k) g.forward(x, Mode::train);
}

/// Sensitivity normalized to its maximum, as a gray RGB image.
inline Image8 erf_image(const ErfMap& m) {
  double mx = 0;
  for (double v : m.sensitivity) mx = std::max(mx, v);
  Image8 im{m.height, m.width, std::vector<std::uint8_t>(m.height * m.width * 3)};
  for (std::size_t k = 0; k < m.sensitivity.size(); ++k) {
    const auto q = quantize(mx > 0 ? std::sqrt(m.sensitivity[k] / mx) : 0.0);
    im.rgb[3 * k] = im.rgb[3 * k + 1] = im.rgb[3 * k + 2] = q;
  }
  return im;
}

// ----------------------------------------------------------------- experiments

struct ExperimentConfig {
  TrainConfig train;  // ffc on; the regular model is derived from it
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> eval_sizes{32, 64, 96};
  std::size_t eval_count = 32;  // held-out images per size
  std::string out_dir;          // empty: no files written
};

/// Trunk width for the regular model that brings its parameter count closest
/// to `target`.
inline std::size_t matched_trunk_width(GeneratorConfig regular, std::size_t target) {
  std::size_t best = 1, best_gap = std::size_t(-1);
  const std::size_t limit = 4 * regular.trunk() + 64;
  for (std::size_t w = 1; w <= limit; ++w) {
    regular.trunk_width = w;
    const std::size_t n = generator_parameter_count(regular);
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) best = w, best_gap = gap;
  }
  return best;
}

inline TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  c.generator.seed = 1000 + seed;
  c.discriminator.seed = 2000 + seed;
  c.hrf.seed = 3000 + seed;
  return c;
}

/// The two arms of the comparison for one seed: identical data, masks,
/// discriminator and extractor; only the residual blocks differ.
inline std::pair<TrainConfig, TrainConfig> experiment_arms(const TrainConfig& base, std::uint64_t seed) {
  TrainConfig ffc = seeded(base, seed);
  ffc.generator.ffc = true;
  TrainConfig reg = ffc;
  reg.generator.ffc = false;
  reg.generator.trunk_width = matched_trunk_width(reg.generator, generator_parameter_count(ffc.generator));
  return {ffc, reg};
}

struct HeldOut {
  std::size_t size = 0;
  Batch batch;
};

/// Held-out textures and gated wide masks, disjoint from the training stream
/// by construction of the seed.
inline HeldOut held_out_set(const TrainConfig& cfg, std::uint64_t seed, std::size_t size, std::size_t count) {
  std::seed_seq seq{std::uint32_t(0x5eed), std::uint32_t(seed), std::uint32_t(size)};
  std::mt19937_64 rng(seq);
  std::vector<TextureImage> imgs;
  std::vector<Mask> masks;
  for (std::size_t k = 0; k < count; ++k) {
    imgs.push_back(sample_texture(rng, cfg.texture, size, size));
    masks.push_back(sample_test_mask(rng, size, size));
  }
  return {size, {images_to_tensor(imgs, size, size), masks_to_tensor(masks)}};
}

struct ModelResult {
  std::string model;  // "ffc" or "regular"
  std::size_t parameters = 0;
  std::map<std::size_t, EvalReport> by_size;
  double final_hrfpl = 0;
  double seconds = 0;

  double degradation(std::size_t hi, std::size_t lo) const { return by_size.at(hi).l1 / by_size.at(lo).l1; }
};

struct SeedResult {
  std::uint64_t seed = 0;
  ModelResult ffc, regular;
  std::map<std::size_t, EvalReport> copy_input;  // x_hat = x * m
};

struct ExperimentReport {
  std::vector<SeedResult> seeds;
  std::size_t train_size = 0, big_size = 0;

  int ffc_wins() const {
    int n = 0;
    for (const auto& s : seeds) n += s.ffc.by_size.at(train_size).l1 < s.regular.by_size.at(train_size).l1;
    return n;
  }
  int ffc_transfer_wins() const {
    int n = 0;
    for (const auto& s : seeds)
      n += s.ffc.degradation(big_size, train_size) < s.regular.degradation(big_size, train_size);
    return n;
  }
  bool beats_copy_baseline() const {
    for (const auto& s : seeds)
      if (!(s.ffc.by_size.at(train_size).l1 < s.copy_input.at(train_size).l1) ||
          !(s.regular.by_size.at(train_size).l1 < s.copy_input.at(train_size).l1))
        return false;
    return true;
  }
};

using ProgressFn = std::function<void(const std::string&)>;

inline Tensor masked_input(const Tensor& x, const Tensor& m) {
  NoGradGuard ng;
  return composite(x, Tensor::zeros(x.shape()), m);
}

/// Side-by-side strip: masked input | ffc | regular | ground truth.
inline Image8 comparison_strip(const std::vector<Tensor>& panels, std::size_t b) {
  const std::size_t H = panels[0].dim(2), W = panels[0].dim(3), gap = 2;
  Image8 out{H, panels.size() * (W + gap) - gap, {}};
  out.rgb.assign(out.height * out.width * 3, 255);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    Image8 im = tensor_to_image(panels[p], b);
    for (std::size_t i = 0; i < H; ++i)
      std::copy_n(&im.rgb[i * W * 3], W * 3, &out.rgb[(i * out.width + p * (W + gap)) * 3]);
  }
  return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << s;
}

/// Trains both arms for every seed and evaluates them on held-out wide masks
/// at every evaluation size. Used for both the wide-mask comparison (at the
/// training size) and resolution transfer (degradation across sizes).
inline ExperimentReport run_experiment(const ExperimentConfig& ec, const ProgressFn& progress = {}) {
  for (std::size_t s : ec.eval_sizes)
    if (s % (std::size_t{1} << ec.train.generator.n_down))
      throw std::invalid_argument("evaluation size " + std::to_string(s) + " not divisible by the generator stride");
  ExperimentReport rep;
  rep.train_size = ec.train.image_size;
  rep.big_size = *std::max_element(ec.eval_sizes.begin(), ec.eval_sizes.end());
  if (std::find(ec.eval_sizes.begin(), ec.eval_sizes.end(), rep.train_size) == ec.eval_sizes.end())
    throw std::invalid_argument("evaluation sizes must include the training size");
  const bool write = !ec.out_dir.empty();
  if (write) std::filesystem::create_directories(ec.out_dir);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  for (std::uint64_t seed : ec.seeds) {
    SeedResult sr;
    sr.seed = seed;
    auto [cfg_ffc, cfg_reg] = experiment_arms(ec.train, seed);
    std::map<std::size_t, HeldOut> held;
    for (std::size_t s : ec.eval_sizes) {
      held.emplace(s, held_out_set(cfg_ffc, seed, s, ec.eval_count));
      const auto& b = held.at(s).batch;
      sr.copy_input[s] = inpaint_metrics(b.images, masked_input(b.images, b.masks), b.masks);
    }
    std::map<std::size_t, std::vector<Tensor>> panels;
    for (std::size_t s : ec.eval_sizes) panels[s].push_back(masked_input(held.at(s).batch.images, held.at(s).batch.masks));

    for (auto* arm : {&cfg_ffc, &cfg_reg}) {
      const std::string name = arm->generator.ffc ? "ffc" : "regular";
      ModelResult& mr = arm->generator.ffc ? sr.ffc : sr.regular;
      mr.model = name;
      const auto t0 = std::chrono::steady_clock::now();
      Trainer t(*arm);
      mr.parameters = t.generator().parameter_count();
      std::string log = std::string(kLogHeader) + "\n";
      for (std::size_t it = 0; it < arm->iterations; ++it) {
        const auto r = t.step();
        log += log_row(it, r) + "\n";
        mr.final_hrfpl = r.hrfpl;
      }
      for (std::size_t s : ec.eval_sizes) {
        const auto& b = held.at(s).batch;
        Tensor out = t.inpaint(b.images, b.masks);
        mr.by_size[s] = inpaint_metrics(b.images, out, b.masks);
        panels[s].push_back(out);
      }
      mr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (write) {
        const auto stem = std::filesystem::path(ec.out_dir) / ("seed" + std::to_string(seed) + "_" + name);
        write_text(stem.string() + "_log.csv", log);
        t.save(stem.string() + ".ckpt");
      }
      std::ostringstream msg;
      msg << "seed " << seed << " " << name << " params " << mr.parameters;
      for (std::size_t s : ec.eval_sizes) msg << " L1@" << s << " " << mr.by_size[s].l1;
      say(msg.str());
    }
    if (write)
      for (std::size_t s : ec.eval_sizes) {
        panels[s].push_back(held.at(s).batch.images);
        write_png((std::filesystem::path(ec.out_dir) /
                   ("seed" + std::to_string(seed) + "_" + std::to_string(s) + "px_input_ffc_regular_truth.png"))
                      .string(),
                  comparison_strip(panels[s], 0));
      }
    rep.seeds.push_back(std::move(sr));
  }

  if (write) {
    std::ostringstream per;
    per.precision(10);
    per << "seed,model,parameters,size,l1,l2,psnr,hole_pixels\n";
    for (const auto& s : rep.seeds) {
      for (const ModelResult* m : {&s.ffc, &s.regular})
        for (const auto& [size, r] : m->by_size)
          per << s.seed << "," << m->model << "," << m->parameters << "," << size << "," << r.l1 << "," << r.l2 << ","
              << r.psnr << "," << r.hole_pixels << "\n";
      for (const auto& [size, r] : s.copy_input)
        per << s.seed << ",copy_input,0," << size << "," << r.l1 << "," << r.l2 << "," << r.psnr << "," << r.hole_pixels
            << "\n";
    }
    write_text(std::filesystem::path(ec.out_dir) / "results.csv", per.str());

    std::ostringstream sum;
    sum.precision(10);
    sum << "seed,l1_ffc,l1_regular,ffc_wins,degradation_ffc,degradation_regular,ffc_transfers_better\n";
    for (const auto& s : rep.seeds) {
      const double a = s.ffc.by_size.at(rep.train_size).l1, b = s.regular.by_size.at(rep.train_size).l1;
      const double da = s.ffc.degradation(rep.big_size, rep.train_size),
                   db = s.regular.degradation(rep.big_size, rep.train_size);
      sum << s.seed << "," << a << "," << b << "," << (a < b) << "," << da << "," << db << "," << (da < db) << "\n";
    }
    write_text(std::filesystem::path(ec.out_dir) / "summary.csv", sum.str());
  }
  return rep;
}

}  // namespace lama
