#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lama/data.hpp"
#include "lama/losses.hpp"
#include "lama/maskgen.hpp"

namespace lama {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("adam: gradient count does not match parameters");
    for (std::size_t k = 0; k < grads.size(); ++k) {
      if (grads[k].numel() != params_[k].tensor.numel())
        throw ShapeError("adam: gradient shape mismatch for " + params_[k].name);
      for (double g : grads[k].values())
        if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient for " + params_[k].name);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_)), bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < grads.size(); ++k) {
      auto p = params_[k].tensor.mutable_values();
      auto g = grads[k].values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        p[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
  }

  const ParamList& params() const { return params_; }
  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Everything that determines a training run. Serialized as flat key=value text.
struct TrainConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  HrfExtractorConfig hrf;
  LossWeights weights;
  double lr_g = 1e-3;
  double lr_d = 1e-4;
  MaskPolicy mask_policy = MaskPolicy::large;
  TextureSpec texture;
  std::size_t batch_size = 4;
  std::size_t iterations = 2000;
  std::size_t image_size = 32;
  std::uint64_t seed = 1;  // data and mask stream
  std::size_t checkpoint_every = 0;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (image_size % (std::size_t{1} << generator.n_down))
      throw std::invalid_argument("image_size must be divisible by 2^n_down");
    generator.validate();
    texture.validate();
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw std::invalid_argument("config: bad value '" + v + "' for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

inline std::string format_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<std::size_t>(key, item));
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

struct ConfigField {
  const char* key;
  const char* help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define LAMA_NUM_FIELD(name, help, member, T)                                                      \
  ConfigField {                                                                                     \
    name, help, [](TrainConfig& c, const std::string& v) { c.member = parse_number<T>(name, v); }, \
        [](const TrainConfig& c) {                                                                  \
          if constexpr (std::is_floating_point_v<T>) return format_double(c.member);              \
          else return std::to_string(c.member);                                                   \
        }                                                                                           \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      LAMA_NUM_FIELD("base_width", "generator width after the stem", generator.base_width, std::size_t),
      LAMA_NUM_FIELD("n_down", "generator stride-2 downsampling blocks", generator.n_down, std::size_t),
      LAMA_NUM_FIELD("n_up", "generator upsampling blocks", generator.n_up, std::size_t),
      LAMA_NUM_FIELD("n_residual", "generator residual blocks", generator.n_residual, std::size_t),
      ConfigField{"ffc", "FFC residual blocks (else plain conv)",
                  [](TrainConfig& c, const std::string& v) { c.generator.ffc = parse_bool("ffc", v); },
                  [](const TrainConfig& c) { return std::string(c.generator.ffc ? "true" : "false"); }},
      LAMA_NUM_FIELD("ffc_ratio", "global channel fraction in FFC blocks", generator.ffc_ratio, double),
      LAMA_NUM_FIELD("trunk_width", "residual trunk width (0 = base_width * 8)", generator.trunk_width, std::size_t),
      LAMA_NUM_FIELD("gen_seed", "generator init seed", generator.seed, std::uint64_t),
      LAMA_NUM_FIELD("disc_layers", "discriminator stride-2 layers", discriminator.n_layers, std::size_t),
      LAMA_NUM_FIELD("disc_width", "discriminator first-layer width", discriminator.base_width, std::size_t),
      LAMA_NUM_FIELD("disc_seed", "discriminator init seed", discriminator.seed, std::uint64_t),
      ConfigField{"hrf_widths", "perceptual extractor widths, comma separated",
                  [](TrainConfig& c, const std::string& v) { c.hrf.widths = split_sizes("hrf_widths", v); },
                  [](const TrainConfig& c) { return join_sizes(c.hrf.widths); }},
      ConfigField{"hrf_dilations", "perceptual extractor dilations, comma separated",
                  [](TrainConfig& c, const std::string& v) { c.hrf.dilations = split_sizes("hrf_dilations", v); },
                  [](const TrainConfig& c) { return join_sizes(c.hrf.dilations); }},
      LAMA_NUM_FIELD("hrf_seed", "perceptual extractor seed", hrf.seed, std::uint64_t),
      LAMA_NUM_FIELD("kappa", "adversarial weight", weights.kappa, double),
      LAMA_NUM_FIELD("alpha", "HRF perceptual weight", weights.alpha, double),
      LAMA_NUM_FIELD("beta", "discriminator feature-matching weight", weights.beta, double),
      LAMA_NUM_FIELD("gamma", "R1 weight", weights.gamma, double),
      LAMA_NUM_FIELD("lr_g", "generator learning rate", lr_g, double),
      LAMA_NUM_FIELD("lr_d", "discriminator learning rate", lr_d, double),
      ConfigField{"mask_policy", "large | narrow | wide | box",
                  [](TrainConfig& c, const std::string& v) { c.mask_policy = parse_mask_policy(v); },
                  [](const TrainConfig& c) { return std::string(mask_policy_name(c.mask_policy)); }},
      ConfigField{"texture", "stripes | checkerboard | brick | mixed",
                  [](TrainConfig& c, const std::string& v) { c.texture.pattern = parse_pattern(v); },
                  [](const TrainConfig& c) { return std::string(pattern_name(c.texture.pattern)); }},
      LAMA_NUM_FIELD("period_min", "shortest texture period (px)", texture.period_min, int),
      LAMA_NUM_FIELD("period_max", "longest texture period (px)", texture.period_max, int),
      LAMA_NUM_FIELD("noise", "texture noise amplitude", texture.noise, double),
      LAMA_NUM_FIELD("batch_size", "images per iteration", batch_size, std::size_t),
      LAMA_NUM_FIELD("iterations", "training iterations", iterations, std::size_t),
      LAMA_NUM_FIELD("image_size", "training crop size (px)", image_size, std::size_t),
      LAMA_NUM_FIELD("seed", "data and mask seed", seed, std::uint64_t),
      LAMA_NUM_FIELD("checkpoint_every", "iterations between checkpoints (0 = end only)", checkpoint_every,
                     std::size_t),
  };
  return fields;
}

#undef LAMA_NUM_FIELD

}  // namespace detail

inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) return f.set(cfg, value);
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

/// Parses key=value lines; blank lines and '#' comments are skipped.
inline TrainConfig config_from_text(const std::string& text, TrainConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), cfg);
}

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Batch {
  Tensor images;  // B x 3 x H x W
  Tensor masks;   // B x 1 x H x W, 1 = known
};

/// Batch for a given iteration: a function of (seed, iteration) only, so a
/// resumed run sees the same data as an uninterrupted one.
inline Batch make_batch(const TrainConfig& cfg, std::uint64_t iteration) {
  std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), std::uint32_t(iteration),
                    std::uint32_t(iteration >> 32)};
  std::mt19937_64 rng(seq);
  const std::size_t S = cfg.image_size;
  std::vector<TextureImage> imgs;
  std::vector<Mask> masks;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    imgs.push_back(sample_texture(rng, cfg.texture, S, S));
    masks.push_back(sample_training_mask(rng, S, S, cfg.mask_policy));
  }
  return {images_to_tensor(imgs, S, S), masks_to_tensor(masks)};
}

/// m * x + (1 - m) * xhat, exact on known pixels.
inline Tensor composite(const Tensor& x, const Tensor& xhat, const Tensor& m) {
  if (x.shape() != xhat.shape() || m.dim(0) != x.dim(0) || m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3))
    throw ShapeError("composite: shape mismatch");
  std::vector<double> out(x.numel());
  const std::size_t C = x.dim(1), HW = x.dim(2) * x.dim(3);
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < HW; ++k) {
        const std::size_t i = (b * C + c) * HW + k;
        out[i] = m[b * HW + k] > 0.5 ? x[i] : xhat[i];
      }
  return Tensor(x.shape(), std::move(out));
}

inline const char* kLogHeader = "step,adv_g,adv_d,hrfpl,discpl,r1,total_g,total_d";

inline std::string log_row(std::uint64_t step, const LossReport& r) {
  std::string s = std::to_string(step);
  for (double v : {r.adv_g, r.adv_d, r.hrfpl, r.discpl, r.r1, r.total_g, r.total_d}) s += "," + detail::format_double(v);
  return s;
}

/// Owns both networks, the frozen extractor and both optimizers.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        gen_(cfg_.generator),
        disc_(cfg_.discriminator),
        hrf_(cfg_.hrf),
        adam_g_(gen_.parameters(), AdamConfig{.lr = cfg_.lr_g}),
        adam_d_(disc_.parameters(), AdamConfig{.lr = cfg_.lr_d}) {}

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return gen_; }
  Discriminator& discriminator() { return disc_; }
  const HrfExtractor& extractor() const { return hrf_; }
  const Adam& generator_optimizer() const { return adam_g_; }
  const Adam& discriminator_optimizer() const { return adam_d_; }
  std::uint64_t iteration() const { return iteration_; }

  LossReport step() { return step(make_batch(cfg_, iteration_)); }

  /// One discriminator update then one generator update on the same batch.
  LossReport step(const Batch& batch) {
    const Tensor& x = batch.images;
    const Tensor& m = batch.masks;
    const LossWeights& w = cfg_.weights;
    Tensor xhat = gen_.forward(stack_input(x, m), Mode::train);

    // Discriminator: kappa * L_D + gamma * R1 on a detached generator output.
    const auto d_params = tensors(adam_d_.params());
    Tensor real_logits = disc_.forward(x).logits;
    Tensor fake_logits = disc_.forward(xhat.detach()).logits;
    Tensor labels = fake_cell_labels(m, disc_.geometry(), fake_logits.dim(2), fake_logits.dim(3));
    Tensor l_d = discriminator_loss(real_logits, fake_logits, labels);
    Tensor d_obj = scale(l_d, w.kappa);
    double r1_value = 0.0;
    if (w.gamma != 0.0) {
      Tensor r1 = r1_penalty(disc_, x);
      r1_value = r1.item();
      d_obj = add(d_obj, scale(r1, w.gamma));
    }
    check_finite_loss(d_obj, "discriminator");
    adam_d_.step(grad(d_obj, d_params));

    // Generator: kappa * L_G + alpha * HRFPL + beta * DiscPL through a frozen D.
    const auto g_params = tensors(adam_g_.params());
    Tensor l_g = generator_adversarial_loss(disc_.forward(xhat, true).logits);
    Tensor hrfpl = hrf_perceptual_loss(x, xhat, hrf_);
    Tensor discpl = feature_matching_loss(x, xhat, disc_);
    Tensor g_obj = add(add(scale(l_g, w.kappa), scale(hrfpl, w.alpha)), scale(discpl, w.beta));
    check_finite_loss(g_obj, "generator");
    adam_g_.step(grad(g_obj, g_params));

    ++iteration_;
    return make_report(l_g.item(), l_d.item(), hrfpl.item(), discpl.item(), r1_value, w);
  }

  /// Eval-mode inpainting; returns the composite with known pixels copied.
  Tensor inpaint(const Tensor& x, const Tensor& m) {
    NoGradGuard ng;
    return composite(x, gen_.forward(stack_input(x, m), Mode::eval), m);
  }

  void save(const std::string& path);
  void load_state(const std::string& path);
  static std::unique_ptr<Trainer> from_checkpoint(const std::string& path);

 private:
  static std::vector<Tensor> tensors(const ParamList& p) {
    std::vector<Tensor> out;
    for (const auto& e : p) out.push_back(e.tensor);
    return out;
  }

  static void check_finite_loss(const Tensor& t, const char* who) {
    if (!std::isfinite(t.item())) throw NumericError(std::string(who) + " loss is not finite");
  }

  TrainConfig cfg_;
  Generator gen_;
  Discriminator disc_;
  HrfExtractor hrf_;
  Adam adam_g_, adam_d_;
  std::uint64_t iteration_ = 0;
};

// ------------------------------------------------------------- checkpoints

inline constexpr char kCheckpointMagic[8] = {'L', 'A', 'M', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& data) : d_(data) {}
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(d_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(d_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  const std::string& d_;
  std::size_t pos_ = 0;
};

struct Entry {
  Shape shape;
  std::vector<double> values;
};

struct CheckpointImage {
  std::string config_text;
  std::uint64_t iteration = 0;
  std::map<std::string, Entry> entries;
};

// Named arrays that make up a trainer's state, in a fixed order.
template <class Visit>
void visit_state(Generator& gen, Discriminator& disc, Adam& adam_g, Adam& adam_d, Visit&& visit) {
  auto params = [&](const char* prefix, const ParamList& ps) {
    for (const auto& p : ps) {
      Tensor t = p.tensor;
      visit(std::string(prefix) + p.name, t.shape(), t.mutable_values());
    }
  };
  params("G/", gen.parameters());
  params("D/", disc.parameters());
  for (auto& s : gen.buffers()) {
    visit("G.bn/" + s.name + "/mean", Shape{s.stats->running_mean.size()}, std::span<double>(s.stats->running_mean));
    visit("G.bn/" + s.name + "/var", Shape{s.stats->running_var.size()}, std::span<double>(s.stats->running_var));
  }
  auto moments = [&](const char* prefix, Adam& a) {
    for (std::size_t k = 0; k < a.params().size(); ++k) {
      const auto& p = a.params()[k];
      visit(std::string(prefix) + "m/" + p.name, p.tensor.shape(), std::span<double>(a.first_moments()[k]));
      visit(std::string(prefix) + "v/" + p.name, p.tensor.shape(), std::span<double>(a.second_moments()[k]));
    }
  };
  moments("adamG/", adam_g);
  moments("adamD/", adam_d);
}

inline CheckpointImage parse_checkpoint(const std::string& data) {
  Reader r(data);
  if (data.size() < 8 || data.compare(0, 8, std::string(kCheckpointMagic, 8)) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  r.bytes(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  CheckpointImage img;
  img.config_text = r.str();
  img.iteration = r.u64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t e = 0; e < n; ++e) {
    std::string name = r.str();
    Entry entry;
    const std::uint32_t nd = r.u32();
    if (nd > 8) throw CheckpointError("checkpoint entry " + name + " has rank " + std::to_string(nd));
    for (std::uint32_t d = 0; d < nd; ++d) entry.shape.push_back(r.u64());
    const std::size_t count = shape_numel(entry.shape);
    r.need(count * 8);
    entry.values.resize(count);
    for (auto& v : entry.values) v = std::bit_cast<double>(r.u64());
    if (!img.entries.emplace(std::move(name), std::move(entry)).second) throw CheckpointError("duplicate checkpoint entry");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return img;
}

}  // namespace detail

inline void Trainer::save(const std::string& path) {
  std::string out(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_str(out, config_to_text(cfg_));
  detail::put_u64(out, iteration_);
  std::string body;
  std::uint32_t count = 0;
  detail::visit_state(gen_, disc_, adam_g_, adam_d_, [&](const std::string& name, const Shape& shape, std::span<double> v) {
    detail::put_str(body, name);
    detail::put_u32(body, std::uint32_t(shape.size()));
    for (auto d : shape) detail::put_u64(body, d);
    for (double x : v) detail::put_u64(body, std::bit_cast<std::uint64_t>(x));
    ++count;
  });
  for (const auto& [name, steps] : {std::pair{"adamG.steps", adam_g_.steps()}, std::pair{"adamD.steps", adam_d_.steps()}}) {
    detail::put_str(body, name);
    detail::put_u32(body, 1);
    detail::put_u64(body, 1);
    detail::put_u64(body, std::bit_cast<std::uint64_t>(double(steps)));
    ++count;
  }
  detail::put_u32(out, count);
  out += body;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Restores weights, batchnorm statistics, optimizer state and the iteration
/// counter. The file is fully validated before anything is modified.
inline void Trainer::load_state(const std::string& path) {
  const auto img = detail::parse_checkpoint(read_file_bytes(path));
  if (img.config_text != config_to_text(cfg_)) throw CheckpointError("checkpoint was written for a different config");
  std::size_t expected = 0;
  detail::visit_state(gen_, disc_, adam_g_, adam_d_, [&](const std::string& name, const Shape& shape, std::span<double> v) {
    auto it = img.entries.find(name);
    if (it == img.entries.end()) throw CheckpointError("checkpoint is missing " + name);
    if (it->second.shape != shape || it->second.values.size() != v.size())
      throw CheckpointError("checkpoint entry " + name + " has shape " + shape_str(it->second.shape) + ", expected " +
                            shape_str(shape));
    ++expected;
  });
  for (const char* name : {"adamG.steps", "adamD.steps"})
    if (!img.entries.count(name)) throw CheckpointError(std::string("checkpoint is missing ") + name);
  if (img.entries.size() != expected + 2) throw CheckpointError("checkpoint has unexpected entries");

  detail::visit_state(gen_, disc_, adam_g_, adam_d_, [&](const std::string& name, const Shape&, std::span<double> v) {
    const auto& src = img.entries.at(name).values;
    std::copy(src.begin(), src.end(), v.begin());
  });
  adam_g_.set_steps(std::uint64_t(img.entries.at("adamG.steps").values[0]));
  adam_d_.set_steps(std::uint64_t(img.entries.at("adamD.steps").values[0]));
  iteration_ = img.iteration;
}

inline std::unique_ptr<Trainer> Trainer::from_checkpoint(const std::string& path) {
  const auto img = detail::parse_checkpoint(read_file_bytes(path));
  auto t = std::make_unique<Trainer>(config_from_text(img.config_text));
  t->load_state(path);
  return t;
}

}  // namespace lama
