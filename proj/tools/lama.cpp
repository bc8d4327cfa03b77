// Command-line front end: train, inpaint, maskgen, erf, eval, experiment.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>

#include "lama/eval.hpp"

namespace fs = std::filesystem;
using namespace lama;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

// One string option per TrainConfig key; applied after the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    for (const auto& f : detail::config_fields()) {
      std::string key = f.key, dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string names = "--" + key + (dashed != key ? ",--" + dashed : "");
      app->add_option_function<std::string>(names, [this, key](const std::string& v) { values[key] = v; }, f.help);
    }
  }

  TrainConfig resolve(TrainConfig cfg = {}) const {
    if (!file.empty()) cfg = load_config_file(file, cfg);
    for (const auto& [k, v] : values) set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

std::string default_run_dir() {
  const char* env = std::getenv("LAMA_CHECKPOINT_DIR");
  return env && *env ? env : "run";
}

int cmd_train(const ConfigFlags& flags, std::string out_dir, const std::string& resume) {
  std::unique_ptr<Trainer> t;
  if (!resume.empty()) {
    t = Trainer::from_checkpoint(resume);
    if (!flags.values.empty() || !flags.file.empty())
      std::cerr << "note: --resume uses the configuration stored in the checkpoint\n";
  } else {
    t = std::make_unique<Trainer>(flags.resolve());
  }
  if (out_dir.empty()) out_dir = default_run_dir();
  fs::create_directories(out_dir);
  const TrainConfig& cfg = t->config();
  write_text(fs::path(out_dir) / "config.cfg", config_to_text(cfg));
  const auto log_path = fs::path(out_dir) / "log.csv";
  std::ofstream log(log_path, t->iteration() ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!t->iteration()) log << kLogHeader << "\n";
  const auto ckpt = (fs::path(out_dir) / "checkpoint.ckpt").string();
  while (t->iteration() < cfg.iterations) {
    const std::uint64_t it = t->iteration();
    const auto r = t->step();
    log << log_row(it, r) << "\n";
    if (it % 50 == 0 || it + 1 == cfg.iterations)
      std::cout << "iter " << it << " total_g " << r.total_g << " total_d " << r.total_d << " hrfpl " << r.hrfpl
                << std::endl;
    if (cfg.checkpoint_every && (it + 1) % cfg.checkpoint_every == 0) t->save(ckpt);
  }
  log.flush();
  t->save(ckpt);
  std::cout << "wrote " << ckpt << "\n";
  return kOk;
}

int cmd_inpaint(const std::string& ckpt, const std::string& image, const std::string& mask, const std::string& out) {
  auto t = Trainer::from_checkpoint(ckpt);
  Image8 im = read_png(image);
  Mask m = read_pgm(mask);
  if (m.height != im.height || m.width != im.width) throw IoError("mask and image sizes differ");
  const std::size_t stride = std::size_t{1} << t->config().generator.n_down;
  if (im.height % stride || im.width % stride)
    throw std::invalid_argument("image size must be divisible by " + std::to_string(stride));
  Tensor result = t->inpaint(image_to_tensor(im), masks_to_tensor({m}));
  // Copy known pixels from the 8-bit source so they survive quantization exactly.
  Image8 o = tensor_to_image(result);
  for (std::size_t k = 0; k < m.known.size(); ++k)
    if (m.known[k])
      for (int c = 0; c < 3; ++c) o.rgb[3 * k + c] = im.rgb[3 * k + c];
  write_png(out, o);
  return kOk;
}

int cmd_maskgen(const std::string& policy_name, std::size_t count, std::size_t size, std::uint64_t seed,
                const std::string& out_dir, bool gated) {
  const MaskPolicy policy = parse_mask_policy(policy_name);
  fs::create_directories(out_dir);
  std::mt19937_64 rng(seed);
  std::ostringstream stats;
  stats << "index,kind,coverage,stroke_radius\n";
  double cov = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Mask m = gated ? sample_test_mask(rng, size, size) : sample_training_mask(rng, size, size, policy);
    std::ostringstream name;
    name << "mask_" << std::setw(5) << std::setfill('0') << i << ".pgm";
    write_pgm((fs::path(out_dir) / name.str()).string(), m);
    stats << i << "," << mask_kind_name(m.kind) << "," << std::setprecision(10) << m.coverage() << ","
          << m.stroke_radius << "\n";
    cov += m.coverage();
  }
  write_text(fs::path(out_dir) / "stats.csv", stats.str());
  std::cout << count << " masks, mean coverage " << (count ? cov / double(count) : 0.0) << "\n";
  return kOk;
}

// The erf config takes the probe keys below; anything else goes to TrainConfig
// and describes the generator for model=generator.
int cmd_erf(const std::string& cfg_file, std::string model, std::size_t size, long row, long col,
            const std::string& out) {
  std::size_t channels = 8;
  std::uint64_t seed = 1;
  TrainConfig tc;
  if (!cfg_file.empty()) {
    std::ifstream f(cfg_file);
    if (!f) throw IoError("cannot read " + cfg_file);
    std::string line, rest;
    while (std::getline(f, line)) {
      const auto eq = line.find('=');
      const auto hash = line.find('#');
      if (eq == std::string::npos || (hash != std::string::npos && hash < eq)) {
        rest += line + "\n";
        continue;
      }
      std::istringstream k(line.substr(0, eq)), v(line.substr(eq + 1, hash == std::string::npos ? std::string::npos : hash - eq - 1));
      std::string key, val;
      k >> key;
      v >> val;
      if (key == "model") model = val;
      else if (key == "size") size = std::stoul(val);
      else if (key == "channels") channels = std::stoul(val);
      else if (key == "probe_seed") seed = std::stoull(val);
      else rest += line + "\n";
    }
    tc = config_from_text(rest);
  }
  if (row < 0) row = long(size / 2);
  if (col < 0) col = long(size / 2);
  std::mt19937_64 rng(seed);
  std::function<Tensor(const Tensor&)> fn;
  std::size_t in_channels = channels;
  Conv2dLayer conv;
  FfcLayer ffc;
  std::unique_ptr<Generator> gen;
  if (model == "conv3x3") {
    conv = Conv2dLayer::make(channels, channels, 3, rng);
    fn = [&](const Tensor& x) { return conv.forward(x); };
  } else if (model == "ffc") {
    FfcConfig fc;
    fc.in_channels = fc.out_channels = channels;
    ffc = FfcLayer(fc, rng);
    fn = [&](const Tensor& x) { return ffc.forward(x, Mode::eval); };
  } else if (model == "generator") {
    gen = std::make_unique<Generator>(tc.generator);
    in_channels = 4;
    fn = [&](const Tensor& x) { return gen->forward(x, Mode::eval); };
  } else {
    throw std::invalid_argument("unknown erf model '" + model + "' (conv3x3, ffc, generator)");
  }
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(in_channels * size * size);
  for (auto& x : v) x = n(rng);
  Tensor input({1, in_channels, size, size}, std::move(v));
  if (gen) calibrate_batchnorm(*gen, input);
  ErfMap map = erf_probe(fn, input, std::size_t(row), std::size_t(col));
  if (!out.empty()) write_png(out, erf_image(map));
  std::cout << "model " << model << " size " << size << " position " << row << "," << col << " footprint "
            << map.support << " fraction " << map.fraction() << "\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::vector<std::size_t>& sizes, std::size_t count, std::uint64_t seed) {
  auto t = Trainer::from_checkpoint(ckpt);
  std::cout << "size,l1,l2,psnr,copy_input_l1\n";
  for (std::size_t s : sizes) {
    auto h = held_out_set(t->config(), seed, s, count);
    const Tensor& x = h.batch.images;
    const Tensor& m = h.batch.masks;
    auto r = inpaint_metrics(x, t->inpaint(x, m), m);
    auto base = inpaint_metrics(x, masked_input(x, m), m);
    std::cout << s << "," << r.l1 << "," << r.l2 << "," << r.psnr << "," << base.l1 << "\n";
  }
  return kOk;
}

int cmd_experiment(const ConfigFlags& flags, const std::vector<std::uint64_t>& seeds,
                   const std::vector<std::size_t>& sizes, std::size_t count, const std::string& out) {
  ExperimentConfig ec;
  ec.train = flags.resolve();
  ec.seeds = seeds;
  ec.eval_sizes = sizes;
  ec.eval_count = count;
  ec.out_dir = out;
  auto rep = run_experiment(ec, [](const std::string& s) { std::cout << s << std::endl; });
  std::cout << "wide masks @" << rep.train_size << ": ffc wins " << rep.ffc_wins() << "/" << rep.seeds.size() << "\n";
  std::cout << "degradation L1(" << rep.big_size << ")/L1(" << rep.train_size << "): ffc smaller in "
            << rep.ffc_transfer_wins() << "/" << rep.seeds.size() << "\n";
  std::cout << "both beat copy-input baseline: " << (rep.beats_copy_baseline() ? "yes" : "no") << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Large-mask inpainting with fast Fourier convolutions"};
  app.require_subcommand(1);

  ConfigFlags train_flags, exp_flags;
  std::string train_out, resume;
  auto* train = app.add_subcommand("train", "train a generator/discriminator pair");
  train_flags.attach(train);
  train->add_option("--out", train_out, "run directory (default $LAMA_CHECKPOINT_DIR or ./run)");
  train->add_option("--resume", resume, "continue from a checkpoint");

  std::string ckpt, image, mask, out;
  auto* inpaint = app.add_subcommand("inpaint", "fill the holes of one image");
  inpaint->add_option("--ckpt", ckpt)->required();
  inpaint->add_option("--image", image, "RGB PNG")->required();
  inpaint->add_option("--mask", mask, "PGM, 0 = missing, 255 = known")->required();
  inpaint->add_option("--out", out, "output PNG")->required();

  std::string policy = "large", mask_out = "masks";
  std::size_t count = 100, size = 64;
  std::uint64_t seed = 1;
  bool gated = false;
  auto* maskgen = app.add_subcommand("maskgen", "write a mask dataset and stats.csv");
  maskgen->add_option("--policy", policy, "large | narrow | wide | box");
  maskgen->add_option("--count", count);
  maskgen->add_option("--size", size);
  maskgen->add_option("--seed", seed);
  maskgen->add_option("--out", mask_out, "output directory");
  maskgen->add_flag("--test", gated, "evaluation masks: wide, coverage gated to (0, 0.5]");

  std::string erf_cfg, erf_model = "ffc", erf_out;
  std::size_t erf_size = 32;
  long row = -1, col = -1;
  auto* erf = app.add_subcommand("erf", "gradient footprint of one output pixel");
  erf->add_option("--config", erf_cfg, "probe config (model=, size=, channels=, probe_seed=, generator keys)");
  erf->add_option("--model", erf_model, "conv3x3 | ffc | generator");
  erf->add_option("--size", erf_size);
  erf->add_option("--row", row);
  erf->add_option("--col", col);
  erf->add_option("--out", erf_out, "sensitivity map PNG");

  std::vector<std::size_t> sizes{32, 64, 96};
  std::size_t eval_count = 32;
  auto* eval = app.add_subcommand("eval", "in-hole metrics on held-out wide masks");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--sizes", sizes)->delimiter(',');
  eval->add_option("--count", eval_count);
  eval->add_option("--seed", seed);

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string exp_out = "experiment";
  auto* experiment = app.add_subcommand("experiment", "ffc vs regular: wide masks and resolution transfer");
  exp_flags.attach(experiment);
  experiment->add_option("--seeds", seeds)->delimiter(',');
  experiment->add_option("--sizes", sizes)->delimiter(',');
  experiment->add_option("--eval-count", eval_count);
  experiment->add_option("--out", exp_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_flags, train_out, resume);
    if (*inpaint) return cmd_inpaint(ckpt, image, mask, out);
    if (*maskgen) return cmd_maskgen(policy, count, size, seed, mask_out, gated);
    if (*erf) return cmd_erf(erf_cfg, erf_model, erf_size, row, col, erf_out);
    if (*eval) return cmd_eval(ckpt, sizes, eval_count, seed);
    if (*experiment) return cmd_experiment(exp_flags, seeds, sizes, eval_count, exp_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
