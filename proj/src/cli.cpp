#include "freqseg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "freqseg/checkpoint.hpp"
#include "freqseg/config.hpp"
#include "freqseg/data.hpp"
#include "freqseg/metrics.hpp"
#include "freqseg/nten.hpp"
#include "freqseg/pgm.hpp"
#include "freqseg/trainer.hpp"
#include "freqseg/wavelet.hpp"

namespace freqseg::cli {

namespace fs = std::filesystem;

namespace {

// PGM outputs: low-frequency style images are written as-is (clamped to
// [0,1]); high-frequency style images are offset by 0.5 so that the
// signed detail image fits. A .nten path stores exact float values.
constexpr float kHighOffset = 0.5f;

bool is_nten(const fs::path& p) { return p.extension() == ".nten"; }

void write_low(const fs::path& path, const Tensor& t) {
  if (is_nten(path)) return save_tensor(path, t);
  write_unit_pgm(path, t);
}

void write_high(const fs::path& path, const Tensor& t) {
  if (is_nten(path)) return save_tensor(path, t);
  std::vector<float> v(t.data().begin(), t.data().end());
  for (float& x : v) x += kHighOffset;
  write_unit_pgm(path, Tensor::from_vector(t.shape(), std::move(v)));
}

Tensor load_input_image(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("input image " + path.string() + " does not exist");
  return load_image(path);
}

void write_mask(const fs::path& path, const LabelMap& map, int num_classes) {
  std::vector<std::uint8_t> px(map.labels.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(num_classes == 2 ? (map.labels[i] != 0 ? 255 : 0) : map.labels[i]);
  }
  write_pgm(path, map.width, map.height, px);
}

TrainConfig config_with_overrides(const std::string& config_path, const std::vector<std::string>& sets,
                                  TrainConfig cfg = {}) {
  try {
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw UsageError("config file " + config_path + " does not exist");
      cfg = load_config(config_path);
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::vector<SampleRecord> test_records(const fs::path& data_dir, const std::string& split, int num_classes) {
  Manifest m = read_manifest(data_dir / "manifest.csv");
  const Split want = parse_split(split);
  std::erase_if(m.entries, [&](const ManifestEntry& e) { return e.split != want; });
  if (m.entries.empty()) throw std::runtime_error("no '" + split + "' entries in " + (data_dir / "manifest.csv").string());
  return load_records(data_dir, m, num_classes);
}

void print_info(std::ostream& os, const XNetV2Model& model, int size) {
  const UNetSpec& spec = model.config().unet;
  const auto lm = model.low_main_layers(), hm = model.high_main_layers();
  const auto has = [](const std::vector<int>& v, int layer) { return std::find(v.begin(), v.end(), layer) != v.end(); };
  char line[160];
  os << "networks: " << (model.config().main_only ? "M" : "M, L, H") << "  input " << spec.in_channels << "x" << size
     << "x" << size << "  classes " << spec.num_classes << "\n\n";
  std::snprintf(line, sizeof line, "%-11s %9s %11s %6s %6s\n", "layer", "channels", "resolution", "L&M", "H&M");
  os << line;
  for (int n = 1; n <= spec.depth(); ++n) {
    const int r = size >> (n - 1);
    const std::string res = std::to_string(r) + "x" + std::to_string(r);
    std::snprintf(line, sizeof line, "%-11s %9d %11s %6s %6s\n", ("E" + std::to_string(n)).c_str(),
                  spec.channels_at(n), res.c_str(), has(lm, n) ? "fuse" : "-", has(hm, n) ? "fuse" : "-");
    os << line;
  }
  const int rb = size >> spec.depth();
  const std::string res = std::to_string(rb) + "x" + std::to_string(rb);
  std::snprintf(line, sizeof line, "%-11s %9d %11s %6s %6s\n", "bottleneck", spec.bottleneck_channels(), res.c_str(),
                "-", "-");
  os << line << '\n';

  const ParameterReport p = model.parameter_report();
  os << "parameters\n";
  std::snprintf(line, sizeof line, "  %-10s %12zu\n", "M", p.main);
  os << line;
  if (!model.config().main_only) {
    std::snprintf(line, sizeof line, "  %-10s %12zu\n  %-10s %12zu\n", "L", p.low, "H", p.high);
    os << line;
  }
  std::snprintf(line, sizeof line, "  %-10s %12zu\n  %-10s %12zu\n  %-10s %12zu\n", "fusion L&M", p.fusion_lm,
                "fusion H&M", p.fusion_hm, "total", p.total());
  os << line;
}

struct Options {
  // gen-data
  int n = 200, n_test = 0, size = 64;
  double texture = 0.8, noise = 0.02;
  std::vector<int> blobs{1, 3};
  std::uint64_t seed = 7;
  std::string out;
  // decompose / fuse
  std::string in, out_lf, out_hf, basis = "haar";
  int levels = 1;
  std::optional<double> alpha, beta;
  std::vector<double> alpha_range{0.4, 0.8}, beta_range{0.4, 0.8};
  // train / infer / eval / info
  std::string config, ckpt, data, split = "test";
  std::vector<std::string> sets;
  int threads = 1;
  double spacing = 1.0;
  bool oracle = false, quiet = false;
};

int cmd_gen_data(const Options& o) {
  SynthSpec spec;
  spec.n_images = o.n;
  spec.n_test = o.n_test;
  spec.height = spec.width = o.size;
  spec.texture_amplitude = o.texture;
  spec.noise_sigma = o.noise;
  spec.seed = o.seed;
  if (o.blobs.size() != 2) throw UsageError("--blobs expects MIN,MAX");
  spec.blob_min = o.blobs[0];
  spec.blob_max = o.blobs[1];
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Manifest m = generate_synthetic(spec, o.out);
  log_info("wrote " + std::to_string(m.entries.size()) + " images to " + o.out);
  return 0;
}

int cmd_decompose(const Options& o) {
  const Tensor image = load_input_image(o.in);
  const FrequencySplit fsplit = frequency_split(image, WaveletBasis::by_name(o.basis), o.levels);
  write_low(o.out_lf, fsplit.low);
  write_high(o.out_hf, fsplit.high);
  return 0;
}

int cmd_fuse(const Options& o) {
  const Tensor image = load_input_image(o.in);
  const FrequencySplit fsplit = frequency_split(image, WaveletBasis::by_name(o.basis), o.levels);
  if (o.alpha_range.size() != 2 || o.beta_range.size() != 2) throw UsageError("ranges expect LO,HI");
  Rng rng(derive_seed({o.seed, 0xf05e}));
  FusionWeights w = sample_alpha_beta(rng, {o.alpha_range[0], o.alpha_range[1]}, {o.beta_range[0], o.beta_range[1]});
  if (o.alpha) w.alpha = *o.alpha;
  if (o.beta) w.beta = *o.beta;
  const FusedPair fused = complementary_fuse(fsplit.low, fsplit.high, w.alpha, w.beta);
  write_low(o.out_lf, fused.low);
  write_high(o.out_hf, fused.high);
  char buf[96];
  std::snprintf(buf, sizeof buf, "alpha=%.6f beta=%.6f\n", w.alpha, w.beta);
  std::cout << buf;
  return 0;
}

int cmd_train(const Options& o) {
  std::vector<std::string> sets = o.sets;
  if (!o.data.empty()) sets.push_back("data_dir=" + o.data);
  if (!o.out.empty()) sets.push_back("out_dir=" + o.out);
  const TrainConfig cfg = config_with_overrides(o.config, sets);
  TrainHooks hooks;
  if (!o.quiet) {
    hooks.on_epoch = [](const EpochLog& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d  lr %.5f  lambda %.3f  L_sup %.4f  L_total %.4f", r.epoch, r.lr,
                    r.lambda, r.sup, r.total);
      std::string msg = buf;
      if (r.val_dice) {
        std::snprintf(buf, sizeof buf, "  val_dice %.4f", *r.val_dice);
        msg += buf;
      }
      log_info(msg);
    };
  }
  const TrainResult result = train_from_config(cfg, hooks);
  if (result.best_val_dice) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "best val_dice %.4f at epoch %d", *result.best_val_dice, result.best_epoch);
    log_info(buf);
  }
  return 0;
}

int cmd_infer(const Options& o) {
  const LoadedCheckpoint ck = load_checkpoint(o.ckpt);
  const InferOptions iopts{ck.config.preprocess_options(), ck.config.inference_weights()};
  fs::create_directories(o.out);
  std::vector<SampleRecord> records;
  if (!o.in.empty()) {
    SampleRecord r;
    r.id = fs::path(o.in).stem().string();
    r.image = load_input_image(o.in);
    records.push_back(std::move(r));
  } else if (!o.data.empty()) {
    records = test_records(o.data, o.split, ck.config.num_classes);
  } else {
    throw UsageError("infer needs --in IMAGE or --data DIR");
  }
  std::vector<const SampleRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  const auto maps = predict(*ck.model, ptrs, iopts, o.threads);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    write_mask(fs::path(o.out) / (records[i].id + ".pgm"), maps[i], ck.config.num_classes);
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.threads < 1) throw UsageError("--threads must be >= 1");
  if (!(o.spacing > 0.0)) throw UsageError("--spacing must be > 0");
  MetricsReport report;
  if (o.oracle) {
    const int classes = o.config.empty() ? 2 : config_with_overrides(o.config, o.sets).num_classes;
    report = evaluate_oracle(test_records(o.data, o.split, classes), o.spacing);
  } else {
    if (o.ckpt.empty()) throw UsageError("eval needs --ckpt DIR (or --oracle)");
    const LoadedCheckpoint ck = load_checkpoint(o.ckpt);
    if (!o.config.empty() || !o.sets.empty()) require_compatible(ck.config, config_with_overrides(o.config, o.sets, ck.config));
    const InferOptions iopts{ck.config.preprocess_options(), ck.config.inference_weights()};
    report = evaluate(*ck.model, test_records(o.data, o.split, ck.config.num_classes), iopts, o.threads, o.spacing);
  }
  if (o.out.empty() || o.out == "-") {
    write_metrics_csv(std::cout, report);
  } else {
    write_metrics_csv(fs::path(o.out), report);
  }
  const ImageMetrics mean = report.aggregate();
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean over %zu images: jaccard %.3f dice %.3f asd %.3f hd95 %.3f",
                report.per_image.size(), mean.jaccard, mean.dice, mean.asd, mean.hd95);
  log_info(buf);
  return 0;
}

int cmd_info(const Options& o) {
  std::unique_ptr<XNetV2Model> model;
  if (!o.ckpt.empty()) {
    model = load_checkpoint(o.ckpt).model;
  } else {
    model = std::make_unique<XNetV2Model>(config_with_overrides(o.config, o.sets).model_config());
  }
  const int multiple = model->config().unet.size_multiple();
  if (o.size < multiple || o.size % multiple != 0) {
    throw UsageError("--size must be a positive multiple of " + std::to_string(multiple));
  }
  print_info(std::cout, *model, o.size);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Frequency-decomposed semi-supervised segmentation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic blob dataset");
  gen->add_option("--n", o.n, "Training images")->capture_default_str();
  gen->add_option("--n-test", o.n_test, "Additional test images")->capture_default_str();
  gen->add_option("--size", o.size, "Image height and width (multiple of 16)")->capture_default_str();
  gen->add_option("--texture", o.texture, "Texture amplitude in [0,1]")->capture_default_str();
  gen->add_option("--noise", o.noise, "Gaussian noise sigma")->capture_default_str();
  gen->add_option("--blobs", o.blobs, "Blob count range MIN,MAX")->delimiter(',')->expected(2)->capture_default_str();
  gen->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* dec = app.add_subcommand("decompose", "Split an image into LF and HF reconstructions");
  dec->add_option("--in", o.in, "Input image (.pgm/.ppm/.nten)")->required();
  dec->add_option("--basis", o.basis, "Wavelet basis")->check(CLI::IsMember({"haar", "db2"}))->capture_default_str();
  dec->add_option("--levels", o.levels, "Decomposition levels")->check(CLI::PositiveNumber)->capture_default_str();
  dec->add_option("--out-lf", o.out_lf, "LF output (.pgm or .nten)")->required();
  dec->add_option("--out-hf", o.out_hf, "HF output (.pgm with +0.5 offset, or .nten)")->required();

  auto* fuse = app.add_subcommand("fuse", "Write the complementary fusion images x^L and x^H");
  fuse->add_option("--in", o.in, "Input image")->required();
  fuse->add_option("--basis", o.basis, "Wavelet basis")->check(CLI::IsMember({"haar", "db2"}))->capture_default_str();
  fuse->add_option("--levels", o.levels, "Decomposition levels")->check(CLI::PositiveNumber)->capture_default_str();
  fuse->add_option("--alpha", o.alpha, "HF weight in x^L (default: drawn from --alpha-range)");
  fuse->add_option("--beta", o.beta, "LF weight in x^H (default: drawn from --beta-range)");
  fuse->add_option("--alpha-range", o.alpha_range, "LO,HI")->delimiter(',')->expected(2)->capture_default_str();
  fuse->add_option("--beta-range", o.beta_range, "LO,HI")->delimiter(',')->expected(2)->capture_default_str();
  fuse->add_option("--seed", o.seed, "Seed for drawn weights")->capture_default_str();
  fuse->add_option("--out-lf", o.out_lf, "x^L output (.pgm or .nten)")->required();
  fuse->add_option("--out-hf", o.out_hf, "x^H output (.pgm with +0.5 offset, or .nten)")->required();

  auto* train_cmd = app.add_subcommand("train", "Train from a config file");
  train_cmd->add_option("--config", o.config, "Config file (key = value)");
  train_cmd->add_option("--set", o.sets, "Override a config key: key=value (repeatable)");
  train_cmd->add_option("--data", o.data, "Dataset directory (overrides data_dir)");
  train_cmd->add_option("--out", o.out, "Output directory (overrides out_dir)");
  train_cmd->add_flag("--quiet", o.quiet, "No per-epoch progress");

  auto* infer_cmd = app.add_subcommand("infer", "Predict masks with a checkpoint");
  infer_cmd->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
  infer_cmd->add_option("--in", o.in, "Single input image");
  infer_cmd->add_option("--data", o.data, "Dataset directory");
  infer_cmd->add_option("--split", o.split, "Manifest split to predict with --data")->capture_default_str();
  infer_cmd->add_option("--out", o.out, "Output directory for masks")->required();
  infer_cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", o.ckpt, "Checkpoint directory");
  eval_cmd->add_option("--data", o.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", o.split, "Manifest split to score")->capture_default_str();
  eval_cmd->add_option("--out", o.out, "Metrics CSV ('-' for stdout)");
  eval_cmd->add_option("--config", o.config, "Config that must match the checkpoint");
  eval_cmd->add_option("--set", o.sets, "Override a key of --config");
  eval_cmd->add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  eval_cmd->add_option("--spacing", o.spacing, "Pixel spacing for ASD/95HD")->capture_default_str();
  eval_cmd->add_flag("--oracle", o.oracle, "Score the ground truth against itself");

  auto* info = app.add_subcommand("info", "Print the layer table and parameter counts");
  info->add_option("--config", o.config, "Config file");
  info->add_option("--set", o.sets, "Override a config key: key=value");
  info->add_option("--ckpt", o.ckpt, "Checkpoint directory (instead of --config)");
  info->add_option("--size", o.size, "Input size for the resolution column")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (dec->parsed()) return cmd_decompose(o);
    if (fuse->parsed()) return cmd_fuse(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (infer_cmd->parsed()) return cmd_infer(o);
    if (eval_cmd->parsed()) return cmd_eval(o);
    if (info->parsed()) return cmd_info(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace freqseg::cli
