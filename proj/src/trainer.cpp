#include "freqseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "freqseg/checkpoint.hpp"
#include "freqseg/loss.hpp"

namespace freqseg {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kLabeledStream = 0x1ab;
constexpr std::uint64_t kUnlabeledStream = 0x2cd;
constexpr std::size_t kInferChunk = 16;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Runs fn(begin, end) over contiguous slices of [0, n) on up to `threads` threads.
template <typename Fn>
void parallel_slices(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = n * w / workers, e = n * (w + 1) / workers;
    pool.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

std::vector<const SampleRecord*> pointers(const std::vector<SampleRecord>& records) {
  std::vector<const SampleRecord*> p;
  for (const auto& r : records) p.push_back(&r);
  return p;
}

}  // namespace

double poly_lr(long step, long total_steps, double lr0, double power) {
  if (total_steps <= 0) throw std::invalid_argument("poly_lr: total_steps must be > 0");
  if (step < 0 || step > total_steps) throw std::invalid_argument("poly_lr: step outside [0, total_steps]");
  return lr0 * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total_steps), power);
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, double lr,
              double momentum) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw std::invalid_argument("sgd_step: parameter, grad and velocity sizes differ");
  }
  const float m = static_cast<float>(momentum), l = static_cast<float>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = m * velocity[i] + grad[i];
    param[i] -= l * velocity[i];
  }
}

SgdMomentum::SgdMomentum(std::vector<NamedTensor> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0f);
}

bool SgdMomentum::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        log_warn("non-finite gradient in " + p.name + "; skipping optimizer step");
        return false;
      }
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    if (!t.has_grad()) {
      // No gradient reached this parameter: the velocity still decays.
      const std::vector<float> zeros(t.numel(), 0.0f);
      sgd_step(t.mutable_data(), zeros, velocity_[i], lr, momentum_);
      continue;
    }
    sgd_step(t.mutable_data(), t.grad(), velocity_[i], lr, momentum_);
  }
  return true;
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void write_train_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,lr,lambda,L_sup,L_unsup,L_total,val_dice\n";
  for (const auto& r : log.rows) {
    out << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.lambda) << ',' << fmt(r.sup) << ','
        << (r.unsup ? fmt(*r.unsup) : "") << ',' << fmt(r.total) << ',' << (r.val_dice ? fmt(*r.val_dice) : "")
        << '\n';
  }
}

void write_train_log(const fs::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write train log " + path.string());
  write_train_log(out, log);
  if (!out) throw std::runtime_error("failed writing train log " + path.string());
}

TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, const TrainHooks& hooks) {
  cfg.validate();
  if (data.labeled.empty()) throw std::invalid_argument("train: no labeled images");
  const bool semi = cfg.mode == TrainMode::Semi;
  if (semi && data.unlabeled.empty()) {
    throw std::invalid_argument("train: mode semi needs unlabeled images (use mode full for labeled_fraction 1)");
  }
  const bool unsup_on_labeled = !semi && cfg.full_unsup && !cfg.main_only;

  auto model = std::make_unique<XNetV2Model>(cfg.model_config());
  SgdMomentum opt(model->parameters(), cfg.momentum);

  BatchOptions bopts;
  bopts.preprocess = cfg.preprocess_options();
  bopts.alpha_range = cfg.alpha_range;
  bopts.beta_range = cfg.beta_range;
  bopts.augment = cfg.augment;
  bopts.num_classes = cfg.num_classes;
  const InferOptions iopts{cfg.preprocess_options(), cfg.inference_weights()};

  LossConfig lcfg;
  lcfg.lambda_max = cfg.lambda_max;
  lcfg.max_epoch = std::max(1, cfg.epochs - 1);
  lcfg.validate();

  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_lab = data.labeled.size(), n_unl = data.unlabeled.size();
  const long steps_per_epoch = static_cast<long>((n_lab + b - 1) / b);
  const long total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  std::vector<std::vector<float>> best_state;
  long global = 0;
  bool stopped = false;

  for (int epoch = 0; epoch < cfg.epochs && !stopped; ++epoch) {
    const double lambda = (semi || unsup_on_labeled) ? lambda_at(epoch, lcfg) : 0.0;
    const auto lab_order = epoch_order(n_lab, cfg.seed, epoch, kLabeledStream);
    const auto unl_order = semi ? epoch_order(n_unl, cfg.seed, epoch, kUnlabeledStream) : std::vector<std::size_t>{};
    EpochLog row;
    row.epoch = epoch;
    row.lambda = lambda;
    row.lr = poly_lr(global, total_steps, cfg.lr0, cfg.poly_power);
    double sum_sup = 0.0, sum_unsup = 0.0, sum_total = 0.0;
    long steps = 0;

    for (long s = 0; s < steps_per_epoch; ++s) {
      if (hooks.max_steps > 0 && global >= hooks.max_steps) {
        stopped = true;
        break;
      }
      const double lr = poly_lr(global, total_steps, cfg.lr0, cfg.poly_power);
      const auto step_key = static_cast<std::uint64_t>(global);

      std::vector<const SampleRecord*> lab;
      for (std::size_t j = static_cast<std::size_t>(s) * b; j < std::min(n_lab, static_cast<std::size_t>(s + 1) * b); ++j) {
        lab.push_back(&data.labeled[lab_order[j]]);
      }
      Rng lab_rng(derive_seed({cfg.seed, step_key, kLabeledStream}));
      const Batch lb = make_batch(lab, true, bopts, lab_rng);
      const Predictions lp = model->forward(lb.main, lb.low, lb.high, true, cfg.main_only);
      const Tensor sup = cfg.main_only ? dice_loss(lp.main, lb.target)
                                       : supervised_loss(lp.main, lp.low, lp.high, lb.target);

      Tensor unsup;
      if (semi) {
        std::vector<const SampleRecord*> unl;
        for (std::size_t j = 0; j < b; ++j) unl.push_back(&data.unlabeled[unl_order[(static_cast<std::size_t>(s) * b + j) % n_unl]]);
        Rng unl_rng(derive_seed({cfg.seed, step_key, kUnlabeledStream}));
        const Batch ub = make_batch(unl, false, bopts, unl_rng);
        const Predictions up = model->forward(ub.main, ub.low, ub.high, true);
        unsup = unsupervised_loss(up.main, up.low, up.high);
      } else if (unsup_on_labeled) {
        unsup = unsupervised_loss(lp.main, lp.low, lp.high);
      }

      Tensor total;
      try {
        total = total_loss(sup, unsup, lambda);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(s) + ": " + e.what());
      }
      opt.zero_grad();
      total.backward();
      opt.step(lr);

      sum_sup += sup.item();
      if (unsup.defined()) sum_unsup += unsup.item();
      sum_total += total.item();
      ++steps;
      ++global;
      if (hooks.on_step) hooks.on_step(global, *model);
    }
    if (steps == 0) break;

    row.sup = sum_sup / static_cast<double>(steps);
    if (semi || unsup_on_labeled) row.unsup = sum_unsup / static_cast<double>(steps);
    row.total = sum_total / static_cast<double>(steps);
    const bool last = epoch == cfg.epochs - 1 || stopped;
    if (!data.test.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      row.val_dice = validation_dice(*model, data.test, iopts);
      if (!result.best_val_dice || *row.val_dice > *result.best_val_dice) {
        result.best_val_dice = row.val_dice;
        result.best_epoch = epoch;
        best_state = snapshot_state(*model);
      }
    }
    result.log.rows.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
  }

  result.model = std::make_unique<XNetV2Model>(cfg.model_config());
  if (best_state.empty()) {
    result.best_epoch = result.log.rows.empty() ? -1 : result.log.rows.back().epoch;
    best_state = snapshot_state(*model);
  }
  load_state(*result.model, best_state);
  result.last_model = std::move(model);
  return result;
}

DatasetSplits load_splits(const TrainConfig& cfg) {
  if (cfg.data_dir.empty()) throw std::invalid_argument("config key 'data_dir' is not set");
  const fs::path dir(cfg.data_dir);
  Manifest manifest = read_manifest(dir / "manifest.csv");
  manifest = split_dataset(manifest, cfg.labeled_fraction, cfg.seed);
  // Full mode trains on the labeled images alone.
  if (cfg.mode == TrainMode::Full) {
    std::erase_if(manifest.entries, [](const ManifestEntry& e) { return e.split == Split::Unlabeled; });
  }
  DatasetSplits s = group_splits(load_records(dir, manifest, cfg.num_classes));
  for (const auto* group : {&s.labeled, &s.unlabeled, &s.test}) {
    for (const auto& r : *group) {
      if (r.image.dim(0) != cfg.in_channels) {
        throw std::runtime_error("image " + r.id + " has " + std::to_string(r.image.dim(0)) +
                                 " channels but in_channels is " + std::to_string(cfg.in_channels));
      }
    }
  }
  return s;
}

TrainResult train_from_config(const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const DatasetSplits data = load_splits(cfg);
  TrainResult result = train(cfg, data, hooks);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_train_log(out / "train_log.csv", result.log);
  save_checkpoint(out / "best", *result.model, cfg);
  save_checkpoint(out / "last", *result.last_model, cfg);
  return result;
}

std::vector<LabelMap> predict(const XNetV2Model& model, const std::vector<const SampleRecord*>& records,
                              const InferOptions& options, int threads) {
  std::vector<LabelMap> out(records.size());
  parallel_slices(records.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; i += kInferChunk) {
      const std::size_t stop = std::min(end, i + kInferChunk);
      std::vector<Tensor> images;
      for (std::size_t j = i; j < stop; ++j) images.push_back(records[j]->image);
      auto maps = infer(model, stack_batch(images), options);
      for (std::size_t j = i; j < stop; ++j) out[j] = std::move(maps[j - i]);
    }
  });
  return out;
}

double validation_dice(const XNetV2Model& model, const std::vector<SampleRecord>& records,
                       const InferOptions& options, int threads) {
  if (records.empty()) throw std::invalid_argument("validation_dice: no records");
  const auto preds = predict(model, pointers(records), options, threads);
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label) throw std::invalid_argument("validation_dice: record " + records[i].id + " has no label");
    sum += overlap_metrics(preds[i], *records[i].label).dice / 100.0;
  }
  return sum / static_cast<double>(records.size());
}

MetricsReport evaluate(const XNetV2Model& model, const std::vector<SampleRecord>& records,
                       const InferOptions& options, int threads, double spacing) {
  for (const auto& r : records) {
    if (!r.label) throw std::invalid_argument("evaluate: record " + r.id + " has no label");
  }
  const auto preds = predict(model, pointers(records), options, threads);
  MetricsReport report;
  report.per_image.resize(records.size());
  parallel_slices(records.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      report.per_image[i] = evaluate_image(records[i].id, preds[i], *records[i].label, 1, spacing);
    }
  });
  return report;
}

MetricsReport evaluate_oracle(const std::vector<SampleRecord>& records, double spacing) {
  MetricsReport report;
  for (const auto& r : records) {
    if (!r.label) throw std::invalid_argument("evaluate: record " + r.id + " has no label");
    report.per_image.push_back(evaluate_image(r.id, *r.label, *r.label, 1, spacing));
  }
  return report;
}

}  // namespace freqseg
