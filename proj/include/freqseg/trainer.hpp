#pragma once

// SGD training loop, learning-rate schedule and evaluation driver.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "freqseg/config.hpp"
#include "freqseg/data.hpp"
#include "freqseg/metrics.hpp"
#include "freqseg/model.hpp"

namespace freqseg {

/// lr0 * (1 - step / total_steps)^power.
double poly_lr(long step, long total_steps, double lr0, double power);

/// v = momentum * v + g; p = p - lr * v.
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, double lr,
              double momentum);

class SgdMomentum {
 public:
  SgdMomentum(std::vector<NamedTensor> params, double momentum);

  /// Updates every parameter from its grad. If any grad is non-finite the
  /// whole step is skipped with a warning and false is returned.
  bool step(double lr);
  void zero_grad();

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<float>> velocity_;
  double momentum_;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;      // at the epoch's first step
  double lambda = 0.0;
  double sup = 0.0;     // means over the epoch's steps
  std::optional<double> unsup;
  double total = 0.0;
  std::optional<double> val_dice;  // foreground Dice of M on the test split, in [0,1]
};

struct TrainLog {
  std::vector<EpochLog> rows;
};

/// Header `epoch,lr,lambda,L_sup,L_unsup,L_total,val_dice`; missing values are empty.
void write_train_log(std::ostream& out, const TrainLog& log);
void write_train_log(const std::filesystem::path& path, const TrainLog& log);

struct TrainResult {
  TrainLog log;
  std::unique_ptr<XNetV2Model> model;       // weights of the best validation epoch
  std::unique_ptr<XNetV2Model> last_model;  // weights after the final epoch
  int best_epoch = -1;
  std::optional<double> best_val_dice;
};

struct TrainHooks {
  /// Called after each epoch's row is complete.
  std::function<void(const EpochLog&)> on_epoch;
  /// Called after each optimizer step with the global step index.
  std::function<void(long step, const XNetV2Model&)> on_step;
  /// Stop after this many optimizer steps (0 = no limit).
  long max_steps = 0;
};

/// Trains on split-resolved data. Writes nothing to disk.
TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, const TrainHooks& hooks = {});

/// Loads cfg.data_dir, splits it, trains, and writes train_log.csv plus the
/// `best` and `last` checkpoints under cfg.out_dir.
TrainResult train_from_config(const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Loads and splits the dataset of `cfg`.
DatasetSplits load_splits(const TrainConfig& cfg);

/// Eval-mode predictions of M, in record order; `threads` workers share the images.
std::vector<LabelMap> predict(const XNetV2Model& model, const std::vector<const SampleRecord*>& records,
                              const InferOptions& options, int threads = 1);

/// Mean foreground Dice (fraction) of M over labeled records.
double validation_dice(const XNetV2Model& model, const std::vector<SampleRecord>& records,
                       const InferOptions& options, int threads = 1);

/// All four metrics per record, in record order.
MetricsReport evaluate(const XNetV2Model& model, const std::vector<SampleRecord>& records,
                       const InferOptions& options, int threads = 1, double spacing = 1.0);

/// Ground truth scored against itself.
MetricsReport evaluate_oracle(const std::vector<SampleRecord>& records, double spacing = 1.0);

}  // namespace freqseg
