#pragma once

// Training configuration and its flat `key = value` text form.
//
// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
// Unknown keys, repeated keys and unparsable values are errors. Keys that
// are not given keep their defaults. Booleans accept true/false/1/0/yes/no;
// ranges and lists are comma separated.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "freqseg/common.hpp"
#include "freqseg/model.hpp"
#include "freqseg/preprocess.hpp"

namespace freqseg {

enum class TrainMode { Semi, Full };

TrainMode parse_train_mode(std::string_view text);
std::string to_string(TrainMode mode);

struct TrainConfig {
  std::string data_dir;
  std::string out_dir = "run";

  int epochs = 100;
  int batch_size = 4;
  double lr0 = 0.1;
  double momentum = 0.9;
  double poly_power = 0.9;
  double lambda_max = 3.0;
  Range alpha_range{0.4, 0.8};
  Range beta_range{0.4, 0.8};
  double labeled_fraction = 0.2;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Semi;

  bool enable_lm = true;
  bool enable_hm = true;
  InputMode input_mode = InputMode::Fused;
  /// Train the main network alone (needs mode full).
  bool main_only = false;
  /// In full mode, also apply the consistency loss to the labeled batch.
  bool full_unsup = false;

  std::vector<int> encoder_channels{32, 64, 128, 256};
  int in_channels = 1;
  int num_classes = 2;
  std::string wavelet = "haar";
  int wavelet_levels = 1;
  bool augment = true;
  /// Validate on the test split every this many epochs (and after the last).
  int eval_every = 1;

  /// Throws std::invalid_argument naming the first offending key.
  void validate() const;

  ModelConfig model_config() const;
  PreprocessOptions preprocess_options() const;
  /// alpha and beta fixed at the midpoints of their ranges.
  FusionWeights inference_weights() const;
};

/// Applies one `key = value` assignment.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

TrainConfig parse_config(std::istream& in, const std::string& source = "<config>");
TrainConfig load_config(const std::filesystem::path& path);

/// Every key in a fixed order, in a form parse_config reads back.
std::string serialize_config(const TrainConfig& cfg);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

/// All keys with their serialized values.
std::map<std::string, std::string> config_entries(const TrainConfig& cfg);

/// Keys that fix the network's parameter layout or its inference inputs;
/// a checkpoint and a config must agree on these.
const std::vector<std::string>& model_keys();

}  // namespace freqseg
