#pragma once

// A checkpoint is a directory:
//   config.txt     the training config (config file syntax)
//   manifest.txt   one line per state tensor: "<name> <file> <shape>"
//   params/*.nten  the tensors

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "freqseg/config.hpp"
#include "freqseg/model.hpp"

namespace freqseg {

void save_checkpoint(const std::filesystem::path& dir, const XNetV2Model& model, const TrainConfig& cfg);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<XNetV2Model> model;
};

/// Rebuilds the model from config.txt and fills every state tensor. Missing,
/// extra or misshaped tensors are an error listing the offending names.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Model-relevant keys (see model_keys) on which the two configs differ.
std::vector<std::string> config_mismatches(const TrainConfig& a, const TrainConfig& b);

/// Throws std::runtime_error listing the differing keys, if any.
void require_compatible(const TrainConfig& checkpoint_cfg, const TrainConfig& cfg);

/// Copies the values of `state` (in model.state() order) into the model.
void load_state(const XNetV2Model& model, const std::vector<std::vector<float>>& state);
std::vector<std::vector<float>> snapshot_state(const XNetV2Model& model);

}  // namespace freqseg
