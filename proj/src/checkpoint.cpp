#include "freqseg/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "freqseg/nten.hpp"

namespace freqseg {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
  return s;
}

std::string file_name_for(const std::string& tensor_name) {
  std::string f = tensor_name;
  for (char& c : f) {
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return f + ".nten";
}

struct ManifestLine {
  std::string file;
  Shape shape;
};

}  // namespace

void save_checkpoint(const fs::path& dir, const XNetV2Model& model, const TrainConfig& cfg) {
  fs::create_directories(dir / "params");
  save_config(dir / "config.txt", cfg);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
  for (const auto& [name, tensor] : model.state()) {
    const std::string file = file_name_for(name);
    save_tensor(dir / "params" / file, tensor);
    manifest << name << ' ' << file;
    for (int d : tensor.shape()) manifest << ' ' << d;
    manifest << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing checkpoint manifest in " + dir.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint " + dir.string() + " is not a directory");
  LoadedCheckpoint out;
  out.config = load_config(dir / "config.txt");
  out.config.validate();
  out.model = std::make_unique<XNetV2Model>(out.config.model_config());

  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("checkpoint " + dir.string() + " has no manifest.txt");
  std::map<std::string, ManifestLine> entries;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name;
    ManifestLine m;
    if (!(ls >> name >> m.file)) continue;
    int d = 0;
    while (ls >> d) m.shape.push_back(d);
    entries[name] = std::move(m);
  }

  std::vector<std::string> missing, misshaped;
  for (auto& [name, tensor] : out.model->state()) {
    const auto it = entries.find(name);
    if (it == entries.end()) {
      missing.push_back(name);
      continue;
    }
    Tensor loaded = load_tensor(dir / "params" / it->second.file);
    if (loaded.shape() != tensor.shape() || it->second.shape != tensor.shape()) {
      misshaped.push_back(name + " " + shape_str(loaded.shape()) + " vs " + shape_str(tensor.shape()));
    } else {
      std::copy(loaded.data().begin(), loaded.data().end(), tensor.mutable_data().begin());
    }
    entries.erase(it);
  }
  std::vector<std::string> extra;
  for (const auto& kv : entries) extra.push_back(kv.first);
  if (!missing.empty() || !misshaped.empty() || !extra.empty()) {
    std::string msg = "checkpoint " + dir.string() + " does not match its config:";
    if (!missing.empty()) msg += " missing [" + join(missing) + "]";
    if (!extra.empty()) msg += " unexpected [" + join(extra) + "]";
    if (!misshaped.empty()) msg += " wrong shape [" + join(misshaped) + "]";
    throw std::runtime_error(msg);
  }
  return out;
}

std::vector<std::string> config_mismatches(const TrainConfig& a, const TrainConfig& b) {
  const auto ea = config_entries(a), eb = config_entries(b);
  std::vector<std::string> diff;
  for (const auto& key : model_keys()) {
    if (ea.at(key) != eb.at(key)) diff.push_back(key + " (" + ea.at(key) + " vs " + eb.at(key) + ")");
  }
  return diff;
}

void require_compatible(const TrainConfig& checkpoint_cfg, const TrainConfig& cfg) {
  const auto diff = config_mismatches(checkpoint_cfg, cfg);
  if (!diff.empty()) throw std::runtime_error("checkpoint/config mismatch on keys: " + join(diff));
}

void load_state(const XNetV2Model& model, const std::vector<std::vector<float>>& state) {
  auto tensors = model.state();
  if (tensors.size() != state.size()) throw std::invalid_argument("load_state: tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto dst = tensors[i].tensor.mutable_data();
    if (dst.size() != state[i].size()) throw std::invalid_argument("load_state: size mismatch at " + tensors[i].name);
    std::copy(state[i].begin(), state[i].end(), dst.begin());
  }
}

std::vector<std::vector<float>> snapshot_state(const XNetV2Model& model) {
  std::vector<std::vector<float>> s;
  for (const auto& nt : model.state()) s.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  return s;
}

}  // namespace freqseg
