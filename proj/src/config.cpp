#include "freqseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace freqseg {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    parts.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw std::invalid_argument("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
                              std::string(expected));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, text, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, text, "a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad_value(key, text, "a finite number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  std::string v = trim(text);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, text, "a boolean");
}

Range parse_range(std::string_view key, std::string_view text) {
  const auto parts = split_commas(text);
  if (parts.size() != 2) bad_value(key, text, "a range 'lo,hi'");
  return {parse_double(key, parts[0]), parse_double(key, parts[1])};
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string fmt_range(const Range& r) { return fmt_double(r.lo) + "," + fmt_double(r.hi); }

std::string fmt_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

TrainMode parse_train_mode(std::string_view text) {
  if (text == "semi") return TrainMode::Semi;
  if (text == "full") return TrainMode::Full;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected semi or full)");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::Semi ? "semi" : "full"; }

void TrainConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("config key '" + key + "': " + why);
  };
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(lr0 > 0.0)) fail("lr0", "must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (!(poly_power >= 0.0)) fail("poly_power", "must be >= 0");
  if (!(lambda_max >= 0.0)) fail("lambda_max", "must be >= 0");
  alpha_range.validate("alpha_range");
  beta_range.validate("beta_range");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) fail("labeled_fraction", "must be in (0, 1]");
  if (main_only && mode == TrainMode::Semi) fail("main_only", "needs mode = full (the main network alone has no consistency partner)");
  if (in_channels < 1) fail("in_channels", "must be >= 1");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (wavelet_levels < 1) fail("wavelet_levels", "must be >= 1");
  if (eval_every < 1) fail("eval_every", "must be >= 1");
  WaveletBasis::by_name(wavelet);
  model_config().unet.validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.unet.in_channels = in_channels;
  m.unet.num_classes = num_classes;
  m.unet.encoder_channels = encoder_channels;
  m.enable_lm = enable_lm;
  m.enable_hm = enable_hm;
  m.main_only = main_only;
  m.seed = seed;
  return m;
}

PreprocessOptions TrainConfig::preprocess_options() const {
  PreprocessOptions p;
  p.basis = WaveletBasis::by_name(wavelet);
  p.levels = wavelet_levels;
  p.mode = input_mode;
  return p;
}

FusionWeights TrainConfig::inference_weights() const { return {alpha_range.midpoint(), beta_range.midpoint()}; }

void set_config_value(TrainConfig& cfg, std::string_view key_in, std::string_view value_in) {
  const std::string key = trim(key_in), value = trim(value_in);
  if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "epochs") cfg.epochs = parse_integer<int>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_integer<int>(key, value);
  else if (key == "lr0") cfg.lr0 = parse_double(key, value);
  else if (key == "momentum") cfg.momentum = parse_double(key, value);
  else if (key == "poly_power") cfg.poly_power = parse_double(key, value);
  else if (key == "lambda_max") cfg.lambda_max = parse_double(key, value);
  else if (key == "alpha_range") cfg.alpha_range = parse_range(key, value);
  else if (key == "beta_range") cfg.beta_range = parse_range(key, value);
  else if (key == "labeled_fraction") cfg.labeled_fraction = parse_double(key, value);
  else if (key == "seed") cfg.seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "mode") cfg.mode = parse_train_mode(value);
  else if (key == "enable_lm") cfg.enable_lm = parse_bool(key, value);
  else if (key == "enable_hm") cfg.enable_hm = parse_bool(key, value);
  else if (key == "input_mode") cfg.input_mode = parse_input_mode(value);
  else if (key == "main_only") cfg.main_only = parse_bool(key, value);
  else if (key == "full_unsup") cfg.full_unsup = parse_bool(key, value);
  else if (key == "encoder_channels") {
    std::vector<int> ch;
    for (const auto& p : split_commas(value)) ch.push_back(parse_integer<int>(key, p));
    cfg.encoder_channels = std::move(ch);
  } else if (key == "in_channels") cfg.in_channels = parse_integer<int>(key, value);
  else if (key == "num_classes") cfg.num_classes = parse_integer<int>(key, value);
  else if (key == "wavelet") cfg.wavelet = value;
  else if (key == "wavelet_levels") cfg.wavelet_levels = parse_integer<int>(key, value);
  else if (key == "augment") cfg.augment = parse_bool(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_integer<int>(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_config(std::istream& in, const std::string& source) {
  TrainConfig cfg;
  std::vector<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw std::invalid_argument(where + "key '" + key + "' given twice");
    }
    seen.push_back(key);
    try {
      set_config_value(cfg, key, std::string_view(body).substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::map<std::string, std::string> config_entries(const TrainConfig& cfg) {
  std::map<std::string, std::string> e;
  std::istringstream in(serialize_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) e[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return e;
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  const auto kv = [&os](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("data_dir", cfg.data_dir);
  kv("out_dir", cfg.out_dir);
  kv("epochs", std::to_string(cfg.epochs));
  kv("batch_size", std::to_string(cfg.batch_size));
  kv("lr0", fmt_double(cfg.lr0));
  kv("momentum", fmt_double(cfg.momentum));
  kv("poly_power", fmt_double(cfg.poly_power));
  kv("lambda_max", fmt_double(cfg.lambda_max));
  kv("alpha_range", fmt_range(cfg.alpha_range));
  kv("beta_range", fmt_range(cfg.beta_range));
  kv("labeled_fraction", fmt_double(cfg.labeled_fraction));
  kv("seed", std::to_string(cfg.seed));
  kv("mode", to_string(cfg.mode));
  kv("enable_lm", fmt_bool(cfg.enable_lm));
  kv("enable_hm", fmt_bool(cfg.enable_hm));
  kv("input_mode", to_string(cfg.input_mode));
  kv("main_only", fmt_bool(cfg.main_only));
  kv("full_unsup", fmt_bool(cfg.full_unsup));
  kv("encoder_channels", fmt_list(cfg.encoder_channels));
  kv("in_channels", std::to_string(cfg.in_channels));
  kv("num_classes", std::to_string(cfg.num_classes));
  kv("wavelet", cfg.wavelet);
  kv("wavelet_levels", std::to_string(cfg.wavelet_levels));
  kv("augment", fmt_bool(cfg.augment));
  kv("eval_every", std::to_string(cfg.eval_every));
  return os.str();
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << serialize_config(cfg);
  if (!out) throw std::runtime_error("failed writing config " + path.string());
}

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{
      "encoder_channels", "in_channels", "num_classes",    "enable_lm",  "enable_hm",  "main_only",
      "wavelet",          "wavelet_levels", "input_mode", "alpha_range", "beta_range"};
  return keys;
}

}  // namespace freqseg
