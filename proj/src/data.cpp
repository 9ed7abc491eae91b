#include "freqseg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "freqseg/loss.hpp"
#include "freqseg/pgm.hpp"

namespace freqseg {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSplitStream = 0x5b11;

double normal(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - uniform01(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

struct Blob {
  double cy, cx, a, b, cos_t, sin_t;
};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string sample_id(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, index);
  return buf;
}

void write_sample(const fs::path& dir, const std::string& id, const SynthSample& s) {
  write_unit_pgm(dir / "images" / (id + ".pgm"), s.image);
  std::vector<std::uint8_t> mask(s.label.labels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = s.label.labels[i] != 0 ? 255 : 0;
  write_pgm(dir / "labels" / (id + ".pgm"), s.label.width, s.label.height, mask);
}

LabelMap load_label(const fs::path& path, int num_classes) {
  const PnmImage img = read_pnm(path);
  if (img.channels != 1) throw std::runtime_error("label " + path.string() + " is not a grey image");
  LabelMap map(img.height, img.width);
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    const int v = img.samples[i];
    if (num_classes == 2) {
      map.labels[i] = v != 0 ? 1 : 0;
    } else if (v >= num_classes) {
      throw std::runtime_error("label " + path.string() + " has class " + std::to_string(v) + " >= num_classes " +
                               std::to_string(num_classes));
    } else {
      map.labels[i] = v;
    }
  }
  return map;
}

// Index map for one augmentation: output pixel (y, x) reads input pixel src[y * w_out + x].
std::vector<std::size_t> augmentation_map(int h, int w, const Augmentation& aug, int& h_out, int& w_out) {
  const int turns = ((aug.quarter_turns % 4) + 4) % 4;
  h_out = turns % 2 ? w : h;
  w_out = turns % 2 ? h : w;
  std::vector<std::size_t> src(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h_out; ++y) {
    for (int x = 0; x < w_out; ++x) {
      // Undo the rotation, then the flips.
      int sy = y, sx = x;
      switch (turns) {
        case 1: sy = x; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - x; break;
        case 3: sy = h - 1 - x; sx = y; break;
        default: break;
      }
      if (aug.flip_vertical) sy = h - 1 - sy;
      if (aug.flip_horizontal) sx = w - 1 - sx;
      src[static_cast<std::size_t>(y) * w_out + x] = static_cast<std::size_t>(sy) * w + sx;
    }
  }
  return src;
}

}  // namespace

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "labeled") return Split::Labeled;
  if (text == "unlabeled") return Split::Unlabeled;
  if (text == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(text) + "' (expected train, labeled, unlabeled or test)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "?";
}

void SynthSpec::validate() const {
  if (n_images < 0 || n_test < 0) throw std::invalid_argument("synth: image counts must be >= 0");
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("synth: height and width must be positive multiples of 16");
  }
  if (blob_min < 1 || blob_max < blob_min) throw std::invalid_argument("synth: need 1 <= blob_min <= blob_max");
  if (!(texture_amplitude >= 0.0 && texture_amplitude <= 1.0)) {
    throw std::invalid_argument("synth: texture_amplitude must be in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise_sigma must be >= 0");
}

SynthSample synthesize_sample(const SynthSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng(derive_seed({spec.seed, index, 0x5e7a}));
  const int h = spec.height, w = spec.width;
  const double t = spec.texture_amplitude;
  const double size = std::min(h, w);

  const double base = uniform(rng, 0.25, 0.35);
  const double grad_theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double grad_amp = uniform(rng, 0.0, 0.12);
  const double contrast = uniform(rng, 0.3, 0.4);
  const double edge_width = 0.75 + 7.25 * (1.0 - t);

  const int n_blobs = spec.blob_min + static_cast<int>(uniform_index(rng, spec.blob_max - spec.blob_min + 1));
  std::vector<Blob> blobs;
  for (int i = 0; i < n_blobs; ++i) {
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    blobs.push_back({uniform(rng, 0.25, 0.75) * h, uniform(rng, 0.25, 0.75) * w, uniform(rng, 0.1, 0.22) * size,
                     uniform(rng, 0.1, 0.22) * size, std::cos(theta), std::sin(theta)});
  }
  // Texture: a fine pattern inside blobs, a coarser one in the background.
  const double f_fg = uniform(rng, 0.22, 0.3), f_bg = uniform(rng, 0.12, 0.18);
  const double phi_fg = uniform(rng, 0.0, std::numbers::pi / 2), phi_bg = uniform(rng, 0.0, std::numbers::pi / 2);

  SynthSample out{Tensor::zeros({1, h, w}), LabelMap(h, w)};
  auto img = out.image.mutable_data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double soft = 0.0;
      bool inside = false;
      for (const auto& b : blobs) {
        const double dy = y - b.cy, dx = x - b.cx;
        const double u = dx * b.cos_t + dy * b.sin_t, v = -dx * b.sin_t + dy * b.cos_t;
        const double q = u * u / (b.a * b.a) + v * v / (b.b * b.b);
        inside = inside || q <= 1.0;
        // Smooth stand-in for the signed distance to the boundary, in pixels:
        // zero on the ellipse, bounded by the minor semi-axis on both sides.
        const double dist = std::min(b.a, b.b) * (1.0 - q) / (1.0 + q);
        soft = std::max(soft, 1.0 / (1.0 + std::exp(-dist / edge_width)));
      }
      const double ramp = grad_amp * ((x - 0.5 * w) * std::cos(grad_theta) + (y - 0.5 * h) * std::sin(grad_theta)) / size;
      const double tex = t * (0.12 * soft * std::sin(2.0 * std::numbers::pi * f_fg * (x + y) + phi_fg) +
                              0.05 * (1.0 - soft) * std::sin(2.0 * std::numbers::pi * f_bg * (x - y) + phi_bg));
      double value = base + ramp + contrast * soft + tex;
      if (spec.noise_sigma > 0.0) value += spec.noise_sigma * normal(rng);
      img[static_cast<std::size_t>(y) * w + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
      out.label.at(y, x) = inside ? 1 : 0;
    }
  }
  return out;
}

double haar_detail_energy_fraction(const Tensor& image) {
  const WaveletPyramid pyr = dwt2(image, WaveletBasis::haar(), 1);
  const auto energy = [](const Tensor& t) {
    double s = 0.0;
    for (float v : t.data()) s += static_cast<double>(v) * v;
    return s;
  };
  double detail = 0.0;
  for (const auto& band : pyr.details[0]) detail += energy(band);
  const double total = detail + energy(pyr.approx);
  return total > 0.0 ? detail / total : 0.0;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  int line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 'id,split'");
    }
    const std::string id = trim(line.substr(0, comma)), split = trim(line.substr(comma + 1));
    if (header) {
      header = false;
      if (id == "id" && split == "split") continue;
    }
    if (id.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": empty id");
    try {
      m.entries.push_back({id, parse_split(split)});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "id,split\n";
  for (const auto& e : manifest.entries) out << e.id << ',' << to_string(e.split) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Manifest generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");
  Manifest m;
  for (int i = 0; i < spec.n_images; ++i) {
    const std::string id = sample_id("train_", i);
    write_sample(out_dir, id, synthesize_sample(spec, static_cast<std::uint64_t>(i)));
    m.entries.push_back({id, Split::Train});
  }
  for (int i = 0; i < spec.n_test; ++i) {
    const std::string id = sample_id("test_", i);
    write_sample(out_dir, id, synthesize_sample(spec, static_cast<std::uint64_t>(spec.n_images + i)));
    m.entries.push_back({id, Split::Test});
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

Manifest split_dataset(const Manifest& manifest, double labeled_fraction, std::uint64_t seed) {
  if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) {
    throw std::invalid_argument("labeled_fraction must be in [0, 1]");
  }
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split == Split::Train) train.push_back(i);
  }
  Manifest out = manifest;
  if (train.empty()) return out;
  const auto n_labeled = static_cast<std::size_t>(std::llround(labeled_fraction * static_cast<double>(train.size())));
  if (n_labeled == 0) {
    throw std::invalid_argument("labeled_fraction " + std::to_string(labeled_fraction) + " of " +
                                std::to_string(train.size()) + " training images labels none of them");
  }
  Rng rng(derive_seed({seed, kSplitStream}));
  for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[uniform_index(rng, i)]);
  for (std::size_t k = 0; k < train.size(); ++k) {
    out.entries[train[k]].split = k < n_labeled ? Split::Labeled : Split::Unlabeled;
  }
  return out;
}

std::vector<SampleRecord> load_records(const fs::path& dir, const Manifest& manifest, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  std::vector<SampleRecord> records;
  records.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    SampleRecord r;
    r.id = e.id;
    r.split = e.split;
    r.image = load_image(dir / "images" / (e.id + ".pgm"));
    const fs::path label_path = dir / "labels" / (e.id + ".pgm");
    if (fs::exists(label_path)) {
      r.label = load_label(label_path, num_classes);
      if (r.label->height != r.image.dim(1) || r.label->width != r.image.dim(2)) {
        throw std::runtime_error("label of " + e.id + " is " + std::to_string(r.label->height) + "x" +
                                 std::to_string(r.label->width) + " but the image is " + shape_str(r.image.shape()));
      }
    } else if (e.split != Split::Unlabeled) {
      throw std::runtime_error("missing label " + label_path.string() + " for " + to_string(e.split) + " image");
    }
    // The training code must never see labels of unlabeled images.
    if (e.split == Split::Unlabeled) r.label.reset();
    records.push_back(std::move(r));
  }
  return records;
}

DatasetSplits group_splits(std::vector<SampleRecord> records) {
  DatasetSplits s;
  for (auto& r : records) {
    switch (r.split) {
      case Split::Labeled: s.labeled.push_back(std::move(r)); break;
      case Split::Unlabeled: s.unlabeled.push_back(std::move(r)); break;
      case Split::Test: s.test.push_back(std::move(r)); break;
      case Split::Train: throw std::invalid_argument("record " + r.id + " has an unresolved 'train' split");
    }
  }
  return s;
}

Augmentation draw_augmentation(Rng& rng, bool square) {
  Augmentation a;
  a.flip_horizontal = uniform_index(rng, 2) == 1;
  a.flip_vertical = uniform_index(rng, 2) == 1;
  a.quarter_turns = square ? static_cast<int>(uniform_index(rng, 4)) : 2 * static_cast<int>(uniform_index(rng, 2));
  return a;
}

SampleRecord apply_augmentation(const SampleRecord& sample, const Augmentation& aug) {
  const int c = sample.image.dim(0), h = sample.image.dim(1), w = sample.image.dim(2);
  int h_out = 0, w_out = 0;
  const auto src = augmentation_map(h, w, aug, h_out, w_out);
  const std::size_t plane = src.size();
  const auto in = sample.image.data();
  std::vector<float> values(in.size());
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t off = static_cast<std::size_t>(ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) values[off + i] = in[off + src[i]];
  }
  SampleRecord out;
  out.id = sample.id;
  out.split = sample.split;
  out.image = Tensor::from_vector({c, h_out, w_out}, std::move(values));
  if (sample.label) {
    if (sample.label->height != h || sample.label->width != w) {
      throw std::invalid_argument("augment: label and image of " + sample.id + " differ in size");
    }
    LabelMap m(h_out, w_out);
    for (std::size_t i = 0; i < plane; ++i) m.labels[i] = sample.label->labels[src[i]];
    out.label = std::move(m);
  }
  return out;
}

SampleRecord augment(const SampleRecord& sample, Rng& rng) {
  return apply_augmentation(sample, draw_augmentation(rng, sample.image.dim(1) == sample.image.dim(2)));
}

Batch make_batch(std::span<const SampleRecord* const> records, bool with_targets, const BatchOptions& options,
                 Rng& rng) {
  if (records.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Split split = records.front()->split;
  for (const auto* r : records) {
    if (r->split != split) {
      throw std::invalid_argument("make_batch: batch mixes " + to_string(split) + " and " + to_string(r->split) +
                                  " records");
    }
  }
  if (with_targets && split != Split::Labeled && split != Split::Test) {
    throw std::logic_error("make_batch: a " + to_string(split) + " record cannot enter a supervised batch");
  }

  Batch batch;
  std::vector<Tensor> mains, lows, highs;
  std::vector<int> labels;
  int h = 0, w = 0;
  for (const auto* r : records) {
    SampleRecord s = options.augment ? augment(*r, rng) : *r;
    const FusionWeights fw = sample_alpha_beta(rng, options.alpha_range, options.beta_range);
    NetworkInputs in = build_inputs(s.image, fw, options.preprocess);
    mains.push_back(std::move(in.main));
    lows.push_back(std::move(in.low));
    highs.push_back(std::move(in.high));
    batch.weights.push_back(fw);
    if (with_targets) {
      if (!s.label) throw std::invalid_argument("make_batch: record " + s.id + " has no label");
      h = s.label->height;
      w = s.label->width;
      labels.insert(labels.end(), s.label->labels.begin(), s.label->labels.end());
    }
  }
  batch.main = stack_batch(mains);
  batch.low = stack_batch(lows);
  batch.high = stack_batch(highs);
  if (with_targets) {
    for (int v : labels) {
      if (v < 0 || v >= options.num_classes) {
        throw std::invalid_argument("make_batch: label " + std::to_string(v) + " outside [0, num_classes)");
      }
    }
    batch.target = one_hot(labels, static_cast<int>(records.size()), options.num_classes, h, w);
  }
  return batch;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(epoch), stream}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

}  // namespace freqseg
