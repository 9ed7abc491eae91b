#pragma once

// Synthetic blob datasets, the on-disk dataset layout, labeled/unlabeled
// splitting, augmentation and batch assembly.
//
// Layout of a dataset directory:
//   images/<id>.pgm   8-bit grey image
//   labels/<id>.pgm   mask; for two classes any nonzero value is foreground,
//                     otherwise the pixel value is the class index
//   manifest.csv      header "id,split"; split is train, labeled, unlabeled or test

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freqseg/common.hpp"
#include "freqseg/label_map.hpp"
#include "freqseg/preprocess.hpp"
#include "freqseg/tensor.hpp"
#include "freqseg/wavelet.hpp"

namespace freqseg {

enum class Split { Train, Labeled, Unlabeled, Test };

Split parse_split(std::string_view text);
std::string to_string(Split split);

struct SampleRecord {
  std::string id;
  Tensor image;                     // [C,H,W] in [0,1]
  std::optional<LabelMap> label;
  Split split = Split::Train;
};

struct SynthSpec {
  int n_images = 200;  // training images
  int n_test = 0;      // additional test images
  int height = 64;
  int width = 64;
  int blob_min = 1;
  int blob_max = 3;
  /// 0 gives smooth, high-frequency-poor images (soft blob edges, no
  /// texture); 1 gives sharp edges and strong sinusoidal texture.
  double texture_amplitude = 0.8;
  double noise_sigma = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthSample {
  Tensor image;  // [1,H,W]
  LabelMap label;
};

/// Deterministic image number `index` of the spec's sequence.
SynthSample synthesize_sample(const SynthSpec& spec, std::uint64_t index);

/// Fraction of energy in the 1-level Haar detail bands (sum over all bands of
/// squared coefficients, relative to the image's squared sum).
double haar_detail_energy_fraction(const Tensor& image);

struct ManifestEntry {
  std::string id;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Writes images, masks and manifest.csv into `out_dir`; returns the manifest.
Manifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Turns every `train` entry into `labeled` or `unlabeled` by a seeded
/// shuffle; round(fraction * n_train) entries become labeled. Other entries
/// and the entry order are kept.
Manifest split_dataset(const Manifest& manifest, double labeled_fraction, std::uint64_t seed);

/// Loads all records listed in `manifest` from `dir`, in manifest order.
std::vector<SampleRecord> load_records(const std::filesystem::path& dir, const Manifest& manifest, int num_classes);

struct DatasetSplits {
  std::vector<SampleRecord> labeled;
  std::vector<SampleRecord> unlabeled;
  std::vector<SampleRecord> test;
};

/// Groups split-resolved records; `train` entries are rejected.
DatasetSplits group_splits(std::vector<SampleRecord> records);

struct Augmentation {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int quarter_turns = 0;  // counter-clockwise
};

/// Flips, then rotation. Non-square images only draw 0 or 2 quarter turns.
Augmentation draw_augmentation(Rng& rng, bool square);
SampleRecord apply_augmentation(const SampleRecord& sample, const Augmentation& aug);
SampleRecord augment(const SampleRecord& sample, Rng& rng);

struct BatchOptions {
  PreprocessOptions preprocess;
  Range alpha_range{0.4, 0.8};
  Range beta_range{0.4, 0.8};
  bool augment = true;
  int num_classes = 2;
};

struct Batch {
  Tensor main;    // [N,C,H,W]
  Tensor low;
  Tensor high;
  Tensor target;  // one-hot [N,K,H,W]; only for labeled batches
  std::vector<FusionWeights> weights;
};

/// Per sample: augment, frequency split, draw alpha/beta, fuse, normalize.
/// All records must share one split. `with_targets` demands labeled records
/// (split `labeled`, or `test` for evaluation batches).
Batch make_batch(std::span<const SampleRecord* const> records, bool with_targets, const BatchOptions& options,
                 Rng& rng);

/// Seeded permutation of [0, n) for one epoch and stream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch, std::uint64_t stream);

}  // namespace freqseg
