#include "freqseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace freqseg {

InputMode parse_input_mode(std::string_view text) {
  if (text == "fused") return InputMode::Fused;
  if (text == "raw-all") return InputMode::RawAll;
  if (text == "lf-only") return InputMode::LowOnly;
  if (text == "hf-only") return InputMode::HighOnly;
  throw std::invalid_argument("unknown input_mode '" + std::string(text) +
                              "' (expected fused, raw-all, lf-only or hf-only)");
}

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::Fused: return "fused";
    case InputMode::RawAll: return "raw-all";
    case InputMode::LowOnly: return "lf-only";
    case InputMode::HighOnly: return "hf-only";
  }
  return "fused";
}

Tensor normalize_channels(const Tensor& image) {
  if (!image.defined() || image.ndim() != 3) throw std::invalid_argument("normalize_channels: expected [C,H,W]");
  const int c = image.dim(0);
  const std::size_t hw = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  const auto x = image.data();
  std::vector<float> out(x.size());
  for (int k = 0; k < c; ++k) {
    const float* p = x.data() + k * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    const double mu = s / static_cast<double>(hw);
    double ss = 0.0;
    for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
    const double sd = std::sqrt(ss / static_cast<double>(hw));
    const double inv = sd > 1e-8 ? 1.0 / sd : 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      out[k * hw + i] = std::clamp(static_cast<float>((p[i] - mu) * inv), -kNormalizedClip, kNormalizedClip);
    }
  }
  return Tensor::from_vector(image.shape(), std::move(out));
}

NetworkInputs build_inputs(const Tensor& image, const FusionWeights& weights, const PreprocessOptions& options) {
  NetworkInputs in;
  in.main = normalize_channels(image);
  if (options.mode == InputMode::RawAll) {
    in.low = in.main;
    in.high = in.main;
    return in;
  }
  const FrequencySplit split = frequency_split(image, options.basis, options.levels);
  const FusedPair fused = complementary_fuse(split.low, split.high, weights.alpha, weights.beta);
  in.low = options.mode == InputMode::HighOnly ? in.main : normalize_channels(fused.low);
  in.high = options.mode == InputMode::LowOnly ? in.main : normalize_channels(fused.high);
  return in;
}

}  // namespace freqseg

namespace freqseg {

Tensor stack_batch(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("stack_batch: no images");
  const Shape& s = images.front().shape();
  if (s.size() != 3) throw std::invalid_argument("stack_batch: expected [C,H,W] images");
  std::vector<float> values;
  values.reserve(images.size() * images.front().numel());
  for (const auto& img : images) {
    if (img.shape() != s) {
      throw std::invalid_argument("stack_batch: shape " + shape_str(img.shape()) + " differs from " + shape_str(s));
    }
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return Tensor::from_vector({static_cast<int>(images.size()), s[0], s[1], s[2]}, std::move(values));
}

}  // namespace freqseg
