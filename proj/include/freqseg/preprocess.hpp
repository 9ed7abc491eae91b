#pragma once

// Turns a raw image into the three network inputs (raw, LF-fused, HF-fused).

#include <string>
#include <string_view>
#include <vector>

#include "freqseg/tensor.hpp"
#include "freqseg/wavelet.hpp"

namespace freqseg {

/// Which images feed the LF and HF networks. The main network always sees the raw image.
enum class InputMode {
  Fused,     // x^L and x^H
  RawAll,    // raw image into all three networks
  LowOnly,   // x^L into the LF network, raw into the HF network
  HighOnly,  // raw into the LF network, x^H into the HF network
};

InputMode parse_input_mode(std::string_view text);
std::string to_string(InputMode mode);

struct PreprocessOptions {
  WaveletBasis basis = WaveletBasis::haar();
  int levels = 1;
  InputMode mode = InputMode::Fused;
};

struct NetworkInputs {
  Tensor main;  // [C,H,W]
  Tensor low;
  Tensor high;
};

/// Largest |z| kept after normalization.
inline constexpr float kNormalizedClip = 6.0f;

/// Per-channel zero-mean/unit-variance of a [C,H,W] image, clipped to
/// +-kNormalizedClip. Flat channels become zero.
Tensor normalize_channels(const Tensor& image);

/// Frequency split, complementary fusion with `weights`, then per-channel
/// normalization of each of the three images.
NetworkInputs build_inputs(const Tensor& image, const FusionWeights& weights, const PreprocessOptions& options);

}  // namespace freqseg

namespace freqseg {

/// Stacks equally shaped [C,H,W] images into [N,C,H,W].
Tensor stack_batch(const std::vector<Tensor>& images);

}  // namespace freqseg
