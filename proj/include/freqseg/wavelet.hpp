#pragma once

// Separable multi-level 2D discrete wavelet transform and the low/high
// frequency image pair built from it.
//
// Filters are stored in correlation order: a[k] = sum_j lo_d[j] * x[2k + j - (L - 2)]
// over a half-sample symmetric extension of x. A length-n signal yields
// floor((n + L - 1) / 2) coefficients per band, so odd extents gain one
// reflected sample and longer filters gain the extra border coefficients
// needed for exact reconstruction. Synthesis filters are in scatter form:
// x[2k + j - (L - 2)] += lo_r[j] * a[k] + hi_r[j] * d[k].

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freqseg/common.hpp"
#include "freqseg/tensor.hpp"

namespace freqseg {

struct WaveletBasis {
  std::string name;
  std::vector<double> lo_d;
  std::vector<double> hi_d;
  std::vector<double> lo_r;
  std::vector<double> hi_r;

  /// Orthonormal Haar: lo_d = [1/sqrt2, 1/sqrt2], hi_d = [1/sqrt2, -1/sqrt2].
  static WaveletBasis haar();
  /// Orthonormal Daubechies with two vanishing moments (4 taps).
  static WaveletBasis db2();
  /// "haar" or "db2".
  static WaveletBasis by_name(std::string_view name);

  std::size_t length() const { return lo_d.size(); }
  void validate() const;
};

struct WaveletPyramid {
  int levels = 0;
  /// Input extent (height, width) of each level; extents[0] is the image.
  std::vector<std::array<int, 2>> extents;
  /// Coarsest approximation, [C, h, w].
  Tensor approx;
  /// details[l] = {LH, HL, HH} at level l (0 = finest). LH is lowpass along
  /// rows and highpass along columns; HL the converse.
  std::vector<std::array<Tensor, 3>> details;
};

/// Forward transform of a [C,H,W] image, channels independently.
WaveletPyramid dwt2(const Tensor& image, const WaveletBasis& basis, int levels);

/// Inverse of dwt2. The pyramid must come from dwt2 with the same basis;
/// a basis mismatch cannot be detected and silently gives a wrong image.
Tensor idwt2(const WaveletPyramid& pyramid, const WaveletBasis& basis);

/// Pyramid with every coefficient zeroed (same extents as `like`).
WaveletPyramid zeros_like(const WaveletPyramid& like);

struct FrequencySplit {
  Tensor low;   // I_L: reconstruction from the approximation band alone
  Tensor high;  // I_H: reconstruction from the detail bands alone
};

FrequencySplit frequency_split(const Tensor& image, const WaveletBasis& basis, int levels);

struct FusedPair {
  Tensor low;   // x^L = I_L + alpha * I_H
  Tensor high;  // x^H = I_H + beta * I_L
};

/// Image-level complementary fusion of the two frequency images.
FusedPair complementary_fuse(const Tensor& low, const Tensor& high, double alpha, double beta);

struct FusionWeights {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Independent uniform draws of alpha in `alpha_range` and beta in `beta_range`.
FusionWeights sample_alpha_beta(Rng& rng, const Range& alpha_range, const Range& beta_range);

}  // namespace freqseg
