#pragma once

// Netpbm reading (P2, P5 grey; P3, P6 colour; 8- or 16-bit) and 8-bit P5 writing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "freqseg/tensor.hpp"

namespace freqseg {

struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

PnmImage read_pnm(std::istream& in);
PnmImage read_pnm(const std::filesystem::path& path);

void write_pgm(std::ostream& out, int width, int height, std::span<const std::uint8_t> pixels);
void write_pgm(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels);

/// [C,H,W] tensor with samples scaled to [0,1].
Tensor pnm_to_tensor(const PnmImage& image);

/// Writes channel 0 of a [C,H,W] or [H,W] tensor as an 8-bit preview,
/// min-max scaled (a constant image maps to 0).
void write_preview_pgm(const std::filesystem::path& path, const Tensor& image);

/// Writes values in [0,1] as 8-bit grey, clamped and rounded.
void write_unit_pgm(const std::filesystem::path& path, const Tensor& image);

/// Loads a .pgm/.ppm/.pnm image as [C,H,W] in [0,1], or a .nten tensor
/// ([H,W] is promoted to [1,H,W]).
Tensor load_image(const std::filesystem::path& path);

}  // namespace freqseg
