#pragma once

// "NTEN v1" tensor container:
//   bytes 0..3  magic "NTEN"
//   u8          version (1)
//   u8          dtype (0 = f32, 1 = u8, 2 = i64)
//   u8          ndim
//   ndim x u32  extents, little-endian
//   payload     row-major, little-endian

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "freqseg/tensor.hpp"

namespace freqseg {

enum class DType : std::uint8_t { F32 = 0, U8 = 1, I64 = 2 };

struct NtenArray {
  DType dtype = DType::F32;
  std::vector<std::uint32_t> shape;
  // Exactly one of these holds the payload, selected by dtype.
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;
  std::vector<std::int64_t> i64;

  std::size_t numel() const;
};

void write_nten(std::ostream& out, const NtenArray& array);
NtenArray read_nten(std::istream& in);

void save_nten(const std::filesystem::path& path, const NtenArray& array);
NtenArray load_nten(const std::filesystem::path& path);

/// Stores a tensor's values as f32.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
/// Loads any dtype, converting to float.
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace freqseg
