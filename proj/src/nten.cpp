#include "freqseg/nten.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <stdexcept>
#include <string>

namespace freqseg {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'T', 'E', 'N'};
constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("NTEN: truncated stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

std::size_t NtenArray::numel() const {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void write_nten(std::ostream& out, const NtenArray& array) {
  if (array.shape.size() > 255) throw std::invalid_argument("NTEN: more than 255 dimensions");
  const std::size_t n = array.numel();
  const std::size_t have = array.dtype == DType::F32 ? array.f32.size()
                           : array.dtype == DType::U8 ? array.u8.size()
                                                      : array.i64.size();
  if (have != n) {
    throw std::invalid_argument("NTEN: payload has " + std::to_string(have) + " elements, shape needs " +
                                std::to_string(n));
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(out, kVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(array.dtype));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(array.shape.size()));
  for (auto e : array.shape) put_le<std::uint32_t>(out, e);
  switch (array.dtype) {
    case DType::F32:
      for (float v : array.f32) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
      break;
    case DType::U8:
      out.write(reinterpret_cast<const char*>(array.u8.data()), static_cast<std::streamsize>(n));
      break;
    case DType::I64:
      for (auto v : array.i64) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v));
      break;
  }
  if (!out) throw std::runtime_error("NTEN: write failed");
}

NtenArray read_nten(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("NTEN: bad magic");
  const auto version = get_le<std::uint8_t>(in);
  if (version != kVersion) throw std::runtime_error("NTEN: unsupported version " + std::to_string(version));
  const auto dtype = get_le<std::uint8_t>(in);
  if (dtype > 2) throw std::runtime_error("NTEN: unknown dtype " + std::to_string(dtype));
  NtenArray array;
  array.dtype = static_cast<DType>(dtype);
  const auto ndim = get_le<std::uint8_t>(in);
  array.shape.resize(ndim);
  for (auto& e : array.shape) e = get_le<std::uint32_t>(in);
  const std::size_t n = array.numel();
  switch (array.dtype) {
    case DType::F32:
      array.f32.resize(n);
      for (auto& v : array.f32) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
      break;
    case DType::U8:
      array.u8.resize(n);
      in.read(reinterpret_cast<char*>(array.u8.data()), static_cast<std::streamsize>(n));
      if (!in) throw std::runtime_error("NTEN: truncated payload");
      break;
    case DType::I64:
      array.i64.resize(n);
      for (auto& v : array.i64) v = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
      break;
  }
  return array;
}

void save_nten(const std::filesystem::path& path, const NtenArray& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_nten(out, array);
}

NtenArray load_nten(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_nten(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  NtenArray array;
  array.dtype = DType::F32;
  for (int e : t.shape()) array.shape.push_back(static_cast<std::uint32_t>(e));
  array.f32.assign(t.data().begin(), t.data().end());
  save_nten(path, array);
}

Tensor load_tensor(const std::filesystem::path& path) {
  NtenArray array = load_nten(path);
  Shape shape;
  for (auto e : array.shape) shape.push_back(static_cast<int>(e));
  std::vector<float> values;
  switch (array.dtype) {
    case DType::F32:
      values = std::move(array.f32);
      break;
    case DType::U8:
      values.assign(array.u8.begin(), array.u8.end());
      break;
    case DType::I64:
      values.reserve(array.i64.size());
      for (auto v : array.i64) values.push_back(static_cast<float>(v));
      break;
  }
  return Tensor::from_vector(std::move(shape), std::move(values));
}

}  // namespace freqseg
