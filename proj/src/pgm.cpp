#include "freqseg/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "freqseg/nten.hpp"

namespace freqseg {

namespace {

// Skips whitespace and '#' comments between header tokens.
int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw std::runtime_error("PNM: malformed header");
  return value;
}

std::pair<int, int> image_extent(const Tensor& image) {
  if (image.ndim() == 2) return {image.dim(0), image.dim(1)};
  if (image.ndim() == 3) return {image.dim(1), image.dim(2)};
  throw std::invalid_argument("expected a [C,H,W] or [H,W] image, got " + shape_str(image.shape()));
}

}  // namespace

PnmImage read_pnm(std::istream& in) {
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (!in || p != 'P' || std::string("2356").find(kind) == std::string::npos) {
    throw std::runtime_error("PNM: unsupported or missing magic (P2/P3/P5/P6 accepted)");
  }
  PnmImage img;
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  img.maxval = read_header_int(in);
  if (img.width == 0 || img.height == 0) throw std::runtime_error("PNM: zero extent");
  if (img.maxval == 0 || img.maxval > 65535) throw std::runtime_error("PNM: maxval out of range");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (kind == '2' || kind == '3') {
    for (auto& s : img.samples) {
      int v = -1;
      in >> v;
      if (!in || v < 0 || v > img.maxval) throw std::runtime_error("PNM: bad ASCII sample");
      s = static_cast<std::uint16_t>(v);
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw std::runtime_error("PNM: truncated raster");
  for (std::size_t i = 0; i < n; ++i) {
    img.samples[i] = wide ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
    if (img.samples[i] > img.maxval) throw std::runtime_error("PNM: sample exceeds maxval");
  }
  return img;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_pnm(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_pgm(std::ostream& out, int width, int height, std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("write_pgm: pixel count does not match extent");
  }
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed");
}

void write_pgm(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pgm(out, width, height, pixels);
}

Tensor pnm_to_tensor(const PnmImage& image) {
  const std::size_t hw = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> values(hw * image.channels);
  const float inv = 1.0f / static_cast<float>(image.maxval);
  for (std::size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < image.channels; ++c) {
      values[c * hw + p] = image.samples[p * image.channels + c] * inv;
    }
  }
  return Tensor::from_vector({image.channels, image.height, image.width}, std::move(values));
}

void write_preview_pgm(const std::filesystem::path& path, const Tensor& image) {
  const auto [h, w] = image_extent(image);
  const auto plane = image.data().subspan(0, static_cast<std::size_t>(h) * w);
  const auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
  const float lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<std::uint8_t> px(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    px[i] = range > 0 ? static_cast<std::uint8_t>(std::lround((plane[i] - lo) / range * 255.0f)) : 0;
  }
  write_pgm(path, w, h, px);
}

void write_unit_pgm(const std::filesystem::path& path, const Tensor& image) {
  const auto [h, w] = image_extent(image);
  const auto plane = image.data().subspan(0, static_cast<std::size_t>(h) * w);
  std::vector<std::uint8_t> px(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(plane[i], 0.0f, 1.0f) * 255.0f));
  }
  write_pgm(path, w, h, px);
}

Tensor load_image(const std::filesystem::path& path) {
  if (path.extension() == ".nten") {
    Tensor t = load_tensor(path);
    if (t.ndim() == 2) return reshape(t, {1, t.dim(0), t.dim(1)});
    if (t.ndim() != 3) throw std::runtime_error(path.string() + ": expected [C,H,W] or [H,W] tensor");
    return t;
  }
  return pnm_to_tensor(read_pnm(path));
}

}  // namespace freqseg
