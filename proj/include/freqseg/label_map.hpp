#pragma once

#include <stdexcept>
#include <vector>

namespace freqseg {

/// Row-major per-pixel class indices.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int h, int w, int fill = 0) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}
  LabelMap(int h, int w, std::vector<int> values) : height(h), width(w), labels(std::move(values)) {
    if (labels.size() != static_cast<std::size_t>(h) * w) throw std::invalid_argument("LabelMap: size mismatch");
  }

  int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

}  // namespace freqseg
