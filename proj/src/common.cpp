#include "freqseg/common.hpp"

#include <iostream>
#include <stdexcept>

namespace freqseg {

void Range::validate(std::string_view name) const {
  if (!(lo >= 0.0) || !(hi >= lo)) {
    throw std::invalid_argument(std::string(name) + ": invalid range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "], need 0 <= a <= b");
  }
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return lo + (hi - lo) * uniform01(rng);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased and reproducible.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t k : keys) {
    std::uint64_t z = h ^ (k + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    h = z ^ (z >> 31);
  }
  return h;
}

void log_warn(std::string_view message) { std::cerr << "warning: " << message << '\n'; }
void log_info(std::string_view message) { std::cerr << message << '\n'; }

}  // namespace freqseg
