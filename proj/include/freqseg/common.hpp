#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace freqseg {

using Rng = std::mt19937_64;

/// Closed interval [lo, hi] for randomly drawn weights.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double midpoint() const { return 0.5 * (lo + hi); }
  /// Throws std::invalid_argument unless 0 <= lo <= hi.
  void validate(std::string_view name) const;
  bool operator==(const Range&) const = default;
};

/// Uniform double in [0, 1) with 53 random bits; stable across standard libraries.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Order-dependent hash of a key tuple (splitmix64 finalizer chain); used to
/// derive per-epoch and per-step seeds.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys);

void log_warn(std::string_view message);
void log_info(std::string_view message);

}  // namespace freqseg
