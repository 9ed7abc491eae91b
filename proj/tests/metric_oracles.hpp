#pragma once

// Brute-force reference implementations of the segmentation metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "freqseg/common.hpp"
#include "freqseg/label_map.hpp"
#include "freqseg/metrics.hpp"

namespace testutil {

struct OverlapCounts {
  long inter = 0;
  long uni = 0;
  long p = 0;
  long g = 0;
};

inline OverlapCounts count_overlap(const freqseg::LabelMap& pred, const freqseg::LabelMap& gt, int fg = 1) {
  OverlapCounts c;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool a = pred.labels[i] == fg, b = gt.labels[i] == fg;
    c.inter += a && b;
    c.uni += a || b;
    c.p += a;
    c.g += b;
  }
  return c;
}

inline std::vector<freqseg::Pixel> brute_surface(const freqseg::LabelMap& m, int fg = 1) {
  std::vector<freqseg::Pixel> s;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(y, x) != fg) continue;
      bool edge = false;
      const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width || m.at(yy, xx) != fg) edge = true;
      }
      if (edge) s.push_back({y, x});
    }
  }
  return s;
}

inline std::vector<double> brute_directed(const std::vector<freqseg::Pixel>& from,
                                          const std::vector<freqseg::Pixel>& to) {
  std::vector<double> d;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, std::hypot(double(p.y - q.y), double(p.x - q.x)));
    d.push_back(best);
  }
  return d;
}

inline double brute_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double rank = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline freqseg::SurfaceDistances brute_surface_distances(const std::vector<freqseg::Pixel>& a,
                                                         const std::vector<freqseg::Pixel>& b) {
  const auto ab = brute_directed(a, b), ba = brute_directed(b, a);
  double s = 0;
  for (double v : ab) s += v;
  for (double v : ba) s += v;
  return {s / static_cast<double>(ab.size() + ba.size()),
          std::max(brute_percentile(ab, 95.0), brute_percentile(ba, 95.0))};
}

// Random blobby mask: a union of a few rectangles and discs, or pure noise.
inline freqseg::LabelMap random_mask(freqseg::Rng& rng, int h, int w) {
  freqseg::LabelMap m(h, w, 0);
  if (freqseg::uniform01(rng) < 0.2) {
    const double density = freqseg::uniform(rng, 0.05, 0.6);
    for (int& v : m.labels) v = freqseg::uniform01(rng) < density;
    return m;
  }
  const int shapes = 1 + static_cast<int>(freqseg::uniform_index(rng, 3));
  for (int s = 0; s < shapes; ++s) {
    const double cy = freqseg::uniform(rng, 0, h), cx = freqseg::uniform(rng, 0, w);
    const double r = freqseg::uniform(rng, 1, std::max(2.0, std::min(h, w) / 3.0));
    const bool disc = freqseg::uniform01(rng) < 0.5;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dy = y - cy, dx = x - cx;
        const bool inside = disc ? dy * dy + dx * dx <= r * r : std::abs(dy) <= r && std::abs(dx) <= 0.6 * r;
        if (inside) m.at(y, x) = 1;
      }
    }
  }
  return m;
}

}  // namespace testutil
