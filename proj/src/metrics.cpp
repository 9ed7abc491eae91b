#include "freqseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "freqseg/common.hpp"

namespace freqseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of a sampled function over its finite sites
// (lower envelope of parabolas, Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[static_cast<std::size_t>(q)];
    if (fq == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const int r = v[static_cast<std::size_t>(k)];
      s = ((fq + static_cast<double>(q) * q) - (f[static_cast<std::size_t>(r)] + static_cast<double>(r) * r)) /
          (2.0 * (q - r));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
      s = -kInf;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int r = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = static_cast<double>(q - r) * (q - r) + f[static_cast<std::size_t>(r)];
  }
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Overlap overlap_metrics(const LabelMap& pred, const LabelMap& gt, int foreground) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("overlap_metrics: prediction and ground truth sizes differ");
  }
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] == foreground, g = gt.labels[i] == foreground;
    np += p;
    ng += g;
    inter += p && g;
  }
  if (np == 0 && ng == 0) {
    log_info("overlap_metrics: foreground absent from both maps, scored as perfect");
    return {100.0, 100.0};
  }
  const double uni = static_cast<double>(np + ng - inter);
  return {100.0 * static_cast<double>(inter) / uni, 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng)};
}

std::vector<Pixel> surface_extract(const LabelMap& mask, int foreground) {
  std::vector<Pixel> out;
  auto fg = [&](int y, int x) {
    return y >= 0 && y < mask.height && x >= 0 && x < mask.width && mask.at(y, x) == foreground;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!fg(y, x)) continue;
      if (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) out.push_back({y, x});
    }
  }
  return out;
}

std::vector<double> directed_distances(const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
  if (to.empty()) throw std::invalid_argument("directed_distances: target surface is empty");
  int y0 = std::numeric_limits<int>::max(), x0 = y0, y1 = std::numeric_limits<int>::min(), x1 = y1;
  for (const auto* set : {&from, &to}) {
    for (const auto& p : *set) {
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
    }
  }
  const int h = y1 - y0 + 1, w = x1 - x0 + 1;
  std::vector<double> grid(static_cast<std::size_t>(h) * w, kInf);
  for (const auto& p : to) grid[static_cast<std::size_t>(p.y - y0) * w + (p.x - x0)] = 0.0;

  const int longest = std::max(h, w);
  std::vector<double> f(static_cast<std::size_t>(longest)), d(static_cast<std::size_t>(longest));
  std::vector<int> v(static_cast<std::size_t>(longest));
  std::vector<double> z(static_cast<std::size_t>(longest) + 1);
  // Columns, then rows.
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
  }
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto& p : from) out.push_back(std::sqrt(grid[static_cast<std::size_t>(p.y - y0) * w + (p.x - x0)]));
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

SurfaceDistances surface_distances(const std::vector<Pixel>& a, const std::vector<Pixel>& b, double spacing) {
  if (a.empty() || b.empty()) throw std::invalid_argument("surface_distances: empty surface");
  std::vector<double> ab = directed_distances(a, b), ba = directed_distances(b, a);
  for (double& v : ab) v *= spacing;
  for (double& v : ba) v *= spacing;
  double total = 0.0;
  for (double v : ab) total += v;
  for (double v : ba) total += v;
  SurfaceDistances out;
  out.asd = total / static_cast<double>(ab.size() + ba.size());
  out.hd95 = std::max(percentile(std::move(ab), 95.0), percentile(std::move(ba), 95.0));
  return out;
}

ImageMetrics evaluate_image(const std::string& id, const LabelMap& pred, const LabelMap& gt, int foreground,
                            double spacing) {
  ImageMetrics m;
  m.id = id;
  const Overlap o = overlap_metrics(pred, gt, foreground);
  m.jaccard = o.jaccard;
  m.dice = o.dice;
  const auto sp = surface_extract(pred, foreground), sg = surface_extract(gt, foreground);
  if (sp.empty() && sg.empty()) {
    m.asd = 0.0;
    m.hd95 = 0.0;
  } else if (sp.empty() || sg.empty()) {
    log_warn("image " + id + ": empty surface, ASD/95HD reported as missing");
    m.asd = m.hd95 = std::numeric_limits<double>::quiet_NaN();
  } else {
    const SurfaceDistances d = surface_distances(sp, sg, spacing);
    m.asd = d.asd;
    m.hd95 = d.hd95;
  }
  return m;
}

ImageMetrics MetricsReport::aggregate() const {
  ImageMetrics mean;
  mean.id = "MEAN";
  std::size_t n_dist = 0;
  for (const auto& m : per_image) {
    mean.jaccard += m.jaccard;
    mean.dice += m.dice;
    if (!std::isnan(m.asd) && !std::isnan(m.hd95)) {
      mean.asd += m.asd;
      mean.hd95 += m.hd95;
      ++n_dist;
    }
  }
  if (!per_image.empty()) {
    mean.jaccard /= static_cast<double>(per_image.size());
    mean.dice /= static_cast<double>(per_image.size());
  }
  if (n_dist > 0) {
    mean.asd /= static_cast<double>(n_dist);
    mean.hd95 /= static_cast<double>(n_dist);
  } else {
    mean.asd = mean.hd95 = std::numeric_limits<double>::quiet_NaN();
  }
  return mean;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "id,jaccard,dice,asd,hd95\n";
  auto row = [&](const ImageMetrics& m) {
    out << m.id << ',' << format_value(m.jaccard) << ',' << format_value(m.dice) << ',' << format_value(m.asd) << ','
        << format_value(m.hd95) << '\n';
  };
  for (const auto& m : report.per_image) row(m);
  row(report.aggregate());
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_metrics_csv(out, report);
}

}  // namespace freqseg
