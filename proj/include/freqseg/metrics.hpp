#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "freqseg/label_map.hpp"

namespace freqseg {

struct Overlap {
  double jaccard = 0.0;  // percent
  double dice = 0.0;     // percent
};

/// Jaccard and Dice of the `foreground` class, in percent. If the class is
/// absent from both maps the result is (100, 100).
Overlap overlap_metrics(const LabelMap& pred, const LabelMap& gt, int foreground = 1);

struct Pixel {
  int y = 0;
  int x = 0;
  bool operator==(const Pixel&) const = default;
};

/// Foreground pixels of `mask == foreground` with at least one 4-neighbour
/// outside the class; pixels beyond the image border count as background.
/// Row-major order.
std::vector<Pixel> surface_extract(const LabelMap& mask, int foreground = 1);

struct SurfaceDistances {
  double asd = 0.0;   // mean of all nearest distances, pooled over both directions
  double hd95 = 0.0;  // max of the two directed 95th percentiles
};

/// Both surfaces must be non-empty. Distances are Euclidean, scaled by `spacing`.
SurfaceDistances surface_distances(const std::vector<Pixel>& a, const std::vector<Pixel>& b, double spacing = 1.0);

/// Linear-interpolated percentile (q in [0,100]) of unsorted values.
double percentile(std::vector<double> values, double q);

/// Distance from each point of `from` to its nearest point of `to`, by an
/// exact Euclidean distance transform over the joint bounding box.
std::vector<double> directed_distances(const std::vector<Pixel>& from, const std::vector<Pixel>& to);

struct ImageMetrics {
  std::string id;
  double jaccard = 0.0;
  double dice = 0.0;
  double asd = 0.0;   // NaN when a surface is empty
  double hd95 = 0.0;  // NaN when a surface is empty
};

ImageMetrics evaluate_image(const std::string& id, const LabelMap& pred, const LabelMap& gt, int foreground = 1,
                            double spacing = 1.0);

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  /// Means over images; ASD/HD95 skip images where they are missing.
  ImageMetrics aggregate() const;
};

/// Header `id,jaccard,dice,asd,hd95`, one row per image in order, then a MEAN row.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace freqseg
