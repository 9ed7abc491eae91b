#include "freqseg/wavelet.hpp"

#include <cmath>
#include <stdexcept>

namespace freqseg {

namespace {

int reflect(int t, int n) {
  const int period = 2 * n;
  int m = t % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

int coeff_count(int n, std::size_t taps) { return (n + static_cast<int>(taps) - 1) / 2; }

// Strided 1-D analysis of n samples into K lowpass and K highpass coefficients.
void analyze(const double* x, int n, std::ptrdiff_t xs, const WaveletBasis& basis, double* lo, double* hi,
             std::ptrdiff_t os) {
  const int taps = static_cast<int>(basis.length());
  const int k_count = coeff_count(n, basis.length());
  for (int k = 0; k < k_count; ++k) {
    double sa = 0.0, sd = 0.0;
    for (int j = 0; j < taps; ++j) {
      const double v = x[reflect(2 * k + j - (taps - 2), n) * xs];
      sa += basis.lo_d[static_cast<std::size_t>(j)] * v;
      sd += basis.hi_d[static_cast<std::size_t>(j)] * v;
    }
    lo[k * os] = sa;
    hi[k * os] = sd;
  }
}

void synthesize(const double* lo, const double* hi, int k_count, std::ptrdiff_t is, const WaveletBasis& basis,
                double* x, int n, std::ptrdiff_t xs) {
  const int taps = static_cast<int>(basis.length());
  for (int t = 0; t < n; ++t) x[t * xs] = 0.0;
  for (int k = 0; k < k_count; ++k) {
    const double a = lo[k * is], d = hi[k * is];
    for (int j = 0; j < taps; ++j) {
      const int t = 2 * k + j - (taps - 2);
      if (t < 0 || t >= n) continue;
      x[t * xs] += basis.lo_r[static_cast<std::size_t>(j)] * a + basis.hi_r[static_cast<std::size_t>(j)] * d;
    }
  }
}

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  Plane() = default;
  Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0.0) {}
  double* row(int y) { return v.data() + static_cast<std::size_t>(y) * w; }
};

struct Bands {
  Plane ll, lh, hl, hh;
};

Bands analyze2(const Plane& x, const WaveletBasis& basis) {
  const int kw = coeff_count(x.w, basis.length());
  const int kh = coeff_count(x.h, basis.length());
  Plane row_lo(x.h, kw), row_hi(x.h, kw);
  for (int y = 0; y < x.h; ++y) {
    analyze(x.v.data() + static_cast<std::size_t>(y) * x.w, x.w, 1, basis, row_lo.row(y), row_hi.row(y), 1);
  }
  Bands b{Plane(kh, kw), Plane(kh, kw), Plane(kh, kw), Plane(kh, kw)};
  for (int c = 0; c < kw; ++c) {
    analyze(row_lo.v.data() + c, x.h, kw, basis, b.ll.v.data() + c, b.lh.v.data() + c, kw);
    analyze(row_hi.v.data() + c, x.h, kw, basis, b.hl.v.data() + c, b.hh.v.data() + c, kw);
  }
  return b;
}

Plane synthesize2(const Bands& b, int h, int w, const WaveletBasis& basis) {
  const int kh = b.ll.h, kw = b.ll.w;
  Plane row_lo(h, kw), row_hi(h, kw);
  for (int c = 0; c < kw; ++c) {
    synthesize(b.ll.v.data() + c, b.lh.v.data() + c, kh, kw, basis, row_lo.v.data() + c, h, kw);
    synthesize(b.hl.v.data() + c, b.hh.v.data() + c, kh, kw, basis, row_hi.v.data() + c, h, kw);
  }
  Plane x(h, w);
  for (int y = 0; y < h; ++y) synthesize(row_lo.row(y), row_hi.row(y), kw, 1, basis, x.row(y), w, 1);
  return x;
}

Plane plane_of(const Tensor& t, int channel) {
  Plane p(t.dim(1), t.dim(2));
  const auto src = t.data().subspan(static_cast<std::size_t>(channel) * p.v.size(), p.v.size());
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = src[i];
  return p;
}

Tensor stack_planes(const std::vector<Plane>& planes) {
  const int h = planes.front().h, w = planes.front().w;
  std::vector<float> values;
  values.reserve(planes.size() * static_cast<std::size_t>(h) * w);
  for (const auto& p : planes) {
    for (double v : p.v) values.push_back(static_cast<float>(v));
  }
  return Tensor::from_vector({static_cast<int>(planes.size()), h, w}, std::move(values));
}

void require_band_shape(const Tensor& t, int channels, int h, int w, const char* what) {
  if (!t.defined() || t.ndim() != 3 || t.dim(0) != channels || t.dim(1) != h || t.dim(2) != w) {
    throw std::invalid_argument(std::string("idwt2: ") + what + " band has shape " +
                                (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")) + ", expected " +
                                shape_str({channels, h, w}));
  }
}

}  // namespace

WaveletBasis WaveletBasis::haar() {
  const double s = 1.0 / std::sqrt(2.0);
  return WaveletBasis{"haar", {s, s}, {s, -s}, {s, s}, {s, -s}};
}

WaveletBasis WaveletBasis::db2() {
  const double r3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
  const std::vector<double> h{(1 + r3) / d, (3 + r3) / d, (3 - r3) / d, (1 - r3) / d};
  // Quadrature mirror: g[j] = (-1)^j h[L-1-j].
  const std::vector<double> g{h[3], -h[2], h[1], -h[0]};
  return WaveletBasis{"db2", h, g, h, g};
}

WaveletBasis WaveletBasis::by_name(std::string_view name) {
  if (name == "haar") return haar();
  if (name == "db2") return db2();
  throw std::invalid_argument("unknown wavelet basis '" + std::string(name) + "' (expected haar or db2)");
}

void WaveletBasis::validate() const {
  const std::size_t n = lo_d.size();
  if (n < 2 || n % 2 != 0 || hi_d.size() != n || lo_r.size() != n || hi_r.size() != n) {
    throw std::invalid_argument("wavelet basis '" + name + "': filters must share an even length >= 2");
  }
}

WaveletPyramid dwt2(const Tensor& image, const WaveletBasis& basis, int levels) {
  basis.validate();
  if (!image.defined() || image.ndim() != 3) {
    throw std::invalid_argument("dwt2: expected a [C,H,W] image, got " +
                                (image.defined() ? shape_str(image.shape()) : std::string("<undefined>")));
  }
  if (levels < 1) throw std::invalid_argument("dwt2: levels must be >= 1");
  const int channels = image.dim(0);
  if (image.dim(1) < (1 << levels) || image.dim(2) < (1 << levels)) {
    throw std::invalid_argument("dwt2: image " + shape_str(image.shape()) + " too small for " +
                                std::to_string(levels) + " levels (need H,W >= " + std::to_string(1 << levels) +
                                ")");
  }

  WaveletPyramid pyr;
  pyr.levels = levels;
  std::vector<Plane> current;
  for (int c = 0; c < channels; ++c) current.push_back(plane_of(image, c));
  for (int l = 0; l < levels; ++l) {
    const int h = current.front().h, w = current.front().w;
    if (h < 2 || w < 2) {
      throw std::invalid_argument("dwt2: level " + std::to_string(l + 1) + " input " + std::to_string(h) + "x" +
                                  std::to_string(w) + " is smaller than the filter support");
    }
    pyr.extents.push_back({h, w});
    std::vector<Plane> ll, lh, hl, hh;
    for (const auto& p : current) {
      Bands b = analyze2(p, basis);
      ll.push_back(std::move(b.ll));
      lh.push_back(std::move(b.lh));
      hl.push_back(std::move(b.hl));
      hh.push_back(std::move(b.hh));
    }
    pyr.details.push_back({stack_planes(lh), stack_planes(hl), stack_planes(hh)});
    current = std::move(ll);
  }
  pyr.approx = stack_planes(current);
  return pyr;
}

Tensor idwt2(const WaveletPyramid& pyramid, const WaveletBasis& basis) {
  basis.validate();
  if (pyramid.levels < 1 || static_cast<int>(pyramid.extents.size()) != pyramid.levels ||
      static_cast<int>(pyramid.details.size()) != pyramid.levels || !pyramid.approx.defined()) {
    throw std::invalid_argument("idwt2: inconsistent pyramid bookkeeping");
  }
  const int channels = pyramid.approx.dim(0);
  std::vector<Plane> current;
  for (int c = 0; c < channels; ++c) current.push_back(plane_of(pyramid.approx, c));
  for (int l = pyramid.levels - 1; l >= 0; --l) {
    const auto [h, w] = pyramid.extents[static_cast<std::size_t>(l)];
    const int kh = coeff_count(h, basis.length()), kw = coeff_count(w, basis.length());
    if (l == pyramid.levels - 1) {
      require_band_shape(pyramid.approx, channels, kh, kw, "approximation");
    } else if (pyramid.extents[static_cast<std::size_t>(l) + 1] != std::array<int, 2>{kh, kw}) {
      throw std::invalid_argument("idwt2: level extents do not chain");
    }
    const auto& det = pyramid.details[static_cast<std::size_t>(l)];
    require_band_shape(det[0], channels, kh, kw, "LH");
    require_band_shape(det[1], channels, kh, kw, "HL");
    require_band_shape(det[2], channels, kh, kw, "HH");
    std::vector<Plane> next;
    for (int c = 0; c < channels; ++c) {
      Bands b{std::move(current[static_cast<std::size_t>(c)]), plane_of(det[0], c), plane_of(det[1], c),
              plane_of(det[2], c)};
      next.push_back(synthesize2(b, h, w, basis));
    }
    current = std::move(next);
  }
  return stack_planes(current);
}

WaveletPyramid zeros_like(const WaveletPyramid& like) {
  WaveletPyramid z;
  z.levels = like.levels;
  z.extents = like.extents;
  z.approx = Tensor::zeros(like.approx.shape());
  for (const auto& d : like.details) {
    z.details.push_back({Tensor::zeros(d[0].shape()), Tensor::zeros(d[1].shape()), Tensor::zeros(d[2].shape())});
  }
  return z;
}

FrequencySplit frequency_split(const Tensor& image, const WaveletBasis& basis, int levels) {
  const WaveletPyramid pyr = dwt2(image, basis, levels);
  WaveletPyramid approx_only = zeros_like(pyr);
  approx_only.approx = pyr.approx;
  WaveletPyramid details_only = pyr;
  details_only.approx = Tensor::zeros(pyr.approx.shape());
  return {idwt2(approx_only, basis), idwt2(details_only, basis)};
}

FusedPair complementary_fuse(const Tensor& low, const Tensor& high, double alpha, double beta) {
  if (!low.defined() || !high.defined() || low.shape() != high.shape()) {
    throw std::invalid_argument("complementary_fuse: I_L and I_H shapes differ");
  }
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw std::invalid_argument("complementary_fuse: alpha and beta must be >= 0");
  }
  const auto l = low.data(), h = high.data();
  std::vector<float> xl(l.size()), xh(l.size());
  const float a = static_cast<float>(alpha), b = static_cast<float>(beta);
  for (std::size_t i = 0; i < l.size(); ++i) {
    xl[i] = l[i] + a * h[i];
    xh[i] = h[i] + b * l[i];
  }
  return {Tensor::from_vector(low.shape(), std::move(xl)), Tensor::from_vector(low.shape(), std::move(xh))};
}

FusionWeights sample_alpha_beta(Rng& rng, const Range& alpha_range, const Range& beta_range) {
  alpha_range.validate("alpha_range");
  beta_range.validate("beta_range");
  FusionWeights w;
  w.alpha = uniform(rng, alpha_range.lo, alpha_range.hi);
  w.beta = uniform(rng, beta_range.lo, beta_range.hi);
  return w;
}

}  // namespace freqseg
