#include <gtest/gtest.h>

#include <cmath>

#include "freqseg/wavelet.hpp"
#include "test_util.hpp"

using namespace freqseg;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

double max_abs(std::span<const float> a) {
  double m = 0.0;
  for (float v : a) m = std::max(m, std::abs(double(v)));
  return m;
}

double sum_sq(std::span<const float> a) {
  double s = 0.0;
  for (float v : a) s += double(v) * v;
  return s;
}

}  // namespace

TEST(Basis, HaarCoefficients) {
  const WaveletBasis h = WaveletBasis::haar();
  const double r = 1.0 / std::sqrt(2.0);
  ASSERT_EQ(h.length(), 2u);
  EXPECT_DOUBLE_EQ(h.lo_d[0], r);
  EXPECT_DOUBLE_EQ(h.lo_d[1], r);
  EXPECT_DOUBLE_EQ(h.hi_d[0], r);
  EXPECT_DOUBLE_EQ(h.hi_d[1], -r);
}

TEST(Basis, Db2IsOrthonormal) {
  const WaveletBasis d = WaveletBasis::db2();
  ASSERT_EQ(d.length(), 4u);
  double s = 0.0, s2 = 0.0, shifted = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    s += d.lo_d[i];
    s2 += d.lo_d[i] * d.lo_d[i];
    cross += d.lo_d[i] * d.hi_d[i];
  }
  for (std::size_t i = 0; i + 2 < 4; ++i) shifted += d.lo_d[i] * d.lo_d[i + 2];
  EXPECT_NEAR(s, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(s2, 1.0, 1e-12);
  EXPECT_NEAR(shifted, 0.0, 1e-12);
  EXPECT_NEAR(cross, 0.0, 1e-12);
  EXPECT_THROW(WaveletBasis::by_name("sym8"), std::invalid_argument);
  EXPECT_EQ(WaveletBasis::by_name("db2").name, "db2");
}

TEST(Dwt, ConstantImageHaar) {
  const Tensor img = Tensor::full({1, 4, 4}, 5.0f);
  const WaveletPyramid p = dwt2(img, WaveletBasis::haar(), 1);
  for (float v : p.approx.data()) EXPECT_NEAR(v, 10.0, 1e-5);
  for (const auto& band : p.details[0]) EXPECT_LT(max_abs(band.data()), 1e-6);
  const WaveletPyramid p2 = dwt2(img, WaveletBasis::haar(), 2);
  for (float v : p2.approx.data()) EXPECT_NEAR(v, 20.0, 1e-5);
}

TEST(Dwt, HaarRowPair) {
  // Row [1, 3] repeated over two rows; column filtering of identical rows
  // multiplies by sqrt2 again, so divide it out.
  const Tensor img = Tensor::from_vector({1, 2, 2}, {1, 3, 1, 3});
  const WaveletPyramid p = dwt2(img, WaveletBasis::haar(), 1);
  const double s2 = std::sqrt(2.0);
  EXPECT_NEAR(p.approx.data()[0] / s2, 2.0 * s2, 1e-5);
  // The band that is lowpass along columns and highpass along rows.
  const int row_detail = std::abs(p.details[0][0].data()[0]) > 1e-6 ? 0 : 1;
  EXPECT_NEAR(std::abs(p.details[0][row_detail].data()[0]) / s2, s2, 1e-5);
  EXPECT_NEAR(p.details[0][row_detail].data()[0] / s2, -s2, 1e-5);
  EXPECT_LT(max_abs(p.details[0][2].data()), 1e-6);
}

TEST(Dwt, TooSmallThrows) {
  EXPECT_THROW(dwt2(Tensor::zeros({1, 2, 2}), WaveletBasis::haar(), 2), std::invalid_argument);
  EXPECT_THROW(dwt2(Tensor::zeros({1, 4, 4}), WaveletBasis::haar(), 0), std::invalid_argument);
  EXPECT_THROW(dwt2(Tensor::zeros({4, 4}), WaveletBasis::haar(), 1), std::invalid_argument);
}

TEST(Idwt, ZeroPyramidGivesZeroImage) {
  const WaveletPyramid p = zeros_like(dwt2(Tensor::full({2, 9, 7}, 1.0f), WaveletBasis::db2(), 2));
  const Tensor img = idwt2(p, WaveletBasis::db2());
  EXPECT_EQ(img.shape(), (Shape{2, 9, 7}));
  EXPECT_EQ(max_abs(img.data()), 0.0);
}

TEST(Idwt, RoundTripRandom3x32x32) {
  Rng rng(1);
  const Tensor x = random_tensor({3, 32, 32}, rng);
  for (const auto& basis : {WaveletBasis::haar(), WaveletBasis::db2()}) {
    EXPECT_LT(max_abs_diff(idwt2(dwt2(x, basis, 1), basis).data(), x.data()), 1e-5) << basis.name;
  }
}

TEST(Idwt, PerfectReconstructionProperty) {
  Rng rng(2);
  const int sizes[][2] = {{16, 16}, {17, 13}, {9, 24}, {31, 31}, {8, 11}};
  for (const auto& basis : {WaveletBasis::haar(), WaveletBasis::db2()}) {
    for (const auto& hw : sizes) {
      for (int levels = 1; levels <= 3; ++levels) {
        const Tensor x = random_tensor({2, hw[0], hw[1]}, rng);
        const Tensor y = idwt2(dwt2(x, basis, levels), basis);
        ASSERT_EQ(y.shape(), x.shape());
        EXPECT_LT(max_abs_diff(y.data(), x.data()), 1e-5)
            << basis.name << " " << hw[0] << "x" << hw[1] << " levels " << levels;
      }
    }
  }
}

TEST(Idwt, Linearity) {
  Rng rng(3);
  const WaveletBasis basis = WaveletBasis::db2();
  const WaveletPyramid like = dwt2(Tensor::zeros({1, 12, 10}), basis, 2);
  auto random_pyramid = [&]() {
    WaveletPyramid p = zeros_like(like);
    for (auto& v : p.approx.mutable_data()) v = static_cast<float>(uniform(rng, -1, 1));
    for (auto& level : p.details) {
      for (auto& band : level) {
        for (auto& v : band.mutable_data()) v = static_cast<float>(uniform(rng, -1, 1));
      }
    }
    return p;
  };
  const WaveletPyramid p = random_pyramid(), q = random_pyramid();
  WaveletPyramid s = zeros_like(like);
  s.approx = add(p.approx, q.approx);
  for (std::size_t l = 0; l < s.details.size(); ++l) {
    for (int b = 0; b < 3; ++b) s.details[l][b] = add(p.details[l][b], q.details[l][b]);
  }
  const Tensor lhs = idwt2(s, basis);
  const Tensor rhs = add(idwt2(p, basis), idwt2(q, basis));
  EXPECT_LT(max_abs_diff(lhs.data(), rhs.data()), 1e-5);
}

TEST(Dwt, HaarEnergyConservation) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({1, 16, 20}, rng);
    const WaveletPyramid p = dwt2(x, WaveletBasis::haar(), 1);
    double coeff = sum_sq(p.approx.data());
    for (const auto& band : p.details[0]) coeff += sum_sq(band.data());
    const double img = sum_sq(x.data());
    EXPECT_NEAR(coeff / img, 1.0, 1e-4);
  }
}

TEST(FrequencySplit, ConstantImage) {
  const Tensor x = Tensor::full({1, 8, 8}, 0.7f);
  const FrequencySplit s = frequency_split(x, WaveletBasis::haar(), 1);
  EXPECT_LT(max_abs_diff(s.low.data(), x.data()), 1e-6);
  EXPECT_LT(max_abs(s.high.data()), 1e-6);
}

TEST(FrequencySplit, CheckerboardHaar) {
  std::vector<float> v(16);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) v[y * 4 + x] = static_cast<float>((x + y) % 2);
  }
  const Tensor img = Tensor::from_vector({1, 4, 4}, v);
  const FrequencySplit s = frequency_split(img, WaveletBasis::haar(), 1);
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(s.low.data()[i], 0.5, 1e-6);
    EXPECT_NEAR(s.high.data()[i], v[i] - 0.5, 1e-6);
  }
}

TEST(FrequencySplit, AdditivityAllBasesAndLevels) {
  Rng rng(5);
  for (const auto& basis : {WaveletBasis::haar(), WaveletBasis::db2()}) {
    for (int levels = 1; levels <= 3; ++levels) {
      const Tensor x = random_tensor({1, 19, 24}, rng, 0, 1);
      const FrequencySplit s = frequency_split(x, basis, levels);
      EXPECT_LT(max_abs_diff(add(s.low, s.high).data(), x.data()), 1e-5) << basis.name << " " << levels;
    }
  }
}

TEST(Fuse, Substitution) {
  const Tensor l = Tensor::from_vector({1, 1, 1}, {1});
  const Tensor h = Tensor::from_vector({1, 1, 1}, {2});
  const FusedPair f = complementary_fuse(l, h, 0.5, 0.25);
  EXPECT_FLOAT_EQ(f.low.item(), 2.0f);
  EXPECT_FLOAT_EQ(f.high.item(), 2.25f);
}

TEST(Fuse, ZeroWeightsAreIdentity) {
  Rng rng(6);
  const Tensor l = random_tensor({1, 5, 5}, rng), h = random_tensor({1, 5, 5}, rng);
  const FusedPair f = complementary_fuse(l, h, 0.0, 0.0);
  EXPECT_EQ(max_abs_diff(f.low.data(), l.data()), 0.0);
  EXPECT_EQ(max_abs_diff(f.high.data(), h.data()), 0.0);
}

TEST(Fuse, NoHighFrequencyDegenerates) {
  Rng rng(7);
  const Tensor l = random_tensor({1, 5, 5}, rng);
  const FusedPair f = complementary_fuse(l, Tensor::zeros({1, 5, 5}), 0.6, 0.7);
  for (std::size_t i = 0; i < l.numel(); ++i) EXPECT_EQ(f.high.data()[i], 0.7f * f.low.data()[i]);
}

TEST(Fuse, ConstantImageDegeneracy) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const float c = static_cast<float>(uniform(rng, 0, 1));
    const FrequencySplit s = frequency_split(Tensor::full({1, 16, 16}, c), WaveletBasis::db2(), 2);
    const double beta = uniform(rng, 0.4, 0.8);
    const FusedPair f = complementary_fuse(s.low, s.high, uniform(rng, 0.4, 0.8), beta);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.low.numel(); ++i) {
      worst = std::max(worst, std::abs(f.high.data()[i] - beta * f.low.data()[i]));
    }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(Fuse, Linearity) {
  Rng rng(9);
  const Tensor l1 = random_tensor({1, 4, 4}, rng), l2 = random_tensor({1, 4, 4}, rng);
  const Tensor h = random_tensor({1, 4, 4}, rng);
  const FusedPair a = complementary_fuse(add(l1, l2), h, 0.3, 0.6);
  const FusedPair b = complementary_fuse(l1, h, 0.3, 0.6);
  const FusedPair c = complementary_fuse(l2, Tensor::zeros({1, 4, 4}), 0.3, 0.6);
  EXPECT_LT(max_abs_diff(a.low.data(), add(b.low, c.low).data()), 1e-6);
  EXPECT_LT(max_abs_diff(a.high.data(), add(b.high, c.high).data()), 1e-6);
}

TEST(Fuse, Errors) {
  EXPECT_THROW(complementary_fuse(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 2, 3}), 0.1, 0.1),
               std::invalid_argument);
  EXPECT_THROW(complementary_fuse(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 2, 2}), -0.1, 0.1),
               std::invalid_argument);
}

TEST(SampleAlphaBeta, RangesAndDeterminism) {
  Rng a(10), b(10);
  for (int i = 0; i < 1000; ++i) {
    const FusionWeights w = sample_alpha_beta(a, {0.4, 0.8}, {0.4, 0.8});
    EXPECT_GE(w.alpha, 0.4);
    EXPECT_LE(w.alpha, 0.8);
    EXPECT_GE(w.beta, 0.4);
    EXPECT_LE(w.beta, 0.8);
    const FusionWeights v = sample_alpha_beta(b, {0.4, 0.8}, {0.4, 0.8});
    EXPECT_EQ(w.alpha, v.alpha);
    EXPECT_EQ(w.beta, v.beta);
  }
  const FusionWeights c = sample_alpha_beta(a, {0.3, 0.3}, {0.9, 0.9});
  EXPECT_EQ(c.alpha, 0.3);
  EXPECT_EQ(c.beta, 0.9);
  EXPECT_THROW(sample_alpha_beta(a, {0.8, 0.4}, {0.4, 0.8}), std::invalid_argument);
}
