#include <gtest/gtest.h>

#include "freqseg/model.hpp"
#include "gradcheck_cases.hpp"

using namespace freqseg;
using namespace testutil;

class OpGradcheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradcheck, MatchesFiniteDifferences) {
  const GradCase gc = gradcheck_cases().at(GetParam());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double err = gc.run(1000 * GetParam() + seed);
    EXPECT_LT(err, kGradTolerance) << gc.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradcheck, ::testing::Range<std::size_t>(0, gradcheck_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return gradcheck_cases().at(info.param).name;
                         });

TEST(Gradcheck, DetectsWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  const auto broken = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= 3.0f;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x](std::span<const float> g, std::span<const float>) {
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 6.0f * g[i];
    });
  };
  Rng rng(1);
  const Tensor x = random_tensor({4}, rng, -1, 1, true);
  EXPECT_GT(gradcheck(broken, {x}, 2), 0.1);
}

TEST(Gradcheck, ThroughFusionModule) {
  Rng init(5);
  const ConvBnRelu block(4, 2, init);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 3 && seed < 200; ++seed) {
    Rng rng(seed);
    const Tensor e_main = random_tensor({2, 2, 8, 8}, rng, -1, 1, true);
    const Tensor e_aux = random_tensor({2, 2, 8, 8}, rng, -1, 1, true);
    {
      // Skip draws with a normalized activation near the ReLU kink.
      NoGradGuard ng;
      Tensor rm = block.bn.running_mean.detach(), rv = block.bn.running_var.detach();
      const Tensor pre = batch_norm2d(block.conv.forward(concat_channels(e_main, e_aux)), block.bn.gamma,
                                      block.bn.beta, rm, rv, true);
      if (!testutil::detail::clear_of_zero(pre, 5e-3)) continue;
    }
    const double err = gradcheck([&](const std::vector<Tensor>& in) {
      return fuse_features(in[0], in[1], block, true);
    }, {e_main, e_aux, block.conv.weight}, seed + 100, kGradStep);
    EXPECT_LT(err, kGradTolerance) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 3);
}
