#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "freqseg/loss.hpp"
#include "freqseg/model.hpp"
#include "test_util.hpp"

using namespace freqseg;
using testutil::random_tensor;

namespace {

ModelConfig small_config(std::vector<int> widths = {4, 8, 16, 32}) {
  ModelConfig c;
  c.unet.encoder_channels = std::move(widths);
  c.seed = 3;
  return c;
}

// Closed-form parameter counts: a 3x3 conv-bn-relu block has 9*in*out
// weights, out biases and 2*out affine terms.
std::size_t cbr(std::size_t in, std::size_t out) { return 9 * in * out + 3 * out; }

std::size_t unet_params(const std::vector<int>& widths, std::size_t in, std::size_t classes) {
  std::size_t total = 0, prev = in;
  for (int c : widths) {
    total += cbr(prev, c) + cbr(c, c);
    prev = c;
  }
  const std::size_t b = 2 * prev;
  total += cbr(prev, b) + cbr(b, b);
  std::size_t up = b;
  for (auto it = widths.rbegin(); it != widths.rend(); ++it) {
    const std::size_t c = *it;
    total += cbr(up + c, c) + cbr(c, c);
    up = c;
  }
  return total + widths.front() * classes + classes;
}

std::size_t fusion_params(std::size_t c) { return cbr(2 * c, c) + 2 * 9 * c * c; }

std::map<std::string, Tensor> by_name(const std::vector<NamedTensor>& v) {
  std::map<std::string, Tensor> m;
  for (const auto& nt : v) m[nt.name] = nt.tensor;
  return m;
}

}  // namespace

TEST(UNetSpec, Validation) {
  UNetSpec s;
  EXPECT_NO_THROW(s.validate());
  s.encoder_channels = {8, 8, 16};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.encoder_channels = {};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = UNetSpec{};
  s.num_classes = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(UNetSpec{}.size_multiple(), 16);
}

TEST(Model, DefaultParameterCountsMatchClosedForm) {
  const XNetV2Model m(ModelConfig{});
  const ParameterReport r = m.parameter_report();
  const std::vector<int> widths{32, 64, 128, 256};
  const std::size_t unet = unet_params(widths, 1, 2);
  EXPECT_EQ(r.main, unet);
  EXPECT_EQ(r.low, unet);
  EXPECT_EQ(r.high, unet);
  EXPECT_EQ(r.fusion_lm, fusion_params(128) + fusion_params(256));
  EXPECT_EQ(r.fusion_hm, fusion_params(32) + fusion_params(64));
  EXPECT_EQ(r.total(), count_elements(m.parameters()));
  // Width-8 counts as printed by `freqseg info`.
  const ParameterReport r8 = XNetV2Model(small_config({8, 16, 32, 64})).parameter_report();
  EXPECT_EQ(r8.main, 492474u);
  EXPECT_EQ(r8.fusion_lm, 184608u);
  EXPECT_EQ(r8.fusion_hm, 11592u);
}

TEST(Model, FusionPlacementIsAsymmetric) {
  const XNetV2Model m(small_config());
  EXPECT_EQ(m.low_main_layers(), (std::vector<int>{3, 4}));
  EXPECT_EQ(m.high_main_layers(), (std::vector<int>{1, 2}));
  std::set<std::string> prefixes;
  for (const auto& nt : m.parameters()) {
    if (nt.name.rfind("fusion", 0) == 0) prefixes.insert(nt.name.substr(0, nt.name.find('.')));
  }
  EXPECT_EQ(prefixes, (std::set<std::string>{"fusion_hm1", "fusion_hm2", "fusion_lm3", "fusion_lm4"}));
  for (const auto* mods : {&m.lm_modules(), &m.hm_modules()}) {
    for (const FusionModule& f : *mods) {
      const int c = m.config().unet.channels_at(f.layer);
      EXPECT_EQ(f.fuse.conv.weight.shape(), (Shape{c, 2 * c, 3, 3})) << f.layer;
      EXPECT_EQ(f.into_main.weight.shape(), (Shape{c, c, 3, 3}));
      EXPECT_EQ(f.into_aux.weight.shape(), (Shape{c, c, 3, 3}));
      EXPECT_FALSE(f.into_main.bias.defined());
    }
  }
}

TEST(Model, SwitchesRemoveExactlyTheirModules) {
  ModelConfig c = small_config();
  const std::size_t all = XNetV2Model(c).parameter_report().total();
  c.enable_lm = false;
  const XNetV2Model no_lm(c);
  EXPECT_TRUE(no_lm.low_main_layers().empty());
  EXPECT_EQ(no_lm.high_main_layers(), (std::vector<int>{1, 2}));
  EXPECT_EQ(all - no_lm.parameter_report().total(), fusion_params(16) + fusion_params(32));
  c.enable_hm = false;
  const XNetV2Model none(c);
  EXPECT_EQ(none.parameter_report().total(), 3 * unet_params({4, 8, 16, 32}, 1, 2));
  c.main_only = true;
  const XNetV2Model single(c);
  EXPECT_EQ(single.parameter_report().total(), unet_params({4, 8, 16, 32}, 1, 2));
  for (const auto& nt : single.state()) EXPECT_EQ(nt.name.rfind("main.", 0), 0u) << nt.name;
}

TEST(Model, ForwardShapesAndNormalization) {
  const XNetV2Model m(small_config());
  Rng rng(1);
  const Tensor x = random_tensor({2, 1, 64, 64}, rng);
  const Tensor xl = random_tensor({2, 1, 64, 64}, rng);
  const Tensor xh = random_tensor({2, 1, 64, 64}, rng);
  const Predictions p = m.forward(x, xl, xh, true);
  for (const Tensor* t : {&p.main, &p.low, &p.high}) {
    ASSERT_EQ(t->shape(), (Shape{2, 2, 64, 64}));
    for (int n = 0; n < 2; ++n) {
      for (int i = 0; i < 64 * 64; ++i) {
        const double s = double(t->data()[(n * 2) * 4096 + i]) + t->data()[(n * 2 + 1) * 4096 + i];
        ASSERT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Model, InputErrors) {
  const XNetV2Model m(small_config());
  const Tensor bad = Tensor::zeros({1, 1, 24, 24});
  try {
    m.forward(bad, bad, bad, false);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
  const Tensor ok = Tensor::zeros({1, 1, 16, 16});
  EXPECT_THROW(m.forward(ok, Tensor::zeros({1, 1, 32, 32}), ok, false), std::invalid_argument);
  EXPECT_THROW(m.forward(Tensor::zeros({1, 2, 16, 16}), ok, ok, false), std::invalid_argument);
}

TEST(Model, IdenticalNetworksAgreeBitwiseWithoutFusion) {
  ModelConfig c = small_config();
  c.enable_lm = c.enable_hm = false;
  const XNetV2Model m(c);
  auto state = by_name(m.state());
  for (auto& [name, t] : state) {
    if (name.rfind("main.", 0) != 0) continue;
    const std::string rest = name.substr(4);
    for (const char* other : {"low", "high"}) {
      const Tensor dst = state.at(other + rest);
      std::copy(t.data().begin(), t.data().end(), dst.mutable_data().begin());
    }
  }
  Rng rng(2);
  const Tensor x = random_tensor({2, 1, 32, 32}, rng);
  for (bool training : {true, false}) {
    const Predictions p = m.forward(x, x, x, training);
    EXPECT_EQ(testutil::max_abs_diff(p.main.data(), p.low.data()), 0.0);
    EXPECT_EQ(testutil::max_abs_diff(p.main.data(), p.high.data()), 0.0);
  }
}

TEST(Model, DistinctStreamsGiveDistinctNetworks) {
  const XNetV2Model m(small_config());
  const auto s = by_name(m.parameters());
  EXPECT_GT(testutil::max_abs_diff(s.at("main.enc1.first.conv.weight").data(),
                                   s.at("low.enc1.first.conv.weight").data()),
            0.0);
  const XNetV2Model again(small_config());
  EXPECT_EQ(testutil::max_abs_diff(s.at("high.dec2.second.conv.weight").data(),
                                   by_name(again.parameters()).at("high.dec2.second.conv.weight").data()),
            0.0);
}

TEST(Model, LossReachesAllNetworksAndFusionConvs) {
  const XNetV2Model m(small_config());
  Rng rng(4);
  const Tensor x = random_tensor({2, 1, 16, 16}, rng);
  const Tensor xl = random_tensor({2, 1, 16, 16}, rng);
  const Tensor xh = random_tensor({2, 1, 16, 16}, rng);
  std::vector<int> labels(2 * 16 * 16);
  for (auto& l : labels) l = static_cast<int>(uniform_index(rng, 2));
  const Tensor y = one_hot(labels, 2, 2, 16, 16);
  const Predictions p = m.forward(x, xl, xh, true);
  total_loss(supervised_loss(p.main, p.low, p.high, y), unsupervised_loss(p.main, p.low, p.high), 1.5).backward();
  for (const auto& nt : m.parameters()) {
    ASSERT_TRUE(nt.tensor.has_grad()) << nt.name;
    double norm = 0.0;
    for (float g : nt.tensor.grad()) {
      ASSERT_TRUE(std::isfinite(g)) << nt.name;
      norm += double(g) * g;
    }
    const bool is_fusion_conv = nt.name.rfind("fusion", 0) == 0 && nt.name.find("weight") != std::string::npos;
    if (is_fusion_conv) {
      EXPECT_GT(norm, 0.0) << nt.name;
    }
  }
}

TEST(Model, EightByEightSmokeHasFiniteGrads) {
  // Three pooling stages fit an 8x8 input; layer 4 and its fusion module drop out.
  const XNetV2Model m(small_config({4, 8, 16}));
  EXPECT_EQ(m.low_main_layers(), (std::vector<int>{3}));
  EXPECT_EQ(m.high_main_layers(), (std::vector<int>{1, 2}));
  Rng rng(5);
  const Tensor x = random_tensor({2, 1, 8, 8}, rng);
  std::vector<int> labels(2 * 64);
  for (auto& l : labels) l = static_cast<int>(uniform_index(rng, 2));
  const Predictions p = m.forward(x, x, x, true);
  total_loss(supervised_loss(p.main, p.low, p.high, one_hot(labels, 2, 2, 8, 8)),
             unsupervised_loss(p.main, p.low, p.high), 3.0)
      .backward();
  for (const auto& nt : m.parameters()) {
    ASSERT_TRUE(nt.tensor.has_grad()) << nt.name;
    for (float g : nt.tensor.grad()) ASSERT_TRUE(std::isfinite(g)) << nt.name;
  }
}

TEST(Model, FuseFeaturesShapeContract) {
  Rng rng(6);
  const ConvBnRelu block(8, 4, rng);
  const Tensor e = random_tensor({2, 4, 6, 6}, rng);
  EXPECT_EQ(fuse_features(e, Tensor::zeros({2, 4, 6, 6}), block, true).shape(), (Shape{2, 4, 6, 6}));
  EXPECT_THROW(fuse_features(e, Tensor::zeros({2, 4, 6, 5}), block, true), std::invalid_argument);
}

TEST(Model, MainOnlyForwardSkipsAuxiliaryNetworks) {
  ModelConfig c = small_config();
  c.main_only = true;
  const XNetV2Model m(c);
  const Tensor x = Tensor::zeros({1, 1, 16, 16});
  const Predictions p = m.forward(x, Tensor(), Tensor(), false);
  EXPECT_EQ(p.main.shape(), (Shape{1, 2, 16, 16}));
  EXPECT_FALSE(p.low.defined());
}

TEST(Infer, LabelsInRangeAndDeterministic) {
  const XNetV2Model m(small_config());
  Rng rng(7);
  const Tensor images = random_tensor({3, 1, 32, 32}, rng, 0, 1);
  const InferOptions opts{PreprocessOptions{}, FusionWeights{0.6, 0.6}};
  const auto a = infer(m, images, opts);
  const auto b = infer(m, images, opts);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  for (const auto& map : a) {
    EXPECT_EQ(map.height, 32);
    EXPECT_EQ(map.width, 32);
    for (int v : map.labels) {
      EXPECT_GE(v, 0);
      EXPECT_LT(v, 2);
    }
  }
}

TEST(Infer, EvalLeavesRunningStatsUntouched) {
  const XNetV2Model m(small_config());
  const auto before = by_name(m.buffers());
  std::vector<std::vector<float>> snapshot;
  for (const auto& [name, t] : before) snapshot.emplace_back(t.data().begin(), t.data().end());
  Rng rng(8);
  infer(m, random_tensor({1, 1, 16, 16}, rng, 0, 1), InferOptions{});
  std::size_t i = 0;
  for (const auto& [name, t] : before) {
    EXPECT_EQ(std::vector<float>(t.data().begin(), t.data().end()), snapshot[i++]) << name;
  }
}
