#pragma once

// Triple-UNet segmentation network: a main network M on the raw image, an
// LF network L and an HF network H on the complementary fusion images.
// Encoder features are exchanged through fusion modules, deep layers for
// L&M and shallow layers for H&M, and the fused maps are fed to the
// decoders of both networks of a pair.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "freqseg/common.hpp"
#include "freqseg/label_map.hpp"
#include "freqseg/preprocess.hpp"
#include "freqseg/tensor.hpp"

namespace freqseg {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Conv2d {
 public:
  Conv2d() = default;
  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero bias.
  Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;

  Tensor weight;
  Tensor bias;
  int padding = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  Tensor forward(const Tensor& x, bool training) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
};

/// 3x3 conv, batch norm, ReLU. `preact_extra`, if defined, is added to the
/// conv output before normalization.
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(int in_channels, int out_channels, Rng& rng);

  Tensor forward(const Tensor& x, bool training, const Tensor& preact_extra = Tensor()) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  Conv2d conv;
  BatchNorm2d bn;
};

struct DoubleConv {
  DoubleConv() = default;
  DoubleConv(int in_channels, int out_channels, Rng& rng);

  Tensor forward(const Tensor& x, bool training, const Tensor& preact_extra = Tensor()) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  ConvBnRelu first;
  ConvBnRelu second;
};

struct UNetSpec {
  int in_channels = 1;
  int num_classes = 2;
  std::vector<int> encoder_channels{32, 64, 128, 256};

  int depth() const { return static_cast<int>(encoder_channels.size()); }
  /// Channels of encoder layer `layer` (1-based).
  int channels_at(int layer) const { return encoder_channels.at(static_cast<std::size_t>(layer - 1)); }
  int bottleneck_channels() const { return 2 * encoder_channels.back(); }
  /// Spatial extents must be divisible by this.
  int size_multiple() const { return 1 << depth(); }
  void validate() const;
};

/// Encoder stages of two conv blocks with max-pool downsampling, a
/// bottleneck, and nearest-upsample decoder stages that concatenate the
/// encoder skip features.
class UNet {
 public:
  UNet() = default;
  UNet(const UNetSpec& spec, Rng& rng);

  struct Features {
    std::vector<Tensor> layers;  // layers[n-1] = E_n
    Tensor bottleneck;
  };

  Features encode(const Tensor& x, bool training) const;
  /// `injections[n-1]`, when defined, is the pre-activation contribution of
  /// a fused feature map to the first conv of decoder stage n.
  Tensor decode(const Features& features, const std::vector<Tensor>& injections, bool training) const;

  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;
  const UNetSpec& spec() const { return spec_; }

 private:
  UNetSpec spec_;
  std::vector<DoubleConv> encoder_;
  DoubleConv bottleneck_;
  std::vector<DoubleConv> decoder_;
  Conv2d head_;
};

/// Concatenates two same-shape feature maps and fuses them with a 3x3
/// conv-bn-relu block back to the original channel count.
Tensor fuse_features(const Tensor& e_main, const Tensor& e_aux, const ConvBnRelu& block, bool training);

/// Fusion module at one encoder layer. The fused map is concatenated to the
/// decoder input of both networks; the decoder's first conv over
/// [up, skip, fused] splits into its own weights over [up, skip] plus the
/// `into_*` weights over the fused channels, which live here.
struct FusionModule {
  FusionModule() = default;
  FusionModule(int layer, int channels, Rng& rng);

  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  int layer = 0;
  ConvBnRelu fuse;
  Conv2d into_main;
  Conv2d into_aux;
};

struct ModelConfig {
  UNetSpec unet;
  bool enable_lm = true;
  bool enable_hm = true;
  /// Build the main network alone (plain UNet baseline).
  bool main_only = false;
  std::uint64_t seed = 0;
};

struct Predictions {
  Tensor main;  // probabilities [N,K,H,W]
  Tensor low;
  Tensor high;
  Tensor main_logits;
  Tensor low_logits;
  Tensor high_logits;
};

struct ParameterReport {
  std::size_t main = 0;
  std::size_t low = 0;
  std::size_t high = 0;
  std::size_t fusion_lm = 0;
  std::size_t fusion_hm = 0;
  std::size_t total() const { return main + low + high + fusion_lm + fusion_hm; }
};

class XNetV2Model {
 public:
  /// Encoder layers whose features each fusion pair exchanges.
  static constexpr std::array<int, 2> kLowMainLayers{3, 4};
  static constexpr std::array<int, 2> kHighMainLayers{1, 2};

  explicit XNetV2Model(ModelConfig config);

  /// Runs M, L and H on their inputs ([N,C,H,W] each). With
  /// `main_output_only` and no active fusion module, L and H are skipped.
  Predictions forward(const Tensor& x_main, const Tensor& x_low, const Tensor& x_high, bool training,
                      bool main_output_only = false) const;

  const ModelConfig& config() const { return config_; }
  /// Layers that carry an active fusion module (empty when switched off).
  std::vector<int> low_main_layers() const;
  std::vector<int> high_main_layers() const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;
  /// Parameters followed by buffers: everything a checkpoint stores.
  std::vector<NamedTensor> state() const;
  ParameterReport parameter_report() const;

  const UNet& main_net() const { return main_; }
  const UNet& low_net() const { return low_; }
  const UNet& high_net() const { return high_; }
  const std::vector<FusionModule>& lm_modules() const { return lm_; }
  const std::vector<FusionModule>& hm_modules() const { return hm_; }

 private:
  void check_input(const Tensor& x, const char* which) const;

  ModelConfig config_;
  UNet main_;
  UNet low_;
  UNet high_;
  std::vector<FusionModule> lm_;
  std::vector<FusionModule> hm_;
};

struct InferOptions {
  PreprocessOptions preprocess;
  FusionWeights weights;  // fixed to the midpoints of the training ranges
};

/// Eval-mode prediction from raw [N,C,H,W] images: argmax of the main
/// network's probabilities, one map per image.
std::vector<LabelMap> infer(const XNetV2Model& model, const Tensor& images, const InferOptions& options);

std::size_t count_elements(const std::vector<NamedTensor>& tensors);

}  // namespace freqseg
