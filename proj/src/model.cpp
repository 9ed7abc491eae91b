#include "freqseg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace freqseg {

namespace {

enum Stream : std::uint64_t { kMainStream = 1, kLowStream = 2, kHighStream = 3, kFusionStream = 4 };

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, bool with_bias) : padding(kernel / 2) {
  const int fan_in = in_channels * kernel * kernel;
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<float> w(static_cast<std::size_t>(out_channels) * fan_in);
  for (auto& v : w) v = static_cast<float>(uniform(rng, -bound, bound));
  weight = Tensor::from_vector({out_channels, in_channels, kernel, kernel}, std::move(w), true);
  if (with_bias) bias = Tensor::zeros({out_channels}, true);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, 1, padding); }

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
  params.push_back({prefix + ".weight", weight});
  if (bias.defined()) params.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(Tensor::full({channels}, 1.0f, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0f)) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) const {
  Tensor rm = running_mean, rv = running_var;  // handles alias the buffers
  return batch_norm2d(x, gamma, beta, rm, rv, training);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                          std::vector<NamedTensor>& buffers) const {
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
  buffers.push_back({prefix + ".running_mean", running_mean});
  buffers.push_back({prefix + ".running_var", running_var});
}

ConvBnRelu::ConvBnRelu(int in_channels, int out_channels, Rng& rng)
    : conv(in_channels, out_channels, 3, rng), bn(out_channels) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool training, const Tensor& preact_extra) const {
  Tensor y = conv.forward(x);
  if (preact_extra.defined()) y = add(y, preact_extra);
  return relu(bn.forward(y, training));
}

void ConvBnRelu::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                         std::vector<NamedTensor>& buffers) const {
  conv.collect(prefix + ".conv", params);
  bn.collect(prefix + ".bn", params, buffers);
}

DoubleConv::DoubleConv(int in_channels, int out_channels, Rng& rng)
    : first(in_channels, out_channels, rng), second(out_channels, out_channels, rng) {}

Tensor DoubleConv::forward(const Tensor& x, bool training, const Tensor& preact_extra) const {
  return second.forward(first.forward(x, training, preact_extra), training);
}

void DoubleConv::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                         std::vector<NamedTensor>& buffers) const {
  first.collect(prefix + ".first", params, buffers);
  second.collect(prefix + ".second", params, buffers);
}

void UNetSpec::validate() const {
  if (in_channels < 1) throw std::invalid_argument("UNetSpec: in_channels must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("UNetSpec: num_classes must be >= 2");
  if (encoder_channels.empty()) throw std::invalid_argument("UNetSpec: encoder_channels is empty");
  for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
    if (encoder_channels[i] < 1 || (i > 0 && encoder_channels[i] <= encoder_channels[i - 1])) {
      throw std::invalid_argument("UNetSpec: encoder_channels must be positive and strictly increasing");
    }
  }
}

UNet::UNet(const UNetSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  int in = spec_.in_channels;
  for (int c : spec_.encoder_channels) {
    encoder_.emplace_back(in, c, rng);
    in = c;
  }
  bottleneck_ = DoubleConv(in, spec_.bottleneck_channels(), rng);
  int up = spec_.bottleneck_channels();
  decoder_.resize(encoder_.size());
  for (int layer = spec_.depth(); layer >= 1; --layer) {
    const int c = spec_.channels_at(layer);
    decoder_[static_cast<std::size_t>(layer - 1)] = DoubleConv(up + c, c, rng);
    up = c;
  }
  head_ = Conv2d(spec_.encoder_channels.front(), spec_.num_classes, 1, rng);
}

UNet::Features UNet::encode(const Tensor& x, bool training) const {
  Features f;
  Tensor h = x;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    if (i > 0) h = maxpool2d(h, 2);
    h = encoder_[i].forward(h, training);
    f.layers.push_back(h);
  }
  f.bottleneck = bottleneck_.forward(maxpool2d(h, 2), training);
  return f;
}

Tensor UNet::decode(const Features& features, const std::vector<Tensor>& injections, bool training) const {
  if (features.layers.size() != decoder_.size() || injections.size() != decoder_.size()) {
    throw std::invalid_argument("UNet::decode: expected " + std::to_string(decoder_.size()) + " feature layers");
  }
  Tensor h = features.bottleneck;
  for (int i = static_cast<int>(decoder_.size()) - 1; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    h = concat_channels(upsample_nearest2d(h, 2), features.layers[idx]);
    h = decoder_[idx].forward(h, training, injections[idx]);
  }
  return head_.forward(h);
}

void UNet::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                   std::vector<NamedTensor>& buffers) const {
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].collect(prefix + ".enc" + std::to_string(i + 1), params, buffers);
  }
  bottleneck_.collect(prefix + ".bottleneck", params, buffers);
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    decoder_[i].collect(prefix + ".dec" + std::to_string(i + 1), params, buffers);
  }
  head_.collect(prefix + ".head", params);
}

Tensor fuse_features(const Tensor& e_main, const Tensor& e_aux, const ConvBnRelu& block, bool training) {
  if (!e_main.defined() || !e_aux.defined() || e_main.shape() != e_aux.shape()) {
    throw std::invalid_argument("fuse_features: feature shapes differ: " +
                                (e_main.defined() ? shape_str(e_main.shape()) : std::string("<undefined>")) +
                                " vs " + (e_aux.defined() ? shape_str(e_aux.shape()) : std::string("<undefined>")));
  }
  return block.forward(concat_channels(e_main, e_aux), training);
}

FusionModule::FusionModule(int layer_, int channels, Rng& rng)
    : layer(layer_),
      fuse(2 * channels, channels, rng),
      into_main(channels, channels, 3, rng, false),
      into_aux(channels, channels, 3, rng, false) {}

void FusionModule::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                           std::vector<NamedTensor>& buffers) const {
  fuse.collect(prefix + ".fuse", params, buffers);
  into_main.collect(prefix + ".into_main", params);
  into_aux.collect(prefix + ".into_aux", params);
}

XNetV2Model::XNetV2Model(ModelConfig config) : config_(std::move(config)) {
  config_.unet.validate();
  Rng main_rng(derive_seed({config_.seed, kMainStream}));
  main_ = UNet(config_.unet, main_rng);
  if (config_.main_only) return;
  Rng low_rng(derive_seed({config_.seed, kLowStream}));
  Rng high_rng(derive_seed({config_.seed, kHighStream}));
  low_ = UNet(config_.unet, low_rng);
  high_ = UNet(config_.unet, high_rng);
  Rng fusion_rng(derive_seed({config_.seed, kFusionStream}));
  const int depth = config_.unet.depth();
  if (config_.enable_lm) {
    for (int layer : kLowMainLayers) {
      if (layer <= depth) lm_.emplace_back(layer, config_.unet.channels_at(layer), fusion_rng);
    }
  }
  if (config_.enable_hm) {
    for (int layer : kHighMainLayers) {
      if (layer <= depth) hm_.emplace_back(layer, config_.unet.channels_at(layer), fusion_rng);
    }
  }
}

void XNetV2Model::check_input(const Tensor& x, const char* which) const {
  if (!x.defined() || x.ndim() != 4) {
    throw std::invalid_argument(std::string("forward: ") + which + " input must be [N,C,H,W]");
  }
  if (x.dim(1) != config_.unet.in_channels) {
    throw std::invalid_argument(std::string("forward: ") + which + " input has " + std::to_string(x.dim(1)) +
                                " channels, model expects " + std::to_string(config_.unet.in_channels));
  }
  const int m = config_.unet.size_multiple();
  if (x.dim(2) % m != 0 || x.dim(3) % m != 0) {
    throw std::invalid_argument("forward: spatial size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                " is not divisible by " + std::to_string(m) + "; pad images to a multiple of " +
                                std::to_string(m));
  }
}

Predictions XNetV2Model::forward(const Tensor& x_main, const Tensor& x_low, const Tensor& x_high, bool training,
                                 bool main_output_only) const {
  check_input(x_main, "main");
  const std::size_t depth = static_cast<std::size_t>(config_.unet.depth());
  Predictions out;
  const UNet::Features fm = main_.encode(x_main, training);
  std::vector<Tensor> inj_main(depth), inj_low(depth), inj_high(depth);

  if (config_.main_only || (main_output_only && lm_.empty() && hm_.empty())) {
    out.main_logits = main_.decode(fm, inj_main, training);
    out.main = softmax_channels(out.main_logits);
    return out;
  }

  check_input(x_low, "LF");
  check_input(x_high, "HF");
  if (x_low.shape() != x_main.shape() || x_high.shape() != x_main.shape()) {
    throw std::invalid_argument("forward: the three inputs must share one shape");
  }
  const UNet::Features fl = low_.encode(x_low, training);
  const UNet::Features fh = high_.encode(x_high, training);
  for (const auto& mod : lm_) {
    const auto i = static_cast<std::size_t>(mod.layer - 1);
    const Tensor fused = fuse_features(fm.layers[i], fl.layers[i], mod.fuse, training);
    inj_main[i] = mod.into_main.forward(fused);
    inj_low[i] = mod.into_aux.forward(fused);
  }
  for (const auto& mod : hm_) {
    const auto i = static_cast<std::size_t>(mod.layer - 1);
    const Tensor fused = fuse_features(fm.layers[i], fh.layers[i], mod.fuse, training);
    inj_main[i] = mod.into_main.forward(fused);
    inj_high[i] = mod.into_aux.forward(fused);
  }
  out.main_logits = main_.decode(fm, inj_main, training);
  out.main = softmax_channels(out.main_logits);
  if (main_output_only) return out;
  out.low_logits = low_.decode(fl, inj_low, training);
  out.high_logits = high_.decode(fh, inj_high, training);
  out.low = softmax_channels(out.low_logits);
  out.high = softmax_channels(out.high_logits);
  return out;
}

std::vector<int> XNetV2Model::low_main_layers() const {
  std::vector<int> layers;
  for (const auto& m : lm_) layers.push_back(m.layer);
  return layers;
}

std::vector<int> XNetV2Model::high_main_layers() const {
  std::vector<int> layers;
  for (const auto& m : hm_) layers.push_back(m.layer);
  return layers;
}

std::vector<NamedTensor> XNetV2Model::parameters() const {
  std::vector<NamedTensor> params, buffers;
  main_.collect("main", params, buffers);
  if (!config_.main_only) {
    low_.collect("low", params, buffers);
    high_.collect("high", params, buffers);
  }
  for (const auto& m : lm_) m.collect("fusion_lm" + std::to_string(m.layer), params, buffers);
  for (const auto& m : hm_) m.collect("fusion_hm" + std::to_string(m.layer), params, buffers);
  return params;
}

std::vector<NamedTensor> XNetV2Model::buffers() const {
  std::vector<NamedTensor> params, buffers;
  main_.collect("main", params, buffers);
  if (!config_.main_only) {
    low_.collect("low", params, buffers);
    high_.collect("high", params, buffers);
  }
  for (const auto& m : lm_) m.collect("fusion_lm" + std::to_string(m.layer), params, buffers);
  for (const auto& m : hm_) m.collect("fusion_hm" + std::to_string(m.layer), params, buffers);
  return buffers;
}

std::vector<NamedTensor> XNetV2Model::state() const {
  std::vector<NamedTensor> all = parameters();
  for (auto& b : buffers()) all.push_back(std::move(b));
  return all;
}

std::size_t count_elements(const std::vector<NamedTensor>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.numel();
  return n;
}

ParameterReport XNetV2Model::parameter_report() const {
  ParameterReport r;
  std::vector<NamedTensor> buffers;
  auto count = [&](const auto& part, const std::string& prefix) {
    std::vector<NamedTensor> params;
    part.collect(prefix, params, buffers);
    return count_elements(params);
  };
  r.main = count(main_, "main");
  if (!config_.main_only) {
    r.low = count(low_, "low");
    r.high = count(high_, "high");
  }
  for (const auto& m : lm_) r.fusion_lm += count(m, "lm");
  for (const auto& m : hm_) r.fusion_hm += count(m, "hm");
  return r;
}

std::vector<LabelMap> infer(const XNetV2Model& model, const Tensor& images, const InferOptions& options) {
  if (!images.defined() || images.ndim() != 4) throw std::invalid_argument("infer: expected [N,C,H,W] images");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t per = static_cast<std::size_t>(c) * h * w;
  std::vector<Tensor> xm, xl, xh;
  for (int i = 0; i < n; ++i) {
    std::vector<float> v(images.data().begin() + static_cast<std::ptrdiff_t>(i * per),
                         images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    NetworkInputs in = build_inputs(Tensor::from_vector({c, h, w}, std::move(v)), options.weights, options.preprocess);
    xm.push_back(std::move(in.main));
    xl.push_back(std::move(in.low));
    xh.push_back(std::move(in.high));
  }
  NoGradGuard no_grad;
  const Predictions p = model.forward(stack_batch(xm), stack_batch(xl), stack_batch(xh), false, true);
  const std::vector<int> labels = argmax_channels(p.main);
  std::vector<LabelMap> maps;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    maps.emplace_back(h, w, std::vector<int>(labels.begin() + static_cast<std::ptrdiff_t>(i * hw),
                                             labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * hw)));
  }
  return maps;
}

}  // namespace freqseg
