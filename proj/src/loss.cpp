#include "freqseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "freqseg/common.hpp"

namespace freqseg {

Tensor dice_loss(const Tensor& p, const Tensor& y, double eps) {
  if (!p.defined() || !y.defined() || p.ndim() != 4 || p.shape() != y.shape()) {
    throw std::invalid_argument("dice_loss: prediction and target must share a [N,C,H,W] shape, got " +
                                (p.defined() ? shape_str(p.shape()) : std::string("<undefined>")) + " vs " +
                                (y.defined() ? shape_str(y.shape()) : std::string("<undefined>")));
  }
  const int n = p.dim(0), c = p.dim(1);
  const std::size_t hw = static_cast<std::size_t>(p.dim(2)) * p.dim(3);
  const std::size_t groups = static_cast<std::size_t>(n) * c;
  const auto pv = p.data(), yv = y.data();
  std::vector<double> inter(groups), denom(groups);
  double dice_sum = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    double i = 0.0, sp = 0.0, sy = 0.0;
    for (std::size_t k = g * hw; k < (g + 1) * hw; ++k) {
      i += static_cast<double>(pv[k]) * yv[k];
      sp += pv[k];
      sy += yv[k];
    }
    inter[g] = 2.0 * i + eps;
    denom[g] = sp + sy + eps;
    dice_sum += inter[g] / denom[g];
  }
  const double loss = 1.0 - dice_sum / static_cast<double>(groups);
  std::vector<float> out{static_cast<float>(loss)};
  if (!needs_grad({&p})) return Tensor::from_vector({}, std::move(out));
  return Tensor::make_result({}, std::move(out), {p},
                             [p, y, inter = std::move(inter), denom = std::move(denom), groups, hw](auto g, auto) mutable {
                               auto gp = p.mutable_grad();
                               const auto yv = y.data();
                               const double scale = -static_cast<double>(g[0]) / static_cast<double>(groups);
                               for (std::size_t k = 0; k < groups; ++k) {
                                 const double d2 = denom[k] * denom[k];
                                 for (std::size_t j = k * hw; j < (k + 1) * hw; ++j) {
                                   const double dd = (2.0 * yv[j] * denom[k] - inter[k]) / d2;
                                   gp[j] += static_cast<float>(scale * dd);
                                 }
                               }
                             });
}

Tensor pseudo_label(const Tensor& p) {
  const std::vector<int> labels = argmax_channels(p);
  return one_hot(labels, p.dim(0), p.dim(1), p.dim(2), p.dim(3));
}

Tensor one_hot(std::span<const int> labels, int n, int num_classes, int height, int width) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (labels.size() != static_cast<std::size_t>(n) * hw) throw std::invalid_argument("one_hot: label count mismatch");
  std::vector<float> v(static_cast<std::size_t>(n) * num_classes * hw, 0.0f);
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const int cls = labels[static_cast<std::size_t>(b) * hw + i];
      if (cls < 0 || cls >= num_classes) {
        throw std::invalid_argument("one_hot: label " + std::to_string(cls) + " outside [0, " +
                                    std::to_string(num_classes) + ")");
      }
      v[(static_cast<std::size_t>(b) * num_classes + cls) * hw + i] = 1.0f;
    }
  }
  return Tensor::from_vector({n, num_classes, height, width}, std::move(v));
}

Tensor supervised_loss(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high, const Tensor& y, double eps) {
  return add(add(dice_loss(p_main, y, eps), dice_loss(p_low, y, eps)), dice_loss(p_high, y, eps));
}

ConsistencyTerms consistency_terms(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high, double eps) {
  auto pick = [&](Branch b) -> const Tensor& {
    switch (b) {
      case Branch::Main: return p_main;
      case Branch::Low: return p_low;
      case Branch::High: return p_high;
    }
    return p_main;
  };
  ConsistencyTerms out;
  for (std::size_t i = 0; i < kConsistencyPairs.size(); ++i) {
    const auto [pred, source] = kConsistencyPairs[i];
    out.terms[i] = dice_loss(pick(pred), pseudo_label(pick(source)), eps);
    out.total = out.total.defined() ? add(out.total, out.terms[i]) : out.terms[i];
  }
  return out;
}

Tensor unsupervised_loss(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high, double eps) {
  return consistency_terms(p_main, p_low, p_high, eps).total;
}

void LossConfig::validate() const {
  if (!(lambda_max >= 0.0)) throw std::invalid_argument("lambda_max must be >= 0");
  if (max_epoch < 1) throw std::invalid_argument("max_epoch must be >= 1");
  if (!(smooth_eps > 0.0)) throw std::invalid_argument("smooth_eps must be > 0");
}

double lambda_at(int epoch, const LossConfig& config) {
  config.validate();
  if (epoch < 0 || epoch > config.max_epoch) {
    log_warn("lambda_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.max_epoch) +
             "], clamped");
    epoch = std::clamp(epoch, 0, config.max_epoch);
  }
  return config.lambda_max * static_cast<double>(epoch) / static_cast<double>(config.max_epoch);
}

Tensor total_loss(const Tensor& sup, const Tensor& unsup, double lambda) {
  if (!std::isfinite(sup.item())) throw std::runtime_error("non-finite supervised loss");
  if (!unsup.defined()) return sup;
  if (!std::isfinite(unsup.item())) throw std::runtime_error("non-finite unsupervised loss");
  if (!std::isfinite(lambda)) throw std::runtime_error("non-finite lambda");
  return add(sup, scale(unsup, static_cast<float>(lambda)));
}

}  // namespace freqseg
