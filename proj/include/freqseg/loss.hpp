#pragma once

#include <array>
#include <span>
#include <string_view>
#include <utility>

#include "freqseg/tensor.hpp"

namespace freqseg {

inline constexpr double kDiceSmooth = 1e-5;

/// 1 - mean over batch and classes of (2 sum(p*y) + eps) / (sum(p) + sum(y) + eps),
/// sums over pixels. p is [N,C,H,W] probabilities, y a same-shape one-hot
/// target that never receives a gradient.
Tensor dice_loss(const Tensor& p, const Tensor& y, double eps = kDiceSmooth);

/// Per-pixel argmax one-hot (lowest channel wins ties); a constant with no history.
Tensor pseudo_label(const Tensor& p);

/// One-hot [N,C,H,W] from row-major [N,H,W] class indices.
Tensor one_hot(std::span<const int> labels, int n, int num_classes, int height, int width);

/// Dice of each branch against the ground truth, summed.
Tensor supervised_loss(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high, const Tensor& y,
                       double eps = kDiceSmooth);

enum class Branch { Main, Low, High };

/// (prediction, pseudo-label source) for each consistency term. There is
/// deliberately no term between the LF and HF branches.
inline constexpr std::array<std::pair<Branch, Branch>, 4> kConsistencyPairs{{
    {Branch::Main, Branch::Low},
    {Branch::Low, Branch::Main},
    {Branch::Main, Branch::High},
    {Branch::High, Branch::Main},
}};

struct ConsistencyTerms {
  std::array<Tensor, 4> terms;  // in kConsistencyPairs order
  Tensor total;
};

/// Cross pseudo supervision between M and L and between M and H.
ConsistencyTerms consistency_terms(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high,
                                   double eps = kDiceSmooth);
Tensor unsupervised_loss(const Tensor& p_main, const Tensor& p_low, const Tensor& p_high, double eps = kDiceSmooth);

struct LossConfig {
  double lambda_max = 3.0;
  int max_epoch = 1;
  double smooth_eps = kDiceSmooth;
  void validate() const;
};

/// lambda_max * epoch / max_epoch; out-of-range epochs are clamped with a warning.
double lambda_at(int epoch, const LossConfig& config);

/// sup + lambda * unsup (`unsup` may be undefined, meaning no consistency term).
/// Throws std::runtime_error if either loss is non-finite.
Tensor total_loss(const Tensor& sup, const Tensor& unsup, double lambda);

}  // namespace freqseg
