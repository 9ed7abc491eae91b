#pragma once

// Dense float32 tensors with define-by-run reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage. Every op
// returns a fresh tensor; when gradient tracking is enabled and one of the
// inputs requires a gradient, the result records a backward closure and
// references to its inputs. Dropping the last handle to a loss frees the
// graph; parameter leaves keep their data and accumulated grads.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace freqseg {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// Gradient of the op output, plus the op output values.
using BackwardFn = std::function<void(std::span<const float> grad_out, std::span<const float> out)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  /// Extent along `axis`; negative axes count from the back.
  int dim(int axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  /// Direct write access (the handle is shared, so this is const). Meant for leaves (parameters, buffers, inputs);
  /// writing into a tensor that is part of a live graph invalidates it.
  std::span<float> mutable_data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const float> grad() const;
  /// Gradient buffer, zero-allocated on first access.
  std::span<float> mutable_grad() const;
  void zero_grad() const;

  /// Copy of the values as a new leaf without history.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls.
  void backward() const;

  /// Identity of the underlying storage (for graph introspection in tests).
  const void* id() const { return impl_.get(); }

  /// Builds the result of a differentiable op. `backward` must accumulate
  /// into the grads of whichever `inputs` require them; it is dropped when
  /// no input requires a gradient or tracking is disabled.
  static Tensor make_result(Shape shape, std::vector<float> values, std::vector<Tensor> inputs,
                            BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True if gradient tracking is enabled on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Whether building an op over `inputs` needs to record history.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

// Elementwise (shapes must match exactly; no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor relu(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Cross-correlation. input [N,C,H,W], weight [K,C,kh,kw], bias [K] or
/// undefined. kh and kw must be odd.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Non-overlapping max pooling; ties route the gradient to the first
/// element of the window in row-major order.
Tensor maxpool2d(const Tensor& input, int window);

Tensor upsample_nearest2d(const Tensor& input, int factor);

/// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]. Either side may have zero channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Per-pixel softmax over dim 1 of a [N,C,H,W] tensor (C >= 2).
Tensor softmax_channels(const Tensor& logits);

/// Per-channel batch normalization of [N,C,H,W]. In training mode uses batch
/// statistics and updates the running buffers in place (unbiased variance);
/// in eval mode uses the running buffers.
Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, float momentum = 0.1f, float eps = 1e-5f);

/// Per-pixel argmax over dim 1 of [N,C,H,W]; lowest channel wins ties.
/// Result is row-major [N,H,W].
std::vector<int> argmax_channels(const Tensor& t);

}  // namespace freqseg
