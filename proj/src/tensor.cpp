#include "freqseg/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace freqseg {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void check_shape(const Shape& shape) {
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_4d(const Tensor& t, const char* op, const char* what) {
  require_defined(t, op);
  if (t.ndim() != 4) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must be 4-D [N,C,H,W], got " +
                                shape_str(t.shape()));
  }
}

// Unrolls one [C,H,W] image into a [C*kh*kw, OH*OW] column matrix.
// Row r of the lowered matrix for one image lives at cols + r * row_stride.
void im2col(const float* img, std::ptrdiff_t row_stride, int channels, int height, int width, int kh, int kw,
            int stride, int pad, int out_h, int out_w, float* cols) {
  for (int c = 0; c < channels; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        float* row = cols + (static_cast<std::ptrdiff_t>(c * kh + i) * kw + j) * row_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride + i - pad;
          float* dst = row + oy * out_w;
          if (y < 0 || y >= height) {
            std::fill(dst, dst + out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(y) * width;
          if (stride == 1) {
            // Valid outputs are the ox with 0 <= ox + j - pad < width.
            const int lo = std::clamp(pad - j, 0, out_w), hi = std::clamp(width + pad - j, lo, out_w);
            std::fill(dst, dst + lo, 0.0f);
            std::copy(src + lo + j - pad, src + hi + j - pad, dst + lo);
            std::fill(dst + hi, dst + out_w, 0.0f);
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride + j - pad;
            dst[ox] = (x >= 0 && x < width) ? src[x] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, std::ptrdiff_t row_stride, int channels, int height, int width, int kh, int kw,
                int stride, int pad, int out_h, int out_w, float* img) {
  for (int c = 0; c < channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const float* row = cols + (static_cast<std::ptrdiff_t>(c * kh + i) * kw + j) * row_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride + i - pad;
          if (y < 0 || y >= height) continue;
          const float* src = row + oy * out_w;
          float* dst = plane + static_cast<std::size_t>(y) * width;
          if (stride == 1) {
            const int lo = std::clamp(pad - j, 0, out_w), hi = std::clamp(width + pad - j, lo, out_w);
            float* d = dst + j - pad;
            for (int ox = lo; ox < hi; ++ox) d[ox] += src[ox];
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride + j - pad;
            if (x >= 0 && x < width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

// Lowers a batch [N,C,H,W] into [C*kh*kw, N*oh*ow].
void lower_batch(const float* x, int n, int c, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
                 float* cols) {
  const std::ptrdiff_t ohw = static_cast<std::ptrdiff_t>(oh) * ow, nohw = ohw * n;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  for (int b = 0; b < n; ++b) {
    const float* img = x + static_cast<std::size_t>(b) * c * h * w;
    if (direct) {
      for (int ch = 0; ch < c; ++ch) std::copy(img + ch * ohw, img + (ch + 1) * ohw, cols + ch * nohw + b * ohw);
    } else {
      im2col(img, nohw, c, h, w, kh, kw, stride, pad, oh, ow, cols + b * ohw);
    }
  }
}

// Per-thread buffers reused across conv calls; contents are not preserved.
std::vector<float>& scratch(int slot, std::size_t size) {
  thread_local std::array<std::vector<float>, 2> buffers;
  auto& buf = buffers[static_cast<std::size_t>(slot)];
  if (buf.size() < size) buf.resize(size);
  return buf;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_vector(Shape shape, std::vector<float> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("from_vector: " + std::to_string(values.size()) + " values for shape " +
                                shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from_vector({}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::ndim() const { return static_cast<int>(impl_->shape.size()); }

int Tensor::dim(int axis) const {
  const int n = ndim();
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw std::out_of_range("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const float> Tensor::data() const { return impl_->data; }
std::span<float> Tensor::mutable_data() const { return impl_->data; }

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return !impl_->backward; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }

std::span<float> Tensor::mutable_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_) impl_->grad.assign(impl_->data.size(), 0.0f);
}

Tensor Tensor::detach() const { return from_vector(impl_->shape, impl_->data); }

Tensor Tensor::make_result(Shape shape, std::vector<float> values, std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out = from_vector(std::move(shape), std::move(values));
  if (!t_grad_enabled || !backward) return out;
  for (const Tensor& in : inputs) {
    if (in.requires_grad()) out.impl_->parents.push_back(in.impl_);
  }
  if (out.impl_->parents.empty()) return out;
  out.impl_->requires_grad = true;
  out.impl_->backward = std::move(backward);
  return out;
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!impl_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");

  // Iterative post-order DFS; reversed, it is a valid topological order.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorImpl* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are allocated by the first contribution (mutable_grad);
  // a node that received none has a zero grad and is skipped.
  for (auto* node : order) {
    if (node->backward) std::vector<float>().swap(node->grad);
  }
  if (impl_->grad.size() != 1) impl_->grad.assign(1, 0.0f);
  impl_->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(node->grad, node->data);
    std::vector<float>().swap(node->grad);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t && t->requires_grad(); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  if (!needs_grad({&a, &b})) return Tensor::from_vector(a.shape(), std::move(out));
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  if (!needs_grad({&a, &b})) return Tensor::from_vector(a.shape(), std::move(out));
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  if (!needs_grad({&a, &b})) return Tensor::from_vector(a.shape(), std::move(out));
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) mutable {
    auto da = a.data(), db = b.data();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  require_defined(a, "scale");
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
  if (!needs_grad({&a})) return Tensor::from_vector(a.shape(), std::move(out));
  return Tensor::make_result(a.shape(), std::move(out), {a}, [a, factor](auto g, auto) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > 0.0f ? da[i] : 0.0f;
  if (!needs_grad({&a})) return Tensor::from_vector(a.shape(), std::move(out));
  return Tensor::make_result(a.shape(), std::move(out), {a}, [a](auto g, auto y) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0.0f) ga[i] += g[i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  check_shape(shape);
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  if (!needs_grad({&a})) return Tensor::from_vector(std::move(shape), std::move(out));
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [a](auto g, auto) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  std::vector<float> out{static_cast<float>(acc)};
  if (!needs_grad({&a})) return Tensor::from_vector({}, std::move(out));
  return Tensor::make_result({}, std::move(out), {a}, [a](auto g, auto) mutable {
    auto ga = a.mutable_grad();
    for (float& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw std::invalid_argument("mean of an empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(a.numel()));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_4d(input, "conv2d", "input");
  require_4d(weight, "conv2d", "weight");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int k = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    throw std::invalid_argument("conv2d: input channel dimension is " + std::to_string(c) + " but weight " +
                                shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel height/width must be odd, got " + shape_str(weight.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != k)) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                                std::to_string(k) + " output channels");
  }
  const int span_h = h + 2 * padding - kh, span_w = w + 2 * padding - kw;
  if (span_h < 0 || span_h % stride != 0) {
    throw std::invalid_argument("conv2d: height " + std::to_string(h) + " incompatible with kernel " +
                                std::to_string(kh) + ", padding " + std::to_string(padding) + ", stride " +
                                std::to_string(stride));
  }
  if (span_w < 0 || span_w % stride != 0) {
    throw std::invalid_argument("conv2d: width " + std::to_string(w) + " incompatible with kernel " +
                                std::to_string(kw) + ", padding " + std::to_string(padding) + ", stride " +
                                std::to_string(stride));
  }
  const int oh = span_h / stride + 1, ow = span_w / stride + 1;
  const int ckk = c * kh * kw, ohw = oh * ow;
  const Eigen::Index nohw = static_cast<Eigen::Index>(n) * ohw;

  // All images share one GEMM: cols is [ckk, N*ohw], image b in columns b*ohw...
  std::vector<float>& cols = scratch(0, static_cast<std::size_t>(ckk) * nohw);
  lower_batch(input.data().data(), n, c, h, w, kh, kw, stride, padding, oh, ow, cols.data());
  std::vector<float>& prod = scratch(1, static_cast<std::size_t>(k) * nohw);
  MutMap(prod.data(), k, nohw).noalias() = ConstMap(weight.data().data(), k, ckk) * ConstMap(cols.data(), ckk, nohw);

  std::vector<float> out(static_cast<std::size_t>(n) * k * ohw);
  for (int b = 0; b < n; ++b) {
    for (int kk = 0; kk < k; ++kk) {
      const float* src = prod.data() + static_cast<std::size_t>(kk) * nohw + static_cast<std::size_t>(b) * ohw;
      float* dst = out.data() + (static_cast<std::size_t>(b) * k + kk) * ohw;
      const float bv = bias.defined() ? bias.data()[static_cast<std::size_t>(kk)] : 0.0f;
      for (int i = 0; i < ohw; ++i) dst[i] = src[i] + bv;
    }
  }

  Shape out_shape{n, k, oh, ow};
  if (!needs_grad({&input, &weight, &bias})) return Tensor::from_vector(std::move(out_shape), std::move(out));
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {input, weight, bias},
      [input, weight, bias, n, c, h, w, k, kh, kw, stride, padding, oh, ow, ckk, ohw, nohw](auto g, auto) mutable {
        // Gradient rearranged to [k, N*ohw] to match the forward GEMM.
        std::vector<float>& go = scratch(1, static_cast<std::size_t>(k) * nohw);
        for (int b = 0; b < n; ++b) {
          for (int kk = 0; kk < k; ++kk) {
            const float* src = g.data() + (static_cast<std::size_t>(b) * k + kk) * ohw;
            std::copy(src, src + ohw, go.data() + static_cast<std::size_t>(kk) * nohw + static_cast<std::size_t>(b) * ohw);
          }
        }
        ConstMap gom(go.data(), k, nohw);
        if (bias.requires_grad()) {
          auto gb = bias.mutable_grad();
          for (int kk = 0; kk < k; ++kk) gb[static_cast<std::size_t>(kk)] += gom.row(kk).sum();
        }
        if (weight.requires_grad()) {
          std::vector<float>& cols = scratch(0, static_cast<std::size_t>(ckk) * nohw);
          lower_batch(input.data().data(), n, c, h, w, kh, kw, stride, padding, oh, ow, cols.data());
          MutMap(weight.mutable_grad().data(), k, ckk).noalias() += gom * ConstMap(cols.data(), ckk, nohw).transpose();
        }
        if (input.requires_grad()) {
          std::vector<float>& dcols = scratch(0, static_cast<std::size_t>(ckk) * nohw);
          MutMap(dcols.data(), ckk, nohw).noalias() = ConstMap(weight.data().data(), k, ckk).transpose() * gom;
          float* gi = input.mutable_grad().data();
          const std::size_t chw = static_cast<std::size_t>(c) * h * w;
          for (int b = 0; b < n; ++b) {
            col2im_add(dcols.data() + static_cast<std::size_t>(b) * ohw, nohw, c, h, w, kh, kw, stride, padding, oh,
                       ow, gi + b * chw);
          }
        }
      });
}

Tensor maxpool2d(const Tensor& input, int window) {
  require_4d(input, "maxpool2d", "input");
  if (window < 1) throw std::invalid_argument("maxpool2d: window must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % window != 0 || w % window != 0) {
    throw std::invalid_argument("maxpool2d: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " not divisible by window " + std::to_string(window));
  }
  const int oh = h / window, ow = w / window;
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  std::vector<float> out(planes * oh * ow);
  std::vector<int> argmax(out.size());
  auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = (oy * window) * w + ox * window;
        float best_v = x[base + static_cast<std::size_t>(best)];
        for (int i = 0; i < window; ++i) {
          for (int j = 0; j < window; ++j) {
            const int idx = (oy * window + i) * w + ox * window + j;
            const float v = x[base + static_cast<std::size_t>(idx)];
            if (v > best_v) {
              best_v = v;
              best = idx;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  Shape out_shape{n, c, oh, ow};
  if (!needs_grad({&input})) return Tensor::from_vector(std::move(out_shape), std::move(out));
  return Tensor::make_result(std::move(out_shape), std::move(out), {input},
                             [input, argmax = std::move(argmax), h, w, oh, ow](auto g, auto) mutable {
                               auto gi = input.mutable_grad();
                               const std::size_t plane_out = static_cast<std::size_t>(oh) * ow;
                               const std::size_t plane_in = static_cast<std::size_t>(h) * w;
                               for (std::size_t o = 0; o < g.size(); ++o) {
                                 const std::size_t p = o / plane_out;
                                 gi[p * plane_in + static_cast<std::size_t>(argmax[o])] += g[o];
                               }
                             });
}

Tensor upsample_nearest2d(const Tensor& input, int factor) {
  require_4d(input, "upsample_nearest2d", "input");
  if (factor < 1) throw std::invalid_argument("upsample_nearest2d: factor must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = h * factor, ow = w * factor;
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  std::vector<float> out(planes * oh * ow);
  auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (int y = 0; y < oh; ++y) {
      const float* src = x.data() + (p * h + y / factor) * w;
      float* dst = out.data() + (p * oh + y) * ow;
      for (int xx = 0; xx < ow; ++xx) dst[xx] = src[xx / factor];
    }
  }
  Shape out_shape{n, c, oh, ow};
  if (!needs_grad({&input})) return Tensor::from_vector(std::move(out_shape), std::move(out));
  return Tensor::make_result(std::move(out_shape), std::move(out), {input},
                             [input, planes, h, w, oh, ow, factor](auto g, auto) mutable {
                               auto gi = input.mutable_grad();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (int y = 0; y < oh; ++y) {
                                   const float* src = g.data() + (p * oh + y) * ow;
                                   float* dst = gi.data() + (p * h + y / factor) * w;
                                   for (int xx = 0; xx < ow; ++xx) dst[xx / factor] += src[xx];
                                 }
                               }
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_4d(a, "concat_channels", "first input");
  require_4d(b, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat_channels: non-channel dims differ: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  const std::size_t sa = ca * hw, sb = cb * hw;
  std::vector<float> out(static_cast<std::size_t>(n) * (sa + sb));
  auto da = a.data(), db = b.data();
  for (int i = 0; i < n; ++i) {
    std::copy_n(da.data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(db.data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  Shape out_shape{n, ca + cb, a.dim(2), a.dim(3)};
  if (!needs_grad({&a, &b})) return Tensor::from_vector(std::move(out_shape), std::move(out));
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, [a, b, n, sa, sb](auto g, auto) mutable {
    for (int i = 0; i < n; ++i) {
      const float* src = g.data() + i * (sa + sb);
      if (a.requires_grad()) {
        float* ga = a.mutable_grad().data() + i * sa;
        for (std::size_t j = 0; j < sa; ++j) ga[j] += src[j];
      }
      if (b.requires_grad()) {
        float* gb = b.mutable_grad().data() + i * sb;
        for (std::size_t j = 0; j < sb; ++j) gb[j] += src[sa + j];
      }
    }
  });
}

Tensor softmax_channels(const Tensor& logits) {
  require_4d(logits, "softmax_channels", "logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (c < 2) throw std::invalid_argument("softmax_channels: need at least 2 channels, got " + std::to_string(c));
  const std::size_t hw = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  std::vector<float> out(logits.numel());
  auto x = logits.data();
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      float mx = -std::numeric_limits<float>::infinity();
      for (int k = 0; k < c; ++k) mx = std::max(mx, x[base + k * hw + p]);
      double z = 0.0;
      for (int k = 0; k < c; ++k) z += std::exp(static_cast<double>(x[base + k * hw + p] - mx));
      for (int k = 0; k < c; ++k) {
        out[base + k * hw + p] = static_cast<float>(std::exp(static_cast<double>(x[base + k * hw + p] - mx)) / z);
      }
    }
  }
  if (!needs_grad({&logits})) return Tensor::from_vector(logits.shape(), std::move(out));
  return Tensor::make_result(logits.shape(), std::move(out), {logits}, [logits, n, c, hw](auto g, auto y) mutable {
    auto gi = logits.mutable_grad();
    for (int b = 0; b < n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * c * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += static_cast<double>(g[base + k * hw + p]) * y[base + k * hw + p];
        for (int k = 0; k < c; ++k) {
          const std::size_t i = base + k * hw + p;
          gi[i] += static_cast<float>(y[i] * (g[i] - dot));
        }
      }
    }
  });
}

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, float momentum, float eps) {
  require_4d(input, "batch_norm2d", "input");
  const int n = input.dim(0), c = input.dim(1);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (!t->defined() || t->ndim() != 1 || t->dim(0) != c) {
      throw std::invalid_argument("batch_norm2d: per-channel parameters must have shape [" + std::to_string(c) +
                                  "]");
    }
  }
  const std::size_t hw = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  if (training && count < 2) throw std::invalid_argument("batch_norm2d: training needs more than one value per channel");

  auto x = input.data();
  std::vector<float> xhat(input.numel());
  std::vector<float> inv_std(static_cast<std::size_t>(c));
  std::vector<float> out(input.numel());
  auto gm = gamma.data(), bt = beta.data();
  for (int k = 0; k < c; ++k) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * c + k) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * c + k) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<double>(count);
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[static_cast<std::size_t>(k)] = static_cast<float>((1.0 - momentum) * rm[static_cast<std::size_t>(k)] + momentum * mu);
      rv[static_cast<std::size_t>(k)] =
          static_cast<float>((1.0 - momentum) * rv[static_cast<std::size_t>(k)] + momentum * unbiased);
    } else {
      mu = running_mean.data()[static_cast<std::size_t>(k)];
      var = running_var.data()[static_cast<std::size_t>(k)];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(k)] = static_cast<float>(is);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const float xh = static_cast<float>((x[off + i] - mu) * is);
        xhat[off + i] = xh;
        out[off + i] = gm[static_cast<std::size_t>(k)] * xh + bt[static_cast<std::size_t>(k)];
      }
    }
  }

  if (!needs_grad({&input, &gamma, &beta})) return Tensor::from_vector(input.shape(), std::move(out));
  return Tensor::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [input, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, hw, count,
       training](auto g, auto) mutable {
        auto gm = gamma.data();
        for (int k = 0; k < c; ++k) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += g[off + i];
              sum_gx += static_cast<double>(g[off + i]) * xhat[off + i];
            }
          }
          const auto kk = static_cast<std::size_t>(k);
          if (beta.requires_grad()) beta.mutable_grad()[kk] += static_cast<float>(sum_g);
          if (gamma.requires_grad()) gamma.mutable_grad()[kk] += static_cast<float>(sum_gx);
          if (!input.requires_grad()) continue;
          auto gi = input.mutable_grad();
          const double scale_k = static_cast<double>(gm[kk]) * inv_std[kk];
          const double m = static_cast<double>(count);
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              double d;
              if (training) {
                d = scale_k * (g[off + i] - sum_g / m - xhat[off + i] * sum_gx / m);
              } else {
                d = scale_k * g[off + i];
              }
              gi[off + i] += static_cast<float>(d);
            }
          }
        }
      });
}

std::vector<int> argmax_channels(const Tensor& t) {
  require_4d(t, "argmax_channels", "input");
  const int n = t.dim(0), c = t.dim(1);
  const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  std::vector<int> labels(static_cast<std::size_t>(n) * hw, 0);
  auto x = t.data();
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      int best = 0;
      float best_v = x[base + p];
      for (int k = 1; k < c; ++k) {
        const float v = x[base + k * hw + p];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      labels[static_cast<std::size_t>(b) * hw + p] = best;
    }
  }
  return labels;
}

}  // namespace freqseg
