#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "akd/common.hpp"

namespace akd {

namespace detail {
struct TensorImpl {
  Shape dims;
  std::vector<double> values;
  std::vector<double> grad;      // empty until first use
  std::vector<double> velocity;  // SGD momentum buffer, managed by nn::sgd_step
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major tensor of 64-bit floats with an optional gradient slot.
/// Copying a Tensor copies the handle; storage is shared. Parameters live
/// across training steps while compute graphs are rebuilt per forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape dims, bool requires_grad = false);
  static Tensor full(Shape dims, double value, bool requires_grad = false);
  static Tensor from_values(Shape dims, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& dims() const { return impl_->dims; }
  int64_t rank() const { return static_cast<int64_t>(impl_->dims.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }

  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }
  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }

  /// Value of a scalar tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Allocates a zeroed grad slot if absent.
  void ensure_grad();
  void zero_grad();
  double* grad_data() { return impl_->grad.data(); }
  const std::vector<double>& grad() const { return impl_->grad; }
  std::vector<double>& mutable_grad() { return impl_->grad; }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

  /// Value copy with no gradient tracking and fresh storage.
  Tensor detached_copy() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Reverse-mode tape. Ops execute eagerly and append a node per call whose
/// inputs precede it; backward() visits nodes exactly once in reverse append
/// order. One graph and its tensors belong to a single thread for the
/// duration of a forward/backward pair. Graphs are cheap: build one per
/// training step and drop it.
class Graph {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);

  enum class EwKind { add, sub, mul };
  Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::add, a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::sub, a, b); }
  Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::mul, a, b); }
  /// Pointwise division; denominator must be nonzero.
  Tensor divide(const Tensor& a, const Tensor& b);

  Tensor add_scalar(const Tensor& a, double c);
  Tensor mul_scalar(const Tensor& a, double c);

  Tensor relu(const Tensor& x);
  /// Natural log; input must be strictly positive.
  Tensor log(const Tensor& x);
  Tensor sqrt(const Tensor& x);

  /// Temperature softmax over the last dimension of a rank-1 or rank-2
  /// tensor, computed with max-subtraction. temperature must be > 0.
  Tensor softmax_t(const Tensor& logits, double temperature);

  /// log(softmax_t(logits, temperature)), computed directly so it stays
  /// finite even where the softmax itself would underflow.
  Tensor log_softmax_t(const Tensor& logits, double temperature);

  /// x*log(x) pointwise with the 0*log(0) = 0 convention; x must be >= 0.
  Tensor xlogx(const Tensor& x);

  /// Sum of all entries -> scalar.
  Tensor sum(const Tensor& x);
  /// Mean of all entries -> scalar.
  Tensor mean(const Tensor& x);

  /// View with the same element count under new dims.
  Tensor reshape(const Tensor& x, Shape dims);

  /// Row i of a rank-2 tensor -> rank-1.
  Tensor row(const Tensor& m, int64_t i);
  /// Column j of a rank-2 tensor -> rank-1.
  Tensor col(const Tensor& m, int64_t j);
  /// Stacks equal-length vectors as columns: m vectors of length r -> [r, m].
  Tensor concat_cols(const std::vector<Tensor>& cols);
  /// Scales row i of m by s[i]: [r,c] x [r] -> [r,c].
  Tensor scale_rows(const Tensor& m, const Tensor& s);
  /// Adds b to every row: [r,c] x [c] -> [r,c].
  Tensor bias_add(const Tensor& m, const Tensor& b);
  /// out[i] = m[i, labels[i]]; gradient scatters back to the picked entries.
  Tensor gather_classes(const Tensor& m, const std::vector<int>& labels);

  /// [C,H,W] -> [C]: max over each channel plane. Ties break at the first
  /// row-major index; the gradient routes there.
  Tensor global_max_pool(const Tensor& x);
  /// Batched variant: [B,C,H,W] -> [B,C].
  Tensor global_max_pool_batch(const Tensor& x);

  /// 3x3 convolution, stride 1, pad 1: [B,Ci,H,W] x [Co,Ci,3,3] + [Co]
  /// -> [B,Co,H,W].
  Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

  /// Populates grad slots of every requires_grad tensor reachable from loss.
  /// Leaf gradients accumulate across calls; call zero_grad on the leaves
  /// (not the graph) to reset them.
  void backward(const Tensor& loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* kind;
    std::shared_ptr<detail::TensorImpl> out;
    std::function<void()> backprop;
  };

  Tensor record(const char* kind, Tensor out, std::initializer_list<Tensor> inputs,
                std::function<void()> backprop);

  std::vector<Node> nodes_;
};

}  // namespace akd
