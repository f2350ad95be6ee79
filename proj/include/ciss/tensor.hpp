#pragma once

// Dense row-major tensors and a single-threaded reverse-mode tape.
//
// Values recorded on a tape are immutable. Gradient buffers exist only for
// nodes that require a gradient, and are allocated the first time a gradient
// reaches them.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ciss/errors.hpp"

namespace ciss {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  /// Value of a one-element tensor.
  T item() const;

  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Propagates the gradient of a node into its parents' gradient buffers.
  /// Receives the node's own forward value as `out`.
  using BackwardFn = std::function<void(Tape&, std::span<const T> grad_out, const Tensor<T>& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op result. The backward function is kept only if some parent
  /// requires a gradient. Throws NumericalError on non-finite values.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn backward, const char* op_name);

  /// Accumulates d(root)/d(node) into every gradient-requiring node reachable
  /// from `root`. A second call without reset_grads() is an error.
  void backward(Var<T> root);
  void reset_grads();

  /// Gradient of a node after backward(); zeros if nothing reached it.
  Tensor<T> grad(Var<T> v) const;
  bool has_grad(Var<T> v) const;

  /// Mutable gradient accumulator for `v`, allocated on first use.
  std::span<T> grad_buffer(Var<T> v);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }

  std::size_t size() const { return nodes_.size(); }
  std::size_t grad_buffer_count() const;
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "leaf";
  };

  void check_owned(Var<T> v) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

template <typename T>
Tape<T>& Var<T>::tape() const {
  return *tape_;
}

// ---------------------------------------------------------------------------
// Differentiable ops. All inputs must live on the same tape.

/// Cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
/// kernel. Output extent is floor((H + 2 pad - k) / stride) + 1.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, int stride, int pad);

template <typename T>
Var<T> relu(Var<T> x);

/// Per-pixel softmax over the channel axis of a C x H x W tensor.
template <typename T>
Var<T> softmax_channels(Var<T> logits);

/// Bilinear resize by an integer factor in {2, 4}, half-pixel centers.
template <typename T>
Var<T> upsample_bilinear(Var<T> x, int factor);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

}  // namespace ciss
