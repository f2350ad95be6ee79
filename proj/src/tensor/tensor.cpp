#include "ciss/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ciss {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " holds " + std::to_string(shape_numel(shape_)) +
                     " values but " + std::to_string(data_.size()) + " were given");
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

template <typename T>
void Tape<T>::check_owned(Var<T> v) const {
  if (v.tape_ != this) throw std::invalid_argument("variable belongs to a different tape");
  if (v.id_ >= nodes_.size()) throw std::out_of_range("variable id out of range");
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (!value.all_finite()) throw NumericalError("non-finite value in leaf tensor");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward,
                       const char* op_name) {
  if (backward_done_) throw NumericalError("cannot record onto a tape after backward(); reset it first");
  if (!value.all_finite()) throw NumericalError(std::string("non-finite output from op '") + op_name + "'");
  Node node;
  node.value = std::move(value);
  node.op = op_name;
  for (const auto& p : parents) {
    check_owned(p);
    node.parents.push_back(p.id_);
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
std::span<T> Tape<T>::grad_buffer(Var<T> v) {
  check_owned(v);
  if (!nodes_[v.id_].requires_grad) throw std::logic_error("gradient requested for a node without requires_grad");
  auto& g = grads_[v.id_];
  if (g.empty()) g.assign(nodes_[v.id_].value.numel(), T{0});
  return g;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  check_owned(root);
  if (backward_done_) throw NumericalError("backward() called twice without reset_grads()");
  const Node& r = nodes_[root.id_];
  if (r.value.numel() != 1) throw ShapeError("backward root must be scalar, got shape " + shape_str(r.value.shape()));
  if (!r.requires_grad) throw NumericalError("backward root is detached from every gradient-requiring leaf");
  backward_done_ = true;

  grad_buffer(root)[0] += T{1};
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || grads_[i].empty()) continue;
    const std::vector<T>& g = grads_[i];
    n.backward(*this, std::span<const T>(g), n.value);
  }
}

template <typename T>
void Tape<T>::reset_grads() {
  for (auto& g : grads_) std::vector<T>().swap(g);
  backward_done_ = false;
}

template <typename T>
bool Tape<T>::has_grad(Var<T> v) const {
  check_owned(v);
  return !grads_[v.id_].empty();
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  check_owned(v);
  const auto& g = grads_[v.id_];
  if (g.empty()) return Tensor<T>(nodes_[v.id_].value.shape(), T{0});
  return Tensor<T>(nodes_[v.id_].value.shape(), g);
}

template <typename T>
std::size_t Tape<T>::grad_buffer_count() const {
  return static_cast<std::size_t>(std::count_if(grads_.begin(), grads_.end(), [](const auto& g) { return !g.empty(); }));
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ciss
