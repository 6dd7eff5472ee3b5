#include "essuda/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace essuda::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_) return;
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor copy(node_->shape, node_->data, node_->requires_grad);
  copy.node_->grad = node_->grad;
  return copy;
}

template <typename T>
void Tape<T>::record(std::string_view op, std::function<void()> backward) {
  entries_.push_back(Entry{op, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss, const std::function<void(std::string_view)>& visit) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  Tensor<T> seed = loss;
  seed.grad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (visit) visit(it->op);
    it->backward();
  }
}

template <typename T>
std::vector<std::string_view> Tape<T>::ops() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace essuda::ad
