#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace essuda::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when an operation receives operands it cannot combine.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward or backward result contains NaN or Inf, or when a
/// domain-restricted op (log) sees an invalid input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
};

/// Dense row-major array with an optional gradient buffer. Copies share the
/// underlying storage; use clone() or detach() for an independent buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  /// Gradient buffer; allocated as zeros on first access.
  std::span<T> grad() const;
  void zero_grad();

  /// Independent copy of the values that does not participate in gradients.
  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }
  TensorNode<T>* node() const noexcept { return node_.get(); }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Ordered record of executed differentiable operations. Ops append entries
/// while a tape is active on the current thread; backward() replays them in
/// exact reverse order.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates through every recorded entry.
  /// `visit` sees the name of each entry as it is replayed.
  void backward(const Tensor<T>& loss,
                const std::function<void(std::string_view)>& visit = {});

  /// Drops every entry and with it the intermediate buffers they captured.
  void clear() noexcept { entries_.clear(); }
  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<std::string_view> ops() const;

  static Tape* active() noexcept { return active_; }

 private:
  template <typename>
  friend class TapeScope;
  template <typename>
  friend class NoGradScope;
  static thread_local Tape* active_;
  std::vector<Entry> entries_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

/// Makes `tape` the recording target for the current thread for the lifetime
/// of the scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_) { Tape<T>::active_ = &tape; }
  ~TapeScope() { Tape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording (evaluation, optimizer updates).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<T>::active_) { Tape<T>::active_ = nullptr; }
  ~NoGradScope() { Tape<T>::active_ = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

}  // namespace essuda::ad
