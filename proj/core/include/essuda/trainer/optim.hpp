#pragma once

#include <vector>

#include "essuda/autodiff/tensor.hpp"

namespace essuda::trainer {

/// lr0 * (1 - iter / max_iter)^power for 0 <= iter <= max_iter.
double poly_lr(long iter, long max_iter, double lr0, double power);

/// Heavy-ball SGD: v = momentum * v + g; p -= lr * v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum() = default;
  SgdMomentum(std::vector<ad::Tensor<T>> params, double momentum);

  /// Applies one update from the parameters' current gradients. Parameters
  /// without a gradient buffer are treated as having zero gradient.
  void step(double lr);
  void zero_grad();

  const std::vector<ad::Tensor<T>>& params() const { return params_; }
  const std::vector<std::vector<T>>& buffers() const { return buffers_; }
  void set_buffers(std::vector<std::vector<T>> buffers);
  double momentum() const { return momentum_; }

 private:
  std::vector<ad::Tensor<T>> params_;
  std::vector<std::vector<T>> buffers_;
  double momentum_ = 0.9;
};

/// Plain function form of one update on raw arrays.
template <typename T>
void sgd_momentum_step(std::vector<T>& params, const std::vector<T>& grads, std::vector<T>& velocity,
                       double lr, double momentum = 0.9);

}  // namespace essuda::trainer
