#include "essuda/trainer/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace essuda::trainer {

double poly_lr(long iter, long max_iter, double lr0, double power) {
  if (max_iter <= 0 || iter < 0 || iter > max_iter) {
    throw std::out_of_range("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(max_iter) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<ad::Tensor<T>> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  for (const auto& p : params_) buffers_.emplace_back(p.numel(), T(0));
}

template <typename T>
void SgdMomentum<T>::step(double lr) {
  const T m = static_cast<T>(momentum_);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& v = buffers_[i];
    auto data = p.data();
    if (p.has_grad()) {
      auto g = p.grad();
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = m * v[j] + g[j];
        data[j] -= rate * v[j];
      }
    } else {
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = m * v[j];
        data[j] -= rate * v[j];
      }
    }
  }
}

template <typename T>
void SgdMomentum<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void SgdMomentum<T>::set_buffers(std::vector<std::vector<T>> buffers) {
  if (buffers.size() != params_.size()) {
    throw std::invalid_argument("optimizer state has " + std::to_string(buffers.size()) +
                                " buffers for " + std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (buffers[i].size() != params_[i].numel()) {
      throw std::invalid_argument("optimizer buffer " + std::to_string(i) + " has the wrong size");
    }
  }
  buffers_ = std::move(buffers);
}

template <typename T>
void sgd_momentum_step(std::vector<T>& params, const std::vector<T>& grads, std::vector<T>& velocity,
                       double lr, double momentum) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_momentum_step: size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = static_cast<T>(momentum) * velocity[i] + grads[i];
    params[i] -= static_cast<T>(lr) * velocity[i];
  }
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;
template void sgd_momentum_step(std::vector<float>&, const std::vector<float>&, std::vector<float>&,
                                double, double);
template void sgd_momentum_step(std::vector<double>&, const std::vector<double>&,
                                std::vector<double>&, double, double);

}  // namespace essuda::trainer
