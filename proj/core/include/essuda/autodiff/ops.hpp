#pragma once

#include <string_view>
#include <vector>

#include "essuda/autodiff/tensor.hpp"

// Differentiable operators. Every op checks its output for NaN/Inf and, when
// a tape is active and any operand requires a gradient, records its backward
// closure on that tape. Reductions accumulate in a fixed sequential order so
// identical inputs give bit-identical outputs.
namespace essuda::ad {

/// Cross-correlation over NCHW input with OIKhKw kernel. `bias` (length O)
/// may be an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
  return conv2d(input, kernel, Tensor<T>{}, stride, padding);
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Natural log. Throws NumericError naming `site` on a non-positive input.
template <typename T>
Tensor<T> log(const Tensor<T>& x, std::string_view site = "log");

/// max(x, floor); gradient passes only where x > floor.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor);

/// x^exponent for x >= 0.
template <typename T>
Tensor<T> pow(const Tensor<T>& x, T exponent);

template <typename T>
Tensor<T> abs(const Tensor<T>& x);

// Elementwise arithmetic with numpy-style broadcasting (size-1 and missing
// leading dims broadcast).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);

/// Sum over `axes` (empty = all axes). Reduced axes are dropped unless
/// `keepdims`.
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<std::size_t>& axes = {},
                     bool keepdims = false);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<std::size_t>& axes = {},
                      bool keepdims = false);

/// Bilinear resize of NCHW by an integer factor, half-pixel sampling with
/// edge clamping.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

}  // namespace essuda::ad
