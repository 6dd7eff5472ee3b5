#pragma once

#include <functional>
#include <vector>

#include "essuda/autodiff/tensor.hpp"

namespace essuda::ad {

struct GradCheckReport {
  /// Max relative error between autodiff and central differences, per input.
  std::vector<double> max_rel_error;
  double tolerance = 0.0;
  bool passed = false;

  double worst() const;
};

/// Compares reverse-mode gradients of the scalar function `f` against central
/// finite differences. `f` must read `inputs` by shared storage (the checker
/// perturbs their values in place and restores them). Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           std::vector<Tensor<double>> inputs, double eps = 1e-5,
                           double tol = 1e-4, double abs_floor = 1e-6);

}  // namespace essuda::ad
