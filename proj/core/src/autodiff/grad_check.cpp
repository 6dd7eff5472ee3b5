#include "essuda/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace essuda::ad {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           std::vector<Tensor<double>> inputs, double eps, double tol,
                           double abs_floor) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const Tensor<double> loss = f();
    tape.backward(loss);
  }
  for (auto& in : inputs) {
    auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  report.tolerance = tol;
  NoGradScope<double> no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
  }
  report.passed = report.worst() <= tol;
  return report;
}

}  // namespace essuda::ad
