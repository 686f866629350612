#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cmtra/errors.hpp"

namespace cmtra::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

inline constexpr double kRelErrorFloor = 1e-8;

/// Compares `analytic(theta)` against central differences of `loss(theta)`:
///   (f(θ + ε e_i) - f(θ - ε e_i)) / 2ε
/// Relative error per component is |a - n| / max(|a|, |n|, 1e-8).
template <typename Loss, typename Analytic>
GradCheckResult grad_check(Loss&& loss, Analytic&& analytic, std::span<const double> params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("grad_check needs eps > 0");
  std::vector<double> theta(params.begin(), params.end());
  const std::vector<double> grad = analytic(std::span<const double>(theta));
  if (grad.size() != theta.size()) throw ShapeError("analytic gradient has the wrong length");

  GradCheckResult res;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double fp = loss(std::span<const double>(theta));
    theta[i] = saved - eps;
    const double fm = loss(std::span<const double>(theta));
    theta[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("non-finite loss during grad_check");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double abs_err = std::abs(grad[i] - numeric);
    const double denom = std::max({std::abs(grad[i]), std::abs(numeric), kRelErrorFloor});
    const double rel = abs_err / denom;
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace cmtra::nn
