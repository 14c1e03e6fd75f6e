#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "staytime/nn/layers.hpp"

namespace staytime::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor of the relative error, so gradients that are
  /// numerically zero compare on an absolute scale.
  double floor = 1e-6;
  /// When set, coordinates whose one-sided slopes disagree by more than
  /// kink_tol * max(1, |central|) are treated as sitting on a
  /// non-differentiable point (ReLU kink) and skipped.
  bool exclude_kinks = false;
  double kink_tol = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares analytic gradients against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of `params`.
///
/// `loss` evaluates the scalar objective from the current parameter values.
/// `compute_grads` must zero and then fill every `Param::grad` in `params`.
/// Parameter values are restored exactly after each probe.
GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, const GradCheckOptions& options = {});

}  // namespace staytime::nn
