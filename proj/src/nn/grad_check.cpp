#include "staytime/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace staytime::nn {

GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, const GradCheckOptions& options) {
  compute_grads();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  const double eps = options.eps;
  const double f0 = options.exclude_kinks ? loss() : 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      p.value[i] = original + eps;
      const double f_plus = loss();
      p.value[i] = original - eps;
      const double f_minus = loss();
      p.value[i] = original;

      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      if (options.exclude_kinks) {
        const double forward = (f_plus - f0) / eps;
        const double backward = (f0 - f_minus) / eps;
        if (std::abs(forward - backward) > options.kink_tol * std::max(1.0, std::abs(numeric))) {
          ++result.excluded;
          continue;
        }
      }
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = p.name;
          result.worst_index = i;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace staytime::nn
