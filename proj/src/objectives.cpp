#include "staytime/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "staytime/error.hpp"

namespace staytime {

void LossWeights::validate() const {
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || lambda1 < 0.0 || lambda2 < 0.0) {
    throw ConfigError("loss weights must be finite and >= 0, got lambda1=" + std::to_string(lambda1) +
                      " lambda2=" + std::to_string(lambda2));
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

LossAndGrad listmle_loss(std::span<const double> scores, std::span<const std::size_t> true_order,
                         std::span<const std::uint8_t> mask) {
  if (mask.size() != scores.size()) {
    throw ValidationError("listmle: mask length " + std::to_string(mask.size()) + " vs " +
                          std::to_string(scores.size()) + " scores");
  }
  const auto n_real = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (n_real == 0) throw ValidationError("listmle: no unmasked slots");
  if (true_order.size() != n_real) {
    throw ValidationError("listmle: order covers " + std::to_string(true_order.size()) + " slots but " +
                          std::to_string(n_real) + " are unmasked");
  }
  std::vector<std::uint8_t> used(scores.size(), 0);
  for (std::size_t idx : true_order) {
    if (idx >= scores.size() || !mask[idx] || used[idx]) {
      throw ValidationError("listmle: order entry " + std::to_string(idx) + " is masked, repeated or out of range");
    }
    used[idx] = 1;
  }

  const std::size_t n = true_order.size();
  // Suffix log-sum-exp, stabilised by the suffix maximum.
  std::vector<double> suffix_max(n + 1, -std::numeric_limits<double>::infinity());
  for (std::size_t i = n; i-- > 0;) suffix_max[i] = std::max(suffix_max[i + 1], scores[true_order[i]]);
  std::vector<double> lse(n);
  double running = 0.0;  // sum_{j >= i} exp(s_j - suffix_max[i]) maintained relative to a moving pivot
  double pivot = suffix_max[n - 1];
  for (std::size_t i = n; i-- > 0;) {
    const double m = suffix_max[i];
    running = running * std::exp(pivot - m) + std::exp(scores[true_order[i]] - m);
    pivot = m;
    lse[i] = m + std::log(running);
  }

  LossAndGrad out;
  out.grad.assign(scores.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) out.loss += lse[i] - scores[true_order[i]];
  // d/ds_{pi(k)} = -1 + sum_{i <= k} exp(s_{pi(k)} - lse[i])
  for (std::size_t k = 0; k < n; ++k) {
    const double s = scores[true_order[k]];
    double g = -1.0;
    for (std::size_t i = 0; i <= k; ++i) g += std::exp(s - lse[i]);
    out.grad[true_order[k]] = g;
  }
  return out;
}

LossAndGrad bce_loss(std::span<const double> logits, std::span<const double> labels,
                     std::span<const std::uint8_t> mask) {
  if (labels.size() != logits.size() || mask.size() != logits.size()) {
    throw ValidationError("bce: logits/labels/mask lengths differ (" + std::to_string(logits.size()) + ", " +
                          std::to_string(labels.size()) + ", " + std::to_string(mask.size()) + ")");
  }
  const auto n = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (n == 0) throw ValidationError("bce: no unmasked slots");
  LossAndGrad out;
  out.grad.assign(logits.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    const double z = logits[i];
    const double y = labels[i];
    out.loss += softplus(z) - y * z;
    out.grad[i] = (sigmoid(z) - y) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

double total_loss(double staytime_loss, double l_r1, double l_r2, const LossWeights& weights) {
  return staytime_loss + weights.lambda1 * l_r1 + weights.lambda2 * l_r2;
}

}  // namespace staytime
