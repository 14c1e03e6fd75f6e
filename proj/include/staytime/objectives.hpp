#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace staytime {

/// Scalar loss together with dLoss/dInput for every input slot.
struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Weights of the auxiliary ranking losses in the joint objective.
struct LossWeights {
  double lambda1 = 1e-2;
  double lambda2 = 1e-2;

  /// Throws ConfigError unless both weights are finite and non-negative.
  void validate() const;
};

/// The weight grid searched for both lambdas.
inline constexpr double kLambdaGrid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};

/// ListMLE (Plackett-Luce negative log-likelihood) of the permutation
/// `true_order` under `scores`:
///
///   L = sum_i [ log sum_{j >= i} exp(s[pi(j)]) - s[pi(i)] ]
///
/// `true_order` lists slot indices from most to least preferred and must
/// cover exactly the unmasked slots. Masked slots receive zero gradient.
LossAndGrad listmle_loss(std::span<const double> scores, std::span<const std::size_t> true_order,
                         std::span<const std::uint8_t> mask);

/// Mean binary cross-entropy over unmasked slots, computed from logits:
/// softplus(z) - y z. Labels may be soft (in [0, 1]). Gradient is
/// (sigmoid(z) - y) / N on unmasked slots.
LossAndGrad bce_loss(std::span<const double> logits, std::span<const double> labels,
                     std::span<const std::uint8_t> mask);

/// L_total = L_staytime + lambda1 * L_R1 + lambda2 * L_R2.
double total_loss(double staytime_loss, double l_r1, double l_r2, const LossWeights& weights);

double sigmoid(double z);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

}  // namespace staytime
