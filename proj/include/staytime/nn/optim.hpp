#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "staytime/nn/layers.hpp"

namespace staytime::nn {

/// Plain gradient descent: w -= lr * g.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<Param* const> params) const;

 private:
  double lr_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments. Moment buffers are bound to the
/// parameter list given at construction; `step` must always be called with
/// that same list.
class Adam {
 public:
  Adam(std::span<Param* const> params, AdamConfig config = {});
  void step(std::span<Param* const> params);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

/// Throws DivergenceError naming the first parameter with a non-finite gradient.
void require_finite_gradients(std::span<Param* const> params);

}  // namespace staytime::nn
