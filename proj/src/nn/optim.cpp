#include "staytime/nn/optim.hpp"

#include <cmath>

#include "staytime/error.hpp"

namespace staytime::nn {

void require_finite_gradients(std::span<Param* const> params) {
  for (const Param* p : params) {
    if (!p->grad.all_finite()) throw DivergenceError("non-finite gradient in parameter '" + p->name + "'");
  }
}

void Sgd::step(std::span<Param* const> params) const {
  require_finite_gradients(params);
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr_ * p->grad[i];
  }
}

Adam::Adam(std::span<Param* const> params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param* p : params) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step(std::span<Param* const> params) {
  if (params.size() != m_.size()) {
    throw ShapeError("Adam: bound to " + std::to_string(m_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  require_finite_gradients(params);
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    require_same_shape(p.value, m_[k], "Adam moment");
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace staytime::nn
