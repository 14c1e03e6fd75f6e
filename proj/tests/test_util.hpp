#pragma once

#include <random>
#include <string>
#include <vector>

#include "staytime/nn/tensor.hpp"

namespace staytime::fixtures {

inline nn::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  nn::Tensor t(rows, cols);
  for (double& v : t.values()) v = n(rng);
  return t;
}

/// sum(w .* y): a linear read-out whose gradient w.r.t. y is w.
inline double weighted_sum(const nn::Tensor& y, const nn::Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

/// Unique scratch directory under the build tree's temp area.
std::string scratch_dir(const std::string& name);

}  // namespace staytime::fixtures
