#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "staytime/nn/tensor.hpp"

namespace staytime::nn {

using Rng = std::mt19937_64;

/// A trainable tensor together with its accumulated gradient.
struct Param {
  Param() = default;
  Param(std::string name, std::size_t rows, std::size_t cols)
      : name(std::move(name)), value(rows, cols), grad(rows, cols) {}

  std::string name;
  Tensor value;
  Tensor grad;
};

using ParamList = std::vector<Param*>;

void zero_grad(std::span<Param* const> params);

/// Xavier/Glorot uniform initialisation: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor& t, Rng& rng);

// ---------------------------------------------------------------------------

/// Affine map y = x W + b, W of shape in x out.
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  /// Accumulates dW, db; returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy);
  void collect(ParamList& out);

  Param weight;
  Param bias;
};

struct Mlp3Cache {
  Tensor x;
  Tensor z1, h1;
  Tensor z2, h2;
};

/// Three dense layers, ReLU after the first two, linear output.
class Mlp3 {
 public:
  Mlp3() = default;
  Mlp3(const std::string& name, std::size_t in, std::size_t hidden1, std::size_t hidden2, std::size_t out);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Mlp3Cache& cache) const;
  Tensor backward(const Mlp3Cache& cache, const Tensor& dy);
  void collect(ParamList& out);

  Dense l1, l2, l3;
};

/// Two dense layers with a ReLU between them; projects external embeddings
/// into the model dimension.
struct Mlp2Cache {
  Tensor x, z1, h1;
};

class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Mlp2Cache& cache) const;
  Tensor backward(const Mlp2Cache& cache, const Tensor& dy);
  void collect(ParamList& out);

  Dense l1, l2;
};

// ---------------------------------------------------------------------------

struct MhsaConfig {
  std::size_t model_dim = 32;
  std::size_t n_heads = 2;

  std::size_t head_dim() const { return model_dim / n_heads; }
  /// Throws ShapeError if model_dim is not divisible by n_heads.
  void validate() const;
};

struct MhsaCache {
  std::size_t n_tokens = 0;
  std::vector<std::uint8_t> mask;
  Tensor x, q, k, v, context;
  /// Attention weights laid out [example][head][query][key].
  std::vector<double> attention;
};

/// Multi-head scaled dot-product self-attention over groups of `n_tokens`
/// consecutive rows. Masked tokens are never attended to; they still emit an
/// output row, which callers must ignore.
class Mhsa {
 public:
  Mhsa() = default;
  Mhsa(const std::string& name, MhsaConfig config);

  const MhsaConfig& config() const { return config_; }

  void init(Rng& rng);
  /// tokens: (batch * n_tokens) x model_dim; mask: one flag per row (1 = real).
  Tensor forward(const Tensor& tokens, std::size_t n_tokens, std::span<const std::uint8_t> mask) const;
  Tensor forward(const Tensor& tokens, std::size_t n_tokens, std::span<const std::uint8_t> mask,
                 MhsaCache& cache) const;
  Tensor backward(const MhsaCache& cache, const Tensor& dout);
  void collect(ParamList& out);

  /// Attention weights of the last cached forward for (example, head, query).
  std::span<const double> attention_row(const MhsaCache& cache, std::size_t example, std::size_t head,
                                        std::size_t query) const;

  Param wq, wk, wv, wo, bo;

 private:
  MhsaConfig config_;
};

// ---------------------------------------------------------------------------

/// Row lookup into a trainable table.
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, std::size_t rows, std::size_t dim);

  std::size_t rows() const { return table.value.rows(); }
  std::size_t dim() const { return table.value.cols(); }

  void init(Rng& rng, double scale = 0.1);
  Tensor forward(std::span<const std::size_t> ids) const;
  /// Scatter-adds dy rows into the table gradient; duplicate ids sum.
  void backward(std::span<const std::size_t> ids, const Tensor& dy);
  void collect(ParamList& out);

  Param table;
};

/// Free-function form of the lookup for tables that are not trainable.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);

}  // namespace staytime::nn
