#include "staytime/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "staytime/error.hpp"

namespace staytime::nn {

void zero_grad(std::span<Param* const> params) {
  for (Param* p : params) p->grad.zero();
}

void xavier_uniform(Tensor& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

namespace {

void require_cols(const Tensor& x, std::size_t cols, const std::string& who) {
  if (x.cols() != cols) {
    throw ShapeError(who + ": input " + x.shape_string() + " but layer expects " + std::to_string(cols) +
                     " columns");
  }
}

Tensor relu(const Tensor& z) {
  Tensor h = z;
  for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
  return h;
}

Tensor relu_backward(const Tensor& z, const Tensor& dh) {
  Tensor dz = dh;
  for (std::size_t i = 0; i < dz.size(); ++i) {
    if (!(z[i] > 0.0)) dz[i] = 0.0;
  }
  return dz;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

void Dense::init(Rng& rng) {
  xavier_uniform(weight.value, rng);
  bias.value.zero();
}

Tensor Dense::forward(const Tensor& x) const {
  require_cols(x, in_dim(), weight.name);
  Tensor y(x.rows(), out_dim());
  if (x.rows() == 0) return y;
  y.mat().noalias() = x.mat() * weight.value.mat();
  y.mat().rowwise() += bias.value.mat().row(0);
  return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor& dy) {
  require_cols(x, in_dim(), weight.name);
  if (dy.rows() != x.rows() || dy.cols() != out_dim()) {
    throw ShapeError(weight.name + ": upstream gradient " + dy.shape_string() + " vs output " +
                     std::to_string(x.rows()) + "x" + std::to_string(out_dim()));
  }
  Tensor dx(x.rows(), in_dim());
  if (x.rows() == 0) return dx;
  weight.grad.mat().noalias() += x.mat().transpose() * dy.mat();
  bias.grad.mat().row(0) += dy.mat().colwise().sum();
  dx.mat().noalias() = dy.mat() * weight.value.mat().transpose();
  return dx;
}

void Dense::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Mlp3

Mlp3::Mlp3(const std::string& name, std::size_t in, std::size_t hidden1, std::size_t hidden2, std::size_t out)
    : l1(name + ".l1", in, hidden1), l2(name + ".l2", hidden1, hidden2), l3(name + ".l3", hidden2, out) {}

void Mlp3::init(Rng& rng) {
  l1.init(rng);
  l2.init(rng);
  l3.init(rng);
}

Tensor Mlp3::forward(const Tensor& x) const {
  Mlp3Cache scratch;
  return forward(x, scratch);
}

Tensor Mlp3::forward(const Tensor& x, Mlp3Cache& cache) const {
  cache.x = x;
  cache.z1 = l1.forward(x);
  cache.h1 = relu(cache.z1);
  cache.z2 = l2.forward(cache.h1);
  cache.h2 = relu(cache.z2);
  return l3.forward(cache.h2);
}

Tensor Mlp3::backward(const Mlp3Cache& cache, const Tensor& dy) {
  Tensor dh2 = l3.backward(cache.h2, dy);
  Tensor dh1 = l2.backward(cache.h1, relu_backward(cache.z2, dh2));
  return l1.backward(cache.x, relu_backward(cache.z1, dh1));
}

void Mlp3::collect(ParamList& out) {
  l1.collect(out);
  l2.collect(out);
  l3.collect(out);
}

// ---------------------------------------------------------------------------
// Mlp2

Mlp2::Mlp2(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out)
    : l1(name + ".l1", in, hidden), l2(name + ".l2", hidden, out) {}

void Mlp2::init(Rng& rng) {
  l1.init(rng);
  l2.init(rng);
}

Tensor Mlp2::forward(const Tensor& x) const {
  Mlp2Cache scratch;
  return forward(x, scratch);
}

Tensor Mlp2::forward(const Tensor& x, Mlp2Cache& cache) const {
  cache.x = x;
  cache.z1 = l1.forward(x);
  cache.h1 = relu(cache.z1);
  return l2.forward(cache.h1);
}

Tensor Mlp2::backward(const Mlp2Cache& cache, const Tensor& dy) {
  Tensor dh1 = l2.backward(cache.h1, dy);
  return l1.backward(cache.x, relu_backward(cache.z1, dh1));
}

void Mlp2::collect(ParamList& out) {
  l1.collect(out);
  l2.collect(out);
}

// ---------------------------------------------------------------------------
// Mhsa

void MhsaConfig::validate() const {
  if (model_dim == 0 || n_heads == 0 || model_dim % n_heads != 0) {
    throw ShapeError("MHSA model_dim " + std::to_string(model_dim) + " is not divisible by n_heads " +
                     std::to_string(n_heads));
  }
}

Mhsa::Mhsa(const std::string& name, MhsaConfig config)
    : wq(name + ".wq", config.model_dim, config.model_dim),
      wk(name + ".wk", config.model_dim, config.model_dim),
      wv(name + ".wv", config.model_dim, config.model_dim),
      wo(name + ".wo", config.model_dim, config.model_dim),
      bo(name + ".bo", 1, config.model_dim),
      config_(config) {
  config_.validate();
}

void Mhsa::init(Rng& rng) {
  xavier_uniform(wq.value, rng);
  xavier_uniform(wk.value, rng);
  xavier_uniform(wv.value, rng);
  xavier_uniform(wo.value, rng);
  bo.value.zero();
}

Tensor Mhsa::forward(const Tensor& tokens, std::size_t n_tokens, std::span<const std::uint8_t> mask) const {
  MhsaCache scratch;
  return forward(tokens, n_tokens, mask, scratch);
}

Tensor Mhsa::forward(const Tensor& tokens, std::size_t n_tokens, std::span<const std::uint8_t> mask,
                     MhsaCache& cache) const {
  const std::size_t d = config_.model_dim;
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = config_.head_dim();
  if (n_tokens == 0) throw ShapeError("MHSA: n_tokens must be >= 1");
  require_cols(tokens, d, wq.name);
  if (tokens.rows() % n_tokens != 0) {
    throw ShapeError("MHSA: " + std::to_string(tokens.rows()) + " rows is not a multiple of n_tokens " +
                     std::to_string(n_tokens));
  }
  if (mask.size() != tokens.rows()) {
    throw ShapeError("MHSA: mask length " + std::to_string(mask.size()) + " vs " +
                     std::to_string(tokens.rows()) + " token rows");
  }
  const std::size_t batch = tokens.rows() / n_tokens;
  for (std::size_t e = 0; e < batch; ++e) {
    bool any = false;
    for (std::size_t i = 0; i < n_tokens; ++i) any = any || mask[e * n_tokens + i] != 0;
    if (!any) throw ShapeError("MHSA: example " + std::to_string(e) + " has every token masked");
  }

  cache.n_tokens = n_tokens;
  cache.mask.assign(mask.begin(), mask.end());
  cache.x = tokens;
  cache.q = Tensor(tokens.rows(), d);
  cache.k = Tensor(tokens.rows(), d);
  cache.v = Tensor(tokens.rows(), d);
  cache.q.mat().noalias() = tokens.mat() * wq.value.mat();
  cache.k.mat().noalias() = tokens.mat() * wk.value.mat();
  cache.v.mat().noalias() = tokens.mat() * wv.value.mat();
  cache.context = Tensor(tokens.rows(), d);
  cache.attention.assign(batch * heads * n_tokens * n_tokens, 0.0);

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> logits(n_tokens);
  for (std::size_t e = 0; e < batch; ++e) {
    const std::size_t base = e * n_tokens;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < n_tokens; ++i) {
        const double* qi = &cache.q(base + i, off);
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_tokens; ++j) {
          if (!mask[base + j]) continue;
          const double* kj = &cache.k(base + j, off);
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          logits[j] = s * scale;
          max_logit = std::max(max_logit, logits[j]);
        }
        double* a = &cache.attention[((e * heads + h) * n_tokens + i) * n_tokens];
        double total = 0.0;
        for (std::size_t j = 0; j < n_tokens; ++j) {
          if (!mask[base + j]) continue;
          a[j] = std::exp(logits[j] - max_logit);
          total += a[j];
        }
        double* ctx = &cache.context(base + i, off);
        for (std::size_t j = 0; j < n_tokens; ++j) {
          if (!mask[base + j]) continue;
          a[j] /= total;
          const double* vj = &cache.v(base + j, off);
          for (std::size_t c = 0; c < dh; ++c) ctx[c] += a[j] * vj[c];
        }
      }
    }
  }

  Tensor out(tokens.rows(), d);
  out.mat().noalias() = cache.context.mat() * wo.value.mat();
  out.mat().rowwise() += bo.value.mat().row(0);
  return out;
}

Tensor Mhsa::backward(const MhsaCache& cache, const Tensor& dout) {
  const std::size_t d = config_.model_dim;
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = config_.head_dim();
  const std::size_t n_tokens = cache.n_tokens;
  require_same_shape(dout, cache.x, "MHSA backward");
  const std::size_t rows = cache.x.rows();
  const std::size_t batch = rows / n_tokens;

  wo.grad.mat().noalias() += cache.context.mat().transpose() * dout.mat();
  bo.grad.mat().row(0) += dout.mat().colwise().sum();
  Tensor dctx(rows, d);
  dctx.mat().noalias() = dout.mat() * wo.value.mat().transpose();

  Tensor dq(rows, d), dk(rows, d), dv(rows, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> da(n_tokens);
  for (std::size_t e = 0; e < batch; ++e) {
    const std::size_t base = e * n_tokens;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < n_tokens; ++i) {
        const double* a = &cache.attention[((e * heads + h) * n_tokens + i) * n_tokens];
        const double* g = &dctx(base + i, off);
        double weighted = 0.0;
        for (std::size_t j = 0; j < n_tokens; ++j) {
          if (!cache.mask[base + j]) {
            da[j] = 0.0;
            continue;
          }
          const double* vj = &cache.v(base + j, off);
          double* dvj = &dv(base + j, off);
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            s += g[c] * vj[c];
            dvj[c] += a[j] * g[c];
          }
          da[j] = s;
          weighted += a[j] * s;
        }
        const double* qi = &cache.q(base + i, off);
        double* dqi = &dq(base + i, off);
        for (std::size_t j = 0; j < n_tokens; ++j) {
          if (!cache.mask[base + j]) continue;
          const double ds = a[j] * (da[j] - weighted) * scale;
          if (ds == 0.0) continue;
          const double* kj = &cache.k(base + j, off);
          double* dkj = &dk(base + j, off);
          for (std::size_t c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }

  wq.grad.mat().noalias() += cache.x.mat().transpose() * dq.mat();
  wk.grad.mat().noalias() += cache.x.mat().transpose() * dk.mat();
  wv.grad.mat().noalias() += cache.x.mat().transpose() * dv.mat();
  Tensor dx(rows, d);
  dx.mat().noalias() = dq.mat() * wq.value.mat().transpose();
  dx.mat().noalias() += dk.mat() * wk.value.mat().transpose();
  dx.mat().noalias() += dv.mat() * wv.value.mat().transpose();
  return dx;
}

void Mhsa::collect(ParamList& out) {
  out.push_back(&wq);
  out.push_back(&wk);
  out.push_back(&wv);
  out.push_back(&wo);
  out.push_back(&bo);
}

std::span<const double> Mhsa::attention_row(const MhsaCache& cache, std::size_t example, std::size_t head,
                                            std::size_t query) const {
  const std::size_t n = cache.n_tokens;
  return {cache.attention.data() + ((example * config_.n_heads + head) * n + query) * n, n};
}

// ---------------------------------------------------------------------------
// Embedding

Embedding::Embedding(const std::string& name, std::size_t rows, std::size_t dim) : table(name, rows, dim) {}

void Embedding::init(Rng& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  for (double& v : table.value.values()) v = dist(rng);
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  Tensor out(ids.size(), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= table.rows()) {
      throw ShapeError("embedding id " + std::to_string(ids[r]) + " out of range for table with " +
                       std::to_string(table.rows()) + " rows");
    }
    auto src = table.row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor Embedding::forward(std::span<const std::size_t> ids) const { return embedding_lookup(table.value, ids); }

void Embedding::backward(std::span<const std::size_t> ids, const Tensor& dy) {
  if (dy.rows() != ids.size() || dy.cols() != dim()) {
    throw ShapeError(table.name + ": upstream gradient " + dy.shape_string() + " for " +
                     std::to_string(ids.size()) + " ids");
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows()) {
      throw ShapeError("embedding id " + std::to_string(ids[r]) + " out of range for table with " +
                       std::to_string(rows()) + " rows");
    }
    auto dst = table.grad.row(ids[r]);
    auto src = dy.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

void Embedding::collect(ParamList& out) { out.push_back(&table); }

}  // namespace staytime::nn
