#include "staytime/lcu_model.hpp"

#include <algorithm>

#include "staytime/error.hpp"

namespace staytime::lcu {

using features::ExampleSet;
using nn::Tensor;

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(model_dim, "model_dim");
  positive(n_heads, "n_heads");
  positive(id_embedding_dim, "id_embedding_dim");
  positive(projection_hidden, "projection_hidden");
  positive(head_hidden, "head_hidden");
  positive(aux_hidden, "aux_hidden");
  positive(n_buckets, "n_buckets");
  if (model_dim % n_heads != 0) {
    throw ConfigError("model.model_dim (" + std::to_string(model_dim) + ") must be divisible by model.n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  weights.validate();
}

namespace {

// Copies columns [c0, c0 + width) of every row.
Tensor columns(const Tensor& t, std::size_t c0, std::size_t width) {
  Tensor out(t.rows(), width);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto src = t.row(r);
    std::copy(src.begin() + c0, src.begin() + c0 + width, out.row(r).begin());
  }
  return out;
}

void add_rows(const Tensor& src, std::size_t src_row, Tensor& dst, std::size_t dst_row, double scale = 1.0) {
  const auto s = src.row(src_row);
  auto d = dst.row(dst_row);
  for (std::size_t c = 0; c < d.size(); ++c) d[c] += scale * s[c];
}

void copy_row(const Tensor& src, std::size_t src_row, Tensor& dst, std::size_t dst_row, std::size_t dst_col = 0) {
  const auto s = src.row(src_row);
  std::copy(s.begin(), s.end(), dst.row(dst_row).begin() + dst_col);
}

std::size_t real_slots(const ExampleSet& b, std::size_t i) {
  std::size_t c = 0;
  for (std::size_t j = 0; j < b.k; ++j) c += b.slot_mask[i * b.k + j];
  return c;
}

}  // namespace

LcuModel::LcuModel(const ModelConfig& config, std::size_t user_rows, std::size_t video_rows, std::size_t ev_dim,
                   std::size_t ec_dim)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  const std::size_t id = config_.id_embedding_dim;
  user_embedding = nn::Embedding("user.id_embedding", user_rows, id);
  video_embedding = nn::Embedding("video.id_embedding", video_rows, id);
  user_proj = nn::Dense("user.token", id + features::kUserDenseDim, d);
  video_proj = nn::Dense("video.token", id + features::kVideoDenseDim, d);
  if (config_.lcu) {
    if (ev_dim == 0 || ec_dim == 0) {
      throw ConfigError("LCU needs video and comment embedding tables (got dims " + std::to_string(ev_dim) + ", " +
                        std::to_string(ec_dim) + ")");
    }
    video_llm_proj = nn::Mlp2("video_llm.proj", ev_dim, config_.projection_hidden, d);
    comment_llm_proj = nn::Mlp2("comment_llm.proj", ec_dim, config_.projection_hidden, d);
    comment_feature_proj = nn::Dense("comment.features", features::kCommentDenseDim, d);
    attention = nn::Mhsa("fusion.mhsa", nn::MhsaConfig{d, config_.n_heads});
    const std::size_t a = config_.aux_hidden;
    aux_r1 = nn::Mlp3("aux.r1", d, a, std::max<std::size_t>(1, a / 2), 1);
    aux_r2 = nn::Mlp3("aux.r2", d, a, std::max<std::size_t>(1, a / 2), 1);
  }
  head_ = models::StaytimeHead(config_.kind, representation_dim(), config_.head_hidden);
}

std::size_t LcuModel::representation_dim() const { return (config_.lcu ? 4 : 2) * config_.model_dim; }

void LcuModel::fit_transform(const ExampleSet& train) { head_.fit_transform(train.targets, config_.n_buckets); }

void LcuModel::init(nn::Rng& rng) {
  user_embedding.init(rng);
  video_embedding.init(rng);
  user_proj.init(rng);
  video_proj.init(rng);
  if (config_.lcu) {
    video_llm_proj.init(rng);
    comment_llm_proj.init(rng);
    comment_feature_proj.init(rng);
    attention.init(rng);
    aux_r1.init(rng);
    aux_r2.init(rng);
  }
  head_.init(rng);
}

ForwardPass LcuModel::forward(const ExampleSet& b) const {
  ForwardPass p;
  p.n = b.size();
  p.k = b.k;
  const std::size_t n = p.n, k = p.k, d = config_.model_dim;

  {
    const Tensor uid = user_embedding.forward(b.user_rows);
    const Tensor* parts[] = {&uid, &b.user_dense};
    p.user_in = nn::hconcat(parts);
    p.user_tok = user_proj.forward(p.user_in);
  }
  {
    const Tensor vid = video_embedding.forward(b.video_rows);
    const Tensor* parts[] = {&vid, &b.video_dense};
    p.video_in = nn::hconcat(parts);
    p.video_tok = video_proj.forward(p.video_in);
  }

  if (!config_.lcu) {
    const Tensor* parts[] = {&p.user_tok, &p.video_tok};
    p.representation = nn::hconcat(parts);
    p.head = head_.forward(p.representation);
    return p;
  }

  const Tensor ev_tok = video_llm_proj.forward(b.video_llm, p.ev_cache);
  Tensor c_tok = comment_llm_proj.forward(b.comment_llm, p.ec_cache);
  c_tok.mat() += comment_feature_proj.forward(b.comment_dense).mat();

  const std::size_t t_count = n_tokens(k);
  p.tokens = Tensor(n * t_count, d);
  p.token_mask.assign(n * t_count, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * t_count;
    copy_row(p.user_tok, i, p.tokens, base);
    copy_row(p.video_tok, i, p.tokens, base + 1);
    copy_row(ev_tok, i, p.tokens, base + 2);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t s = i * k + j;
      if (b.slot_mask[s]) {
        copy_row(c_tok, s, p.tokens, base + 3 + j);
      } else {
        p.token_mask[base + 3 + j] = 0;  // zero token, excluded from attention
      }
    }
  }

  p.fused = attention.forward(p.tokens, t_count, p.token_mask, p.attention);
  if (config_.attention_residual) p.fused.mat() += p.tokens.mat();

  p.representation = Tensor(n, 4 * d);
  p.slot_rows = Tensor(n * k, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * t_count;
    copy_row(p.fused, base, p.representation, i, 0);
    copy_row(p.fused, base + 1, p.representation, i, d);
    copy_row(p.fused, base + 2, p.representation, i, 2 * d);
    const std::size_t cnt = real_slots(b, i);
    auto pooled = p.representation.row(i).subspan(3 * d, d);
    for (std::size_t j = 0; j < k; ++j) {
      copy_row(p.fused, base + 3 + j, p.slot_rows, i * k + j);
      if (!b.slot_mask[i * k + j]) continue;
      const auto row = p.fused.row(base + 3 + j);
      for (std::size_t c = 0; c < d; ++c) pooled[c] += row[c] / static_cast<double>(cnt);
    }
  }

  const Tensor y1 = aux_r1.forward(p.slot_rows, p.aux1_cache);
  const Tensor y2 = aux_r2.forward(p.slot_rows, p.aux2_cache);
  p.y1.assign(y1.values().begin(), y1.values().end());
  p.y2.assign(y2.values().begin(), y2.values().end());

  p.head = head_.forward(p.representation);
  return p;
}

LossBreakdown LcuModel::loss(const ForwardPass& p, const ExampleSet& b, models::HeadLoss* head_grads,
                             std::vector<double>* dy1, std::vector<double>* dy2) const {
  LossBreakdown out;
  models::HeadLoss hl = head_.loss(p.head, b.targets);
  out.staytime = hl.loss;
  if (head_grads) *head_grads = std::move(hl);

  if (config_.lcu) {
    const std::size_t n = p.n, k = p.k;
    std::vector<double> g1(n * k, 0.0), g2(n * k, 0.0);

    std::size_t lists = 0;
    for (std::size_t i = 0; i < n; ++i) lists += b.popularity_order[i].empty() ? 0 : 1;
    for (std::size_t i = 0; i < n && lists > 0; ++i) {
      if (b.popularity_order[i].empty()) continue;
      const std::span<const double> scores(p.y1.data() + i * k, k);
      const std::span<const std::uint8_t> mask(b.slot_mask.data() + i * k, k);
      const LossAndGrad l = listmle_loss(scores, b.popularity_order[i], mask);
      out.r1 += l.loss / static_cast<double>(lists);
      for (std::size_t j = 0; j < k; ++j) g1[i * k + j] = l.grad[j] / static_cast<double>(lists);
    }

    // User-specific interaction labels only exist when the section was opened.
    std::vector<std::uint8_t> mask2(n * k, 0);
    std::vector<double> labels(n * k, 0.0);
    std::size_t n2 = 0;
    for (std::size_t s = 0; s < n * k; ++s) {
      mask2[s] = b.slot_mask[s] && b.targets.opened[s / k] ? 1 : 0;
      labels[s] = b.slot_labels[s];
      n2 += mask2[s];
    }
    if (n2 > 0) {
      LossAndGrad l = bce_loss(p.y2, labels, mask2);
      out.r2 = l.loss;
      g2 = std::move(l.grad);
    }
    for (double& g : g1) g *= config_.weights.lambda1;
    for (double& g : g2) g *= config_.weights.lambda2;
    if (dy1) *dy1 = std::move(g1);
    if (dy2) *dy2 = std::move(g2);
  }
  out.total = total_loss(out.staytime, out.r1, out.r2, config_.weights);
  return out;
}

LossBreakdown LcuModel::accumulate_gradients(const ExampleSet& b) {
  const ForwardPass p = forward(b);
  models::HeadLoss hg;
  std::vector<double> dy1, dy2;
  const LossBreakdown l = loss(p, b, &hg, &dy1, &dy2);
  backward(p, hg, dy1, dy2, b);
  return l;
}

void LcuModel::backward(const ForwardPass& p, const models::HeadLoss& head_grads, const std::vector<double>& dy1,
                        const std::vector<double>& dy2, const ExampleSet& b) {
  const std::size_t n = p.n, k = p.k, d = config_.model_dim;
  const Tensor d_rep = head_.backward(p.head, head_grads);

  Tensor d_user_tok, d_video_tok;
  if (!config_.lcu) {
    d_user_tok = columns(d_rep, 0, d);
    d_video_tok = columns(d_rep, d, d);
  } else {
    const std::size_t t_count = n_tokens(k);
    Tensor d_fused(n * t_count, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * t_count;
      const auto g = d_rep.row(i);
      for (std::size_t c = 0; c < d; ++c) {
        d_fused(base, c) = g[c];
        d_fused(base + 1, c) = g[d + c];
        d_fused(base + 2, c) = g[2 * d + c];
      }
      const std::size_t cnt = real_slots(b, i);
      for (std::size_t j = 0; j < k; ++j) {
        if (!b.slot_mask[i * k + j]) continue;
        for (std::size_t c = 0; c < d; ++c) d_fused(base + 3 + j, c) += g[3 * d + c] / static_cast<double>(cnt);
      }
    }

    auto aux_backward = [&](nn::Mlp3& head, const nn::Mlp3Cache& cache, const std::vector<double>& dy, double lambda) {
      if (lambda == 0.0) return;  // all-zero upstream gradient
      const Tensor d_slots = head.backward(cache, Tensor(n * k, 1, dy));
      if (config_.detach_aux) return;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          if (b.slot_mask[i * k + j]) add_rows(d_slots, i * k + j, d_fused, i * t_count + 3 + j);
        }
      }
    };
    aux_backward(aux_r1, p.aux1_cache, dy1, config_.weights.lambda1);
    aux_backward(aux_r2, p.aux2_cache, dy2, config_.weights.lambda2);

    Tensor d_tokens = attention.backward(p.attention, d_fused);
    if (config_.attention_residual) d_tokens.mat() += d_fused.mat();

    d_user_tok = Tensor(n, d);
    d_video_tok = Tensor(n, d);
    Tensor d_ev(n, d), d_c(n * k, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * t_count;
      copy_row(d_tokens, base, d_user_tok, i);
      copy_row(d_tokens, base + 1, d_video_tok, i);
      copy_row(d_tokens, base + 2, d_ev, i);
      for (std::size_t j = 0; j < k; ++j) {
        if (b.slot_mask[i * k + j]) copy_row(d_tokens, base + 3 + j, d_c, i * k + j);
      }
    }
    video_llm_proj.backward(p.ev_cache, d_ev);
    comment_llm_proj.backward(p.ec_cache, d_c);
    comment_feature_proj.backward(b.comment_dense, d_c);
  }

  const std::size_t id = config_.id_embedding_dim;
  const Tensor d_user_in = user_proj.backward(p.user_in, d_user_tok);
  user_embedding.backward(b.user_rows, columns(d_user_in, 0, id));
  const Tensor d_video_in = video_proj.backward(p.video_in, d_video_tok);
  video_embedding.backward(b.video_rows, columns(d_video_in, 0, id));
}

std::vector<double> LcuModel::predict_rank(const ExampleSet& b) const {
  return head_.predict_rank(forward(b).head, b.targets.duration_s);
}

std::vector<double> LcuModel::predict_staytime(const ExampleSet& b) const {
  if (!models::has_staytime_inverse(config_.kind)) {
    throw UnsupportedOperation(models::to_string(config_.kind) + " does not predict staytime, only ranking scores");
  }
  return head_.predict_staytime(forward(b).head, b.targets.duration_s);
}

nn::ParamList LcuModel::params() {
  nn::ParamList out;
  user_embedding.collect(out);
  video_embedding.collect(out);
  user_proj.collect(out);
  video_proj.collect(out);
  if (config_.lcu) {
    video_llm_proj.collect(out);
    comment_llm_proj.collect(out);
    comment_feature_proj.collect(out);
    attention.collect(out);
    aux_r1.collect(out);
    aux_r2.collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<nn::Section> LcuModel::state_sections() {
  const nn::ParamList ps = params();
  std::vector<nn::Section> out = nn::sections_from_params(ps);
  head_.append_state_sections(out);
  return out;
}

void LcuModel::load_state(const std::vector<nn::Section>& sections) {
  const nn::ParamList ps = params();
  nn::load_params(ps, sections);
  head_.load_state_sections(sections);
}

}  // namespace staytime::lcu
