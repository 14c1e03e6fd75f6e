#include "staytime/base_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "staytime/error.hpp"
#include "staytime/metrics.hpp"
#include "staytime/objectives.hpp"

namespace staytime::models {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::VR: return "vr";
    case ModelKind::WLR: return "wlr";
    case ModelKind::NDT: return "ndt";
    case ModelKind::PCR: return "pcr";
    case ModelKind::D2Q: return "d2q";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "vr") return ModelKind::VR;
  if (s == "wlr") return ModelKind::WLR;
  if (s == "ndt") return ModelKind::NDT;
  if (s == "pcr") return ModelKind::PCR;
  if (s == "d2q") return ModelKind::D2Q;
  throw ConfigError("unknown model kind '" + name + "' (expected vr|wlr|ndt|pcr|d2q)");
}

bool has_staytime_inverse(ModelKind kind) { return kind != ModelKind::NDT; }

bool trains_on_unopened(ModelKind kind) { return kind == ModelKind::WLR || kind == ModelKind::NDT; }

// --- DurationBuckets ---------------------------------------------------------------

DurationBuckets DurationBuckets::fit(std::span<const double> durations, std::span<const double> staytimes,
                                     std::size_t n_buckets) {
  if (durations.size() != staytimes.size()) throw ValidationError("d2q fit: durations and staytimes differ in length");
  if (durations.empty()) throw ValidationError("d2q fit: empty training sample");
  if (n_buckets == 0) throw ValidationError("d2q fit: n_buckets must be >= 1");
  std::vector<double> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  DurationBuckets b;
  for (std::size_t k = 0; k + 1 < n_buckets; ++k) {
    const std::size_t end = (k + 1) * n / n_buckets;  // exclusive end index of bucket k
    if (end == 0) {
      throw ValidationError("d2q fit: bucket " + std::to_string(k) + " is empty; use fewer buckets");
    }
    b.upper_edges_.push_back(sorted[end - 1]);
  }
  b.upper_edges_.push_back(std::numeric_limits<double>::infinity());
  for (std::size_t k = 1; k < b.upper_edges_.size(); ++k) {
    if (!(b.upper_edges_[k] > b.upper_edges_[k - 1])) {
      throw ValidationError("d2q fit: bucket " + std::to_string(k) +
                            " is empty (tied durations at the boundary); use fewer buckets");
    }
  }
  b.staytimes_.assign(n_buckets, {});
  for (std::size_t i = 0; i < n; ++i) b.staytimes_[b.bucket_of(durations[i])].push_back(staytimes[i]);
  for (std::size_t k = 0; k < n_buckets; ++k) {
    if (b.staytimes_[k].empty()) {
      throw ValidationError("d2q fit: bucket " + std::to_string(k) + " is empty; use fewer buckets");
    }
    std::sort(b.staytimes_[k].begin(), b.staytimes_[k].end());
  }
  return b;
}

std::size_t DurationBuckets::bucket_of(double duration_s) const {
  const auto it = std::lower_bound(upper_edges_.begin(), upper_edges_.end(), duration_s);
  return std::min(static_cast<std::size_t>(it - upper_edges_.begin()), upper_edges_.size() - 1);
}

double DurationBuckets::transform(std::size_t bucket, double staytime_s) const {
  const auto& s = staytimes_.at(bucket);
  const auto lo = std::lower_bound(s.begin(), s.end(), staytime_s);
  const auto hi = std::upper_bound(lo, s.end(), staytime_s);
  const double less = static_cast<double>(lo - s.begin());
  const double equal = static_cast<double>(hi - lo);
  return (less + 0.5 * equal) / static_cast<double>(s.size());
}

double DurationBuckets::inverse(std::size_t bucket, double q) const {
  const auto& s = staytimes_.at(bucket);
  const double n = static_cast<double>(s.size());
  // Order statistic i (1-based) sits at q = (i - 0.5) / n.
  const double pos = std::clamp(q * n + 0.5, 1.0, n);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size());
  const double frac = pos - static_cast<double>(lo);
  return s[lo - 1] + frac * (s[hi - 1] - s[lo - 1]);
}

double DurationBuckets::max_adjacent_gap(std::size_t bucket) const {
  const auto& s = staytimes_.at(bucket);
  double gap = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) gap = std::max(gap, s[i] - s[i - 1]);
  return gap;
}

void DurationBuckets::append_sections(const std::string& prefix, std::vector<nn::Section>& out) const {
  out.push_back({prefix + ".upper_edges", nn::Tensor(1, upper_edges_.size(), upper_edges_)});
  for (std::size_t k = 0; k < staytimes_.size(); ++k) {
    out.push_back({prefix + ".bucket." + std::to_string(k), nn::Tensor(1, staytimes_[k].size(), staytimes_[k])});
  }
}

DurationBuckets DurationBuckets::from_sections(const std::string& prefix, const std::vector<nn::Section>& sections) {
  const nn::Section* edges = nn::find_section(sections, prefix + ".upper_edges");
  if (edges == nullptr) throw ValidationError("checkpoint lacks section '" + prefix + ".upper_edges'");
  DurationBuckets b;
  b.upper_edges_.assign(edges->data.values().begin(), edges->data.values().end());
  for (std::size_t k = 0; k < b.upper_edges_.size(); ++k) {
    const nn::Section* s = nn::find_section(sections, prefix + ".bucket." + std::to_string(k));
    if (s == nullptr || s->data.empty()) {
      throw ValidationError("checkpoint lacks a non-empty section '" + prefix + ".bucket." + std::to_string(k) + "'");
    }
    b.staytimes_.emplace_back(s->data.values().begin(), s->data.values().end());
  }
  return b;
}

double ndt_target(double staytime_s, double p99_staytime_s) {
  if (!(p99_staytime_s > 0.0)) return staytime_s > 0.0 ? 1.0 : 0.0;
  return std::clamp(std::log1p(std::max(staytime_s, 0.0)) / std::log1p(p99_staytime_s), 0.0, 1.0);
}

// --- StaytimeHead ------------------------------------------------------------------

StaytimeHead::StaytimeHead(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim)
    : tower_a("head." + to_string(kind) + ".a", input_dim, hidden_dim, std::max<std::size_t>(1, hidden_dim / 2), 1),
      kind_(kind) {
  if (kind == ModelKind::WLR) {
    tower_b = nn::Mlp3("head.wlr.b", input_dim, hidden_dim, std::max<std::size_t>(1, hidden_dim / 2), 1);
  }
}

double StaytimeHead::transformed_target(double staytime_s, double duration_s) const {
  switch (kind_) {
    case ModelKind::VR: return staytime_s;
    case ModelKind::WLR: return staytime_s;
    case ModelKind::NDT: return ndt_target(staytime_s, ndt_p99_);
    case ModelKind::PCR: return staytime_s / duration_s;
    case ModelKind::D2Q: return buckets_.transform(buckets_.bucket_of(duration_s), staytime_s);
  }
  return 0.0;
}

void StaytimeHead::fit_transform(const HeadTargets& train, std::size_t n_buckets) {
  std::vector<double> st, dur;
  std::size_t opened = 0;
  for (std::size_t i = 0; i < train.staytime_s.size(); ++i) {
    if (!train.opened[i]) continue;
    ++opened;
    st.push_back(train.staytime_s[i]);
    dur.push_back(train.duration_s[i]);
  }
  if (st.empty()) throw ValidationError("fit_transform: no opened training rows");
  const double mean_st = std::accumulate(st.begin(), st.end(), 0.0) / static_cast<double>(st.size());
  switch (kind_) {
    case ModelKind::VR:
      vr_scale_ = mean_st;
      bias_a_ = 1.0;
      break;
    case ModelKind::WLR: {
      const double open_rate = static_cast<double>(opened) / static_cast<double>(train.staytime_s.size());
      bias_a_ = std::log(open_rate / std::max(1e-6, 1.0 - open_rate));
      bias_b_ = std::log(mean_st);
      break;
    }
    case ModelKind::NDT: {
      ndt_p99_ = metrics::percentile(st, 0.99);
      double mean_target = 0.0;
      for (std::size_t i = 0; i < train.staytime_s.size(); ++i) {
        mean_target += train.opened[i] ? ndt_target(train.staytime_s[i], ndt_p99_) : 0.0;
      }
      mean_target = std::clamp(mean_target / static_cast<double>(train.staytime_s.size()), 1e-3, 1.0 - 1e-3);
      bias_a_ = std::log(mean_target / (1.0 - mean_target));
      break;
    }
    case ModelKind::PCR: {
      double mean_ratio = 0.0;
      for (std::size_t i = 0; i < st.size(); ++i) mean_ratio += st[i] / dur[i];
      bias_a_ = mean_ratio / static_cast<double>(st.size());
      break;
    }
    case ModelKind::D2Q:
      buckets_ = DurationBuckets::fit(dur, st, n_buckets);
      bias_a_ = 0.5;
      break;
  }
  tower_a.l3.bias.value.fill(bias_a_);
  if (kind_ == ModelKind::WLR) tower_b.l3.bias.value.fill(bias_b_);
}

void StaytimeHead::init(nn::Rng& rng) {
  tower_a.init(rng);
  if (kind_ == ModelKind::WLR) tower_b.init(rng);
  tower_a.l3.bias.value.fill(bias_a_);
  if (kind_ == ModelKind::WLR) tower_b.l3.bias.value.fill(bias_b_);
}

HeadForward StaytimeHead::forward(const nn::Tensor& representation) const {
  HeadForward out;
  const nn::Tensor a = tower_a.forward(representation, out.cache_a);
  out.a.assign(a.values().begin(), a.values().end());
  if (kind_ == ModelKind::WLR) {
    const nn::Tensor b = tower_b.forward(representation, out.cache_b);
    out.b.assign(b.values().begin(), b.values().end());
  }
  return out;
}

HeadLoss StaytimeHead::loss(const HeadForward& out, const HeadTargets& t) const {
  const std::size_t n = out.a.size();
  if (t.staytime_s.size() != n || t.opened.size() != n || t.duration_s.size() != n) {
    throw ValidationError("head loss: targets do not match the batch size " + std::to_string(n));
  }
  HeadLoss g;
  g.d_a.assign(n, 0.0);
  if (kind_ == ModelKind::WLR) g.d_b.assign(n, 0.0);
  std::size_t n_open = 0;
  for (std::size_t i = 0; i < n; ++i) n_open += t.opened[i] ? 1 : 0;

  switch (kind_) {
    case ModelKind::VR:
    case ModelKind::PCR:
    case ModelKind::D2Q: {
      if (n_open == 0) return g;
      const double inv = 1.0 / static_cast<double>(n_open);
      const double scale = kind_ == ModelKind::VR ? vr_scale_ : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!t.opened[i]) continue;
        const double pred = scale * out.a[i];
        const double diff = pred - transformed_target(t.staytime_s[i], t.duration_s[i]);
        g.loss += diff * diff * inv;
        g.d_a[i] = 2.0 * diff * scale * inv;
      }
      return g;
    }
    case ModelKind::NDT: {
      std::vector<double> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = t.opened[i] ? ndt_target(t.staytime_s[i], ndt_p99_) : 0.0;
      const std::vector<std::uint8_t> mask(n, 1);
      LossAndGrad bce = bce_loss(out.a, labels, mask);
      g.loss = bce.loss;
      g.d_a = std::move(bce.grad);
      return g;
    }
    case ModelKind::WLR: {
      // Tower A: open probability over every row.
      std::vector<double> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = t.opened[i] ? 1.0 : 0.0;
      const std::vector<std::uint8_t> mask(n, 1);
      LossAndGrad bce = bce_loss(out.a, labels, mask);
      g.loss = bce.loss;
      g.d_a = std::move(bce.grad);
      // Tower B: weighted logistic on opened rows. Positive weight = staytime,
      // plus one unit-weight negative per row, so exp(logit) estimates staytime.
      if (n_open == 0) return g;
      const double inv = 1.0 / static_cast<double>(n_open);
      for (std::size_t i = 0; i < n; ++i) {
        if (!t.opened[i]) continue;
        const double w = t.staytime_s[i];
        if (!(w > 0.0)) {
          throw ValidationError("wlr: opened row " + std::to_string(i) + " has staytime weight " + std::to_string(w) +
                                " <= 0");
        }
        const double z = out.b[i];
        g.loss += (w * softplus(-z) + softplus(z)) * inv;
        g.d_b[i] = (-w * sigmoid(-z) + sigmoid(z)) * inv;
      }
      return g;
    }
  }
  return g;
}

nn::Tensor StaytimeHead::backward(const HeadForward& out, const HeadLoss& grads) {
  const std::size_t n = out.a.size();
  nn::Tensor da(n, 1, grads.d_a);
  nn::Tensor drep = tower_a.backward(out.cache_a, da);
  if (kind_ == ModelKind::WLR) {
    nn::Tensor db(n, 1, grads.d_b);
    const nn::Tensor drep_b = tower_b.backward(out.cache_b, db);
    drep.mat() += drep_b.mat();
  }
  return drep;
}

std::vector<double> StaytimeHead::predict_staytime(const HeadForward& out, std::span<const double> durations) const {
  const std::size_t n = out.a.size();
  std::vector<double> pred(n);
  switch (kind_) {
    case ModelKind::NDT:
      throw UnsupportedOperation("NDT has no inverse transform; it only produces ranking scores");
    case ModelKind::VR:
      for (std::size_t i = 0; i < n; ++i) pred[i] = std::max(0.0, vr_scale_ * out.a[i]);
      break;
    case ModelKind::WLR:
      for (std::size_t i = 0; i < n; ++i) pred[i] = std::exp(std::min(out.b[i], 50.0));
      break;
    case ModelKind::PCR:
      for (std::size_t i = 0; i < n; ++i) pred[i] = std::max(0.0, out.a[i]) * durations[i];
      break;
    case ModelKind::D2Q:
      for (std::size_t i = 0; i < n; ++i) {
        pred[i] = buckets_.inverse(buckets_.bucket_of(durations[i]), std::clamp(out.a[i], 0.0, 1.0));
      }
      break;
  }
  return pred;
}

std::vector<double> StaytimeHead::predict_rank(const HeadForward& out, std::span<const double> durations) const {
  const std::size_t n = out.a.size();
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind_) {
      case ModelKind::VR: score[i] = vr_scale_ * out.a[i]; break;
      case ModelKind::WLR: score[i] = sigmoid(out.a[i]) * std::exp(std::min(out.b[i], 50.0)); break;
      case ModelKind::NDT: score[i] = sigmoid(out.a[i]); break;
      case ModelKind::PCR: score[i] = out.a[i] * durations[i]; break;
      case ModelKind::D2Q:
        score[i] = buckets_.inverse(buckets_.bucket_of(durations[i]), std::clamp(out.a[i], 0.0, 1.0));
        break;
    }
  }
  return score;
}

void StaytimeHead::collect(nn::ParamList& out) {
  tower_a.collect(out);
  if (kind_ == ModelKind::WLR) tower_b.collect(out);
}

void StaytimeHead::append_state_sections(std::vector<nn::Section>& out) const {
  out.push_back({"transform.vr_scale", nn::Tensor(1, 1, {vr_scale_})});
  out.push_back({"transform.ndt_p99", nn::Tensor(1, 1, {ndt_p99_})});
  if (kind_ == ModelKind::D2Q) buckets_.append_sections("transform.d2q", out);
}

void StaytimeHead::load_state_sections(const std::vector<nn::Section>& sections) {
  const nn::Section* scale = nn::find_section(sections, "transform.vr_scale");
  const nn::Section* p99 = nn::find_section(sections, "transform.ndt_p99");
  if (scale == nullptr || p99 == nullptr) throw ValidationError("checkpoint lacks transform sections");
  vr_scale_ = scale->data[0];
  ndt_p99_ = p99->data[0];
  if (kind_ == ModelKind::D2Q) buckets_ = DurationBuckets::from_sections("transform.d2q", sections);
}

}  // namespace staytime::models
