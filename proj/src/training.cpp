#include "staytime/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "staytime/error.hpp"
#include "staytime/metrics.hpp"

namespace staytime::lcu {

using features::ExampleSet;

void TrainConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
}

ExampleSet training_rows(const ExampleSet& all, models::ModelKind kind) {
  if (models::trains_on_unopened(kind)) return all;
  return all.subset(all.opened_rows());
}

double validation_xauc(const LcuModel& model, const ExampleSet& rows) {
  const ExampleSet opened = rows.subset(rows.opened_rows());
  return metrics::xauc(model.predict_rank(opened), opened.targets.staytime_s);
}

namespace {

std::vector<nn::Tensor> snapshot(const nn::ParamList& params) {
  std::vector<nn::Tensor> out;
  out.reserve(params.size());
  for (const nn::Param* p : params) out.push_back(p->value);
  return out;
}

void restore(const nn::ParamList& params, const std::vector<nn::Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.total) && std::isfinite(l.staytime) && std::isfinite(l.r1) && std::isfinite(l.r2);
}

}  // namespace

TrainingLog train_model(LcuModel& model, const ExampleSet& train, const ExampleSet& validation,
                        const TrainConfig& config, std::uint64_t shuffle_seed) {
  config.validate();
  if (train.size() == 0) throw ValidationError("training split has no usable rows");
  const nn::ParamList params = model.params();
  nn::Adam adam(params, nn::AdamConfig{.lr = config.learning_rate});
  nn::Rng rng(shuffle_seed);

  TrainingLog log;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<nn::Tensor> last_good = snapshot(params);
  std::vector<nn::Tensor> best = last_good;
  log.best_validation_xauc = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const ExampleSet batch = train.subset(std::span(order).subspan(start, end - start));
      nn::zero_grad(params);
      const LossBreakdown l = model.accumulate_gradients(batch);
      if (!finite(l)) {
        restore(params, last_good);
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(adam.steps() + 1) + "; parameters restored to the end of epoch " +
                              std::to_string(epoch - 1));
      }
      nn::require_finite_gradients(params);
      adam.step(params);
      log.step_staytime_losses.push_back(l.staytime);
      e.mean_loss.total += l.total;
      e.mean_loss.staytime += l.staytime;
      e.mean_loss.r1 += l.r1;
      e.mean_loss.r2 += l.r2;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    e.mean_loss.total *= inv;
    e.mean_loss.staytime *= inv;
    e.mean_loss.r1 *= inv;
    e.mean_loss.r2 *= inv;
    e.validation_xauc = validation_xauc(model, validation);
    log.epochs.push_back(e);
    last_good = snapshot(params);

    if (e.validation_xauc > log.best_validation_xauc) {
      log.best_validation_xauc = e.validation_xauc;
      log.best_epoch = epoch;
      best = last_good;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      log.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  restore(params, best);
  return log;
}

// --- evaluation --------------------------------------------------------------------

namespace {

enum class Exposure { None, Low, High };

Exposure exposure_of(Id video, const std::unordered_map<Id, std::size_t>& counts, const ExposureThresholds& t) {
  const auto it = counts.find(video);
  const std::size_t c = it == counts.end() ? 0 : it->second;
  if (c == 0) return Exposure::None;
  return c <= t.low_max ? Exposure::Low : Exposure::High;
}

const char* exposure_name(Exposure e) {
  switch (e) {
    case Exposure::None: return "none";
    case Exposure::Low: return "low";
    case Exposure::High: return "high";
  }
  return "?";
}

// Per-user lists in first-appearance order of users.
std::vector<metrics::UserList> user_lists(const std::vector<std::size_t>& rows, const std::vector<double>& scores,
                                          const std::vector<double>& staytimes,
                                          const std::vector<std::uint8_t>& relevance, const std::vector<Id>& user_ids,
                                          const std::vector<Id>& video_ids) {
  std::vector<metrics::UserList> lists;
  std::unordered_map<Id, std::size_t> slot;
  for (std::size_t r : rows) {
    const auto [it, inserted] = slot.emplace(user_ids[r], lists.size());
    if (inserted) lists.emplace_back();
    auto& l = lists[it->second];
    l.preds.push_back(scores[r]);
    l.relevance.push_back(relevance[r]);
    l.staytimes.push_back(staytimes[r]);
    l.item_ids.push_back(video_ids[r]);
  }
  return lists;
}

}  // namespace

Evaluation evaluate_predictions(const std::vector<double>& rank_scores, const std::vector<double>& staytime_preds,
                                const std::vector<double>& staytimes, const std::vector<Id>& user_ids,
                                const std::vector<Id>& video_ids,
                                const std::unordered_map<Id, std::size_t>& video_train_count,
                                const ExposureThresholds& exposure) {
  const std::size_t n = rank_scores.size();
  if (staytimes.size() != n || user_ids.size() != n || video_ids.size() != n ||
      (!staytime_preds.empty() && staytime_preds.size() != n)) {
    throw ValidationError("evaluate: prediction and truth vectors differ in length");
  }
  if (n == 0) throw ValidationError("evaluate: no opened test impressions");

  Evaluation ev;
  ev.opened_rows = n;
  auto& m = ev.metrics;
  m["xauc"] = metrics::xauc(rank_scores, staytimes);
  if (!staytime_preds.empty()) {
    m["rmse"] = metrics::rmse(staytime_preds, staytimes);
    m["mae"] = metrics::mae(staytime_preds, staytimes);
  }

  const metrics::RelevanceLabeling rel = metrics::relevance_labels(staytimes);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto lists = user_lists(all, rank_scores, staytimes, rel.labels, user_ids, video_ids);
  ev.ranked_users = lists.size();

  std::vector<metrics::UserList> multi;
  for (const auto& l : lists) {
    if (l.size() >= 2) {
      multi.push_back(l);
    } else {
      ++ev.excluded_users;
    }
  }
  m["xgauc"] = metrics::xgauc(multi);
  m["gauc"] = metrics::gauc(multi);
  m["mrr"] = metrics::mrr(lists);
  for (std::size_t k : {1, 3, 5}) {
    m["ndcg@" + std::to_string(k)] = metrics::ndcg_at_k(lists, k);
    m["staytime@" + std::to_string(k)] = metrics::staytime_at_n(lists, k);
  }

  for (Exposure g : {Exposure::None, Exposure::Low, Exposure::High}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (exposure_of(video_ids[i], video_train_count, exposure) == g) rows.push_back(i);
    }
    if (rows.empty()) continue;
    std::vector<double> p, t;
    for (std::size_t r : rows) {
      p.push_back(rank_scores[r]);
      t.push_back(staytimes[r]);
    }
    const std::string suffix = std::string(".exposure_") + exposure_name(g);
    if (metrics::xauc_counts(p, t).valid_pairs > 0) m["xauc" + suffix] = metrics::xauc(p, t);
    m["ndcg@5" + suffix] =
        metrics::ndcg_at_k(user_lists(rows, rank_scores, staytimes, rel.labels, user_ids, video_ids), 5);
  }
  return ev;
}

Evaluation evaluate_model(const LcuModel& model, const ExampleSet& test,
                          const std::unordered_map<Id, std::size_t>& video_train_count,
                          const ExposureThresholds& exposure) {
  const ExampleSet opened = test.subset(test.opened_rows());
  const std::vector<double> rank = model.predict_rank(opened);
  std::vector<double> staytime;
  if (models::has_staytime_inverse(model.config().kind)) staytime = model.predict_staytime(opened);
  return evaluate_predictions(rank, staytime, opened.targets.staytime_s, opened.user_ids, opened.video_ids,
                              video_train_count, exposure);
}

}  // namespace staytime::lcu
