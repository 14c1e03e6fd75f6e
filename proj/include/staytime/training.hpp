#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "staytime/features.hpp"
#include "staytime/lcu_model.hpp"
#include "staytime/nn/optim.hpp"

namespace staytime::lcu {

struct TrainConfig {
  std::size_t max_epochs = 8;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  /// Epochs without a validation XAUC improvement before stopping.
  std::size_t patience = 2;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean_loss;  ///< averaged over the epoch's mini-batches
  double validation_xauc = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  /// Staytime loss of every optimizer step, in order.
  std::vector<double> step_staytime_losses;
  std::size_t best_epoch = 0;
  double best_validation_xauc = 0.0;
  bool stopped_early = false;
};

/// Rows a model of this kind is trained on: opened impressions for the
/// regression heads, every impression for WLR and NDT.
features::ExampleSet training_rows(const features::ExampleSet& all, models::ModelKind kind);

/// Mini-batch Adam with seeded shuffling. After every epoch the ranking
/// score's XAUC on opened validation rows is logged; training stops after
/// `patience` epochs without improvement and the best parameters are
/// restored. A non-finite loss restores the parameters of the last finished
/// epoch and throws DivergenceError.
TrainingLog train_model(LcuModel& model, const features::ExampleSet& train, const features::ExampleSet& validation,
                        const TrainConfig& config, std::uint64_t shuffle_seed);

/// XAUC of predict_rank over opened rows.
double validation_xauc(const LcuModel& model, const features::ExampleSet& rows);

struct ExposureThresholds {
  /// Videos with 1..low_max training impressions are "low"; more is "high".
  std::size_t low_max = 9;
};

struct Evaluation {
  std::map<std::string, double> metrics;
  std::size_t opened_rows = 0;
  std::size_t ranked_users = 0;
  /// Users with fewer than two opened test impressions, left out of GAUC and XGAUC.
  std::size_t excluded_users = 0;
};

/// Staytime metrics (XAUC, XGAUC, RMSE, MAE; none of the error metrics for
/// NDT) and ranking metrics (GAUC, MRR, NDCG@{1,3,5}, Staytime@{1,3,5}) on
/// opened test impressions, plus XAUC and NDCG@5 per exposure group.
Evaluation evaluate_model(const LcuModel& model, const features::ExampleSet& test,
                          const std::unordered_map<Id, std::size_t>& video_train_count,
                          const ExposureThresholds& exposure = {});

/// The metric computation behind evaluate_model, on plain prediction vectors.
/// `staytime_preds` may be empty (no RMSE/MAE). Rows must all be opened.
Evaluation evaluate_predictions(const std::vector<double>& rank_scores, const std::vector<double>& staytime_preds,
                                const std::vector<double>& staytimes, const std::vector<Id>& user_ids,
                                const std::vector<Id>& video_ids,
                                const std::unordered_map<Id, std::size_t>& video_train_count,
                                const ExposureThresholds& exposure = {});

}  // namespace staytime::lcu
