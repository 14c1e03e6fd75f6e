#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace staytime::metrics {

/// Relevance labels r = 1 iff staytime > threshold, where the threshold is
/// the 70th percentile of the observed staytimes.
struct RelevanceLabeling {
  double threshold = 0.0;
  std::vector<std::uint8_t> labels;
};

inline constexpr double kRelevancePercentile = 0.7;

/// Percentile by linear interpolation between closest ranks:
/// position p * (n - 1) into the sorted sample.
double percentile(std::span<const double> values, double p);

RelevanceLabeling relevance_labels(std::span<const double> staytimes, double p = kRelevancePercentile);

double rmse(std::span<const double> preds, std::span<const double> truths);
double mae(std::span<const double> preds, std::span<const double> truths);

/// Concordance counts over pairs with distinct truths.
struct PairCounts {
  double concordant = 0.0;  ///< includes 0.5 per tied-prediction pair
  std::uint64_t valid_pairs = 0;
};

/// O(n log n) pair counting; prediction ties score 0.5.
PairCounts xauc_counts(std::span<const double> preds, std::span<const double> truths);

/// Fraction of distinct-truth pairs ordered the same way by preds.
/// Throws ValidationError when no valid pair exists.
double xauc(std::span<const double> preds, std::span<const double> truths);

/// One user's candidate list. `item_ids` break prediction ties (ascending)
/// in every list metric.
struct UserList {
  std::vector<double> preds;
  std::vector<std::uint8_t> relevance;
  std::vector<double> staytimes;
  std::vector<std::int64_t> item_ids;

  std::size_t size() const { return preds.size(); }
};

/// Pair-count weighted mean of per-user XAUC over `staytimes`; users
/// without a valid pair are skipped. Throws when no user has one.
double xgauc(std::span<const UserList> users);

/// Impression-count weighted mean of per-user ROC-AUC on `relevance`, over
/// users with at least one positive and one negative. Throws when no user
/// is eligible.
double gauc(std::span<const UserList> users);

/// Mean over users of 1 / rank of the first relevant item (0 when none).
double mrr(std::span<const UserList> users);

/// Binary-gain NDCG@k with log2(rank + 1) discounts, averaged over users.
/// Users without a relevant item contribute 0.
double ndcg_at_k(std::span<const UserList> users, std::size_t k);

/// Mean over users of the mean true staytime of their top-n predictions.
double staytime_at_n(std::span<const UserList> users, std::size_t n);

/// Indices of `list` sorted by prediction descending, item id ascending.
std::vector<std::size_t> ranking_order(const UserList& list);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace staytime::metrics
