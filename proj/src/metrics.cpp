#include "staytime/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "staytime/error.hpp"

namespace staytime::metrics {

namespace {

void require_paired(std::span<const double> preds, std::span<const double> truths, const char* who) {
  if (preds.size() != truths.size()) {
    throw ValidationError(std::string(who) + ": " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(truths.size()) + " truths");
  }
  if (preds.empty()) throw ValidationError(std::string(who) + ": empty input");
}

void require_list(const UserList& u) {
  const std::size_t n = u.preds.size();
  if (u.relevance.size() != n || u.staytimes.size() != n || u.item_ids.size() != n) {
    throw ValidationError("user list fields have different lengths");
  }
}

// Fenwick tree over compressed prediction ranks.
class CountTree {
 public:
  explicit CountTree(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Number of inserted values with rank < i.
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

RelevanceLabeling relevance_labels(std::span<const double> staytimes, double p) {
  RelevanceLabeling out;
  out.threshold = percentile(staytimes, p);
  out.labels.reserve(staytimes.size());
  for (double st : staytimes) out.labels.push_back(st > out.threshold ? 1 : 0);
  return out;
}

double rmse(std::span<const double> preds, std::span<const double> truths) {
  require_paired(preds, truths, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - truths[i]) * (preds[i] - truths[i]);
  return std::sqrt(s / static_cast<double>(preds.size()));
}

double mae(std::span<const double> preds, std::span<const double> truths) {
  require_paired(preds, truths, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - truths[i]);
  return s / static_cast<double>(preds.size());
}

PairCounts xauc_counts(std::span<const double> preds, std::span<const double> truths) {
  if (preds.size() != truths.size()) {
    throw ValidationError("xauc: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(truths.size()) + " truths");
  }
  const std::size_t n = preds.size();
  std::vector<double> levels(preds.begin(), preds.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  auto rank_of = [&](double p) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), p) - levels.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truths[a] < truths[b]; });

  PairCounts counts;
  CountTree tree(levels.size());
  std::uint64_t inserted = 0;
  std::uint64_t concordant = 0;
  std::uint64_t tied = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && truths[order[j]] == truths[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) {
      const std::size_t r = rank_of(preds[order[t]]);
      const std::uint64_t below = tree.prefix(r);
      concordant += below;
      tied += tree.prefix(r + 1) - below;
    }
    counts.valid_pairs += inserted * static_cast<std::uint64_t>(j - i);
    for (std::size_t t = i; t < j; ++t) tree.add(rank_of(preds[order[t]]));
    inserted += j - i;
    i = j;
  }
  counts.concordant = static_cast<double>(concordant) + 0.5 * static_cast<double>(tied);
  return counts;
}

double xauc(std::span<const double> preds, std::span<const double> truths) {
  const PairCounts c = xauc_counts(preds, truths);
  if (c.valid_pairs == 0) throw ValidationError("xauc: no pair with distinct truths");
  return c.concordant / static_cast<double>(c.valid_pairs);
}

double xgauc(std::span<const UserList> users) {
  double weighted = 0.0;
  std::uint64_t pairs = 0;
  for (const UserList& u : users) {
    require_list(u);
    const PairCounts c = xauc_counts(u.preds, u.staytimes);
    if (c.valid_pairs == 0) continue;
    weighted += c.concordant;  // (concordant / pairs) * pairs
    pairs += c.valid_pairs;
  }
  if (pairs == 0) throw ValidationError("xgauc: no user has a pair with distinct staytimes");
  return weighted / static_cast<double>(pairs);
}

double gauc(std::span<const UserList> users) {
  double weighted = 0.0;
  double weight = 0.0;
  for (const UserList& u : users) {
    require_list(u);
    const std::size_t n = u.size();
    const auto pos = static_cast<std::size_t>(std::count(u.relevance.begin(), u.relevance.end(), 1));
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) continue;
    const std::vector<double> ranks = average_ranks(u.preds);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (u.relevance[i]) rank_sum += ranks[i];
    }
    const double p = static_cast<double>(pos);
    const double auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
    weighted += static_cast<double>(n) * auc;
    weight += static_cast<double>(n);
  }
  if (weight == 0.0) throw ValidationError("gauc: no user with both a positive and a negative");
  return weighted / weight;
}

std::vector<std::size_t> ranking_order(const UserList& list) {
  std::vector<std::size_t> idx(list.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (list.preds[a] != list.preds[b]) return list.preds[a] > list.preds[b];
    return list.item_ids[a] < list.item_ids[b];
  });
  return idx;
}

double mrr(std::span<const UserList> users) {
  if (users.empty()) throw ValidationError("mrr: no users");
  double total = 0.0;
  for (const UserList& u : users) {
    require_list(u);
    const auto order = ranking_order(u);
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (u.relevance[order[r]]) {
        total += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(users.size());
}

double ndcg_at_k(std::span<const UserList> users, std::size_t k) {
  if (users.empty()) throw ValidationError("ndcg: no users");
  double total = 0.0;
  for (const UserList& u : users) {
    require_list(u);
    const auto pos = static_cast<std::size_t>(std::count(u.relevance.begin(), u.relevance.end(), 1));
    if (pos == 0) continue;
    const auto order = ranking_order(u);
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
      if (u.relevance[order[r]]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, pos); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    total += dcg / idcg;
  }
  return total / static_cast<double>(users.size());
}

double staytime_at_n(std::span<const UserList> users, std::size_t n) {
  if (users.empty()) throw ValidationError("staytime@n: no users");
  double total = 0.0;
  std::size_t counted = 0;
  for (const UserList& u : users) {
    require_list(u);
    if (u.size() == 0) continue;
    const auto order = ranking_order(u);
    const std::size_t m = std::min(n, order.size());
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += u.staytimes[order[r]];
    total += s / static_cast<double>(m);
    ++counted;
  }
  if (counted == 0) throw ValidationError("staytime@n: every user list is empty");
  return total / static_cast<double>(counted);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal samples of size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace staytime::metrics
