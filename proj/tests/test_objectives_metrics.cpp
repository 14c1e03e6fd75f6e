#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "staytime/error.hpp"
#include "staytime/metrics.hpp"
#include "staytime/objectives.hpp"

using namespace staytime;
namespace m = staytime::metrics;

// --- ListMLE -------------------------------------------------------------------------

TEST(ListMle, AllEqualScoresGiveLogFactorial) {
  double log_fact = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) {
    log_fact += std::log(static_cast<double>(n));
    std::vector<double> s(n, 0.7);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto l = listmle_loss(s, order, std::vector<std::uint8_t>(n, 1));
    EXPECT_NEAR(l.loss, log_fact, 1e-9) << "n=" << n;
  }
}

TEST(ListMle, TwoItemExample) {
  // order (0, 1), scores (2, 0): log(e^2 + 1) - 2.
  const std::vector<double> s{2.0, 0.0};
  const std::vector<std::size_t> order{0, 1};
  const auto l = listmle_loss(s, order, std::vector<std::uint8_t>{1, 1});
  EXPECT_NEAR(l.loss, std::log(std::exp(2.0) + 1.0) - 2.0, 1e-12);
}

TEST(ListMle, MatchesNaiveFormulaAndFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 6;
    std::vector<double> s(k);
    for (double& v : s) v = n(rng);
    std::vector<std::uint8_t> mask(k, 1);
    mask[trial % k] = 0;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask[i]) order.push_back(i);
    }
    std::shuffle(order.begin(), order.end(), rng);
    const auto l = listmle_loss(s, order, mask);
    EXPECT_NEAR(l.loss, oracle::listmle(s, order), 1e-10);
    for (std::size_t i = 0; i < k; ++i) {
      if (!mask[i]) {
        EXPECT_EQ(l.grad[i], 0.0);
        continue;
      }
      auto sp = s, sm = s;
      sp[i] += 1e-6;
      sm[i] -= 1e-6;
      const double numeric = (oracle::listmle(sp, order) - oracle::listmle(sm, order)) / 2e-6;
      EXPECT_NEAR(l.grad[i], numeric, 1e-6);
    }
  }
}

TEST(ListMle, StableForLargeScores) {
  const std::vector<double> s{800.0, 0.0, -800.0};
  const std::vector<std::size_t> order{2, 1, 0};
  const auto l = listmle_loss(s, order, std::vector<std::uint8_t>{1, 1, 1});
  EXPECT_TRUE(std::isfinite(l.loss));
  EXPECT_NEAR(l.loss, 1600.0 + 800.0, 1e-9);
}

TEST(ListMle, RejectsBadOrders) {
  const std::vector<double> s{1.0, 2.0, 3.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  EXPECT_THROW(listmle_loss(s, std::vector<std::size_t>{0}, mask), ValidationError);
  EXPECT_THROW(listmle_loss(s, std::vector<std::size_t>{0, 2}, mask), ValidationError);
  EXPECT_THROW(listmle_loss(s, std::vector<std::size_t>{0, 0}, mask), ValidationError);
  EXPECT_THROW(listmle_loss(s, std::vector<std::size_t>{}, std::vector<std::uint8_t>{0, 0, 0}), ValidationError);
}

// --- BCE -----------------------------------------------------------------------------

TEST(Bce, ZeroLogitPositiveLabelIsLog2) {
  const auto l = bce_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, std::vector<std::uint8_t>{1});
  EXPECT_NEAR(l.loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(l.grad[0], -0.5, 1e-15);
}

TEST(Bce, MeanOverUnmaskedAndGradient) {
  const std::vector<double> z{2.0, -1.0, 5.0};
  const std::vector<double> y{0.0, 1.0, 1.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const auto l = bce_loss(z, y, mask);
  const double expect = (std::log1p(std::exp(2.0)) + std::log1p(std::exp(1.0))) / 2.0;
  EXPECT_NEAR(l.loss, expect, 1e-12);
  EXPECT_NEAR(l.grad[0], sigmoid(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(l.grad[1], (sigmoid(-1.0) - 1.0) / 2.0, 1e-15);
  EXPECT_EQ(l.grad[2], 0.0);
}

TEST(Bce, ExtremeLogitsStayFinite) {
  const auto l = bce_loss(std::vector<double>{-1000.0, 1000.0}, std::vector<double>{1.0, 0.0},
                          std::vector<std::uint8_t>{1, 1});
  EXPECT_NEAR(l.loss, 1000.0, 1e-9);
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_EQ(total_loss(2.0, 3.0, 5.0, LossWeights{0.5, 0.25}), 2.0 + 1.5 + 1.25);
  EXPECT_EQ(total_loss(1.0, 7.0, 9.0, LossWeights{0.0, 0.0}), 1.0);
  EXPECT_THROW((LossWeights{-1.0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{0.0, std::nan("")}.validate()), ConfigError);
}

// --- metrics -------------------------------------------------------------------------

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v{10, 20, 30, 40, 50};
  EXPECT_DOUBLE_EQ(m::percentile(v, 0.7), 38.0);  // position 2.8
  EXPECT_DOUBLE_EQ(m::percentile(v, 0.0), 10.0);
  EXPECT_DOUBLE_EQ(m::percentile(v, 1.0), 50.0);
  const auto r = m::relevance_labels(v);
  EXPECT_EQ(r.labels, (std::vector<std::uint8_t>{0, 0, 0, 1, 1}));
}

TEST(Xauc, PerfectReversedAndTied) {
  const std::vector<double> t{1, 2, 3, 4};
  EXPECT_EQ(m::xauc(std::vector<double>{1, 2, 3, 4}, t), 1.0);
  EXPECT_EQ(m::xauc(std::vector<double>{4, 3, 2, 1}, t), 0.0);
  EXPECT_EQ(m::xauc(std::vector<double>{7, 7, 7, 7}, t), 0.5);
  EXPECT_THROW(m::xauc(std::vector<double>{1, 2}, std::vector<double>{3, 3}), ValidationError);
}

TEST(Gauc, SingleUserIsRocAuc) {
  m::UserList u;
  u.preds = {0.9, 0.8, 0.3, 0.1};
  u.relevance = {1, 0, 1, 0};
  u.staytimes = {9, 1, 8, 2};
  u.item_ids = {1, 2, 3, 4};
  // positive pairs beating negatives: (0.9>0.8, 0.9>0.1, 0.3>0.1) = 3 of 4
  EXPECT_DOUBLE_EQ(m::gauc(std::vector{u}), 0.75);
}

TEST(RankingMetrics, TiesBreakByItemId) {
  m::UserList u;
  u.preds = {0.5, 0.5, 0.1};
  u.relevance = {0, 1, 0};
  u.staytimes = {1, 9, 2};
  u.item_ids = {20, 10, 5};
  const std::vector<m::UserList> users{u};
  EXPECT_EQ(m::ranking_order(u), (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(m::mrr(users), 1.0);
  EXPECT_DOUBLE_EQ(m::ndcg_at_k(users, 1), 1.0);
  EXPECT_DOUBLE_EQ(m::staytime_at_n(users, 2), 5.0);
}

TEST(RankingMetrics, UsersWithoutPositivesCountAsZero) {
  m::UserList a, b;
  a.preds = {0.2, 0.1};
  a.relevance = {1, 0};
  a.staytimes = {5, 1};
  a.item_ids = {1, 2};
  b = a;
  b.relevance = {0, 0};
  const std::vector<m::UserList> users{a, b};
  EXPECT_DOUBLE_EQ(m::ndcg_at_k(users, 5), 0.5);
  EXPECT_DOUBLE_EQ(m::mrr(users), 0.5);
}

TEST(Metrics, AgreeWithBruteForceOnRandomFixtures) {
  std::mt19937_64 rng(12);
  for (int f = 0; f < 200; ++f) {
    const auto fx = oracle::random_fixture(rng);
    if (oracle::xauc_pairs(fx.preds, fx.truths).count > 0) {
      EXPECT_NEAR(m::xauc(fx.preds, fx.truths), oracle::xauc(fx.preds, fx.truths), 1e-12);
    }
    double user_pairs = 0.0;
    for (const auto& u : fx.users) user_pairs += oracle::xauc_pairs(u.preds, u.staytimes).count;
    if (user_pairs > 0) {
      EXPECT_NEAR(m::xgauc(fx.users), oracle::xgauc(fx.users), 1e-12) << f;
    } else {
      EXPECT_THROW(m::xgauc(fx.users), ValidationError);
    }
    EXPECT_NEAR(m::rmse(fx.preds, fx.truths), oracle::rmse(fx.preds, fx.truths), 1e-12);
    EXPECT_NEAR(m::mae(fx.preds, fx.truths), oracle::mae(fx.preds, fx.truths), 1e-12);
    EXPECT_NEAR(m::mrr(fx.users), oracle::mrr(fx.users), 1e-12);
    for (std::size_t k : {1, 3, 5}) {
      EXPECT_NEAR(m::ndcg_at_k(fx.users, k), oracle::ndcg(fx.users, k), 1e-12);
      EXPECT_NEAR(m::staytime_at_n(fx.users, k), oracle::staytime_at(fx.users, k), 1e-12);
    }
    bool eligible = false;
    for (const auto& u : fx.users) {
      const auto pos = std::count(u.relevance.begin(), u.relevance.end(), 1);
      eligible = eligible || (pos > 0 && pos < static_cast<long>(u.size()));
    }
    if (eligible) {
      EXPECT_NEAR(m::gauc(fx.users), oracle::gauc(fx.users), 1e-12);
    } else {
      EXPECT_THROW(m::gauc(fx.users), ValidationError);
    }
  }
}

TEST(Xauc, InvariantUnderMonotoneTransformOfPredictions) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(300), t(300);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    t[i] = std::floor(u(rng) * 50.0);
  }
  std::vector<double> q;
  for (double v : p) q.push_back(std::exp(3.0 * v) - 7.0);
  EXPECT_DOUBLE_EQ(m::xauc(p, t), m::xauc(q, t));
}

TEST(Spearman, RankCorrelation) {
  EXPECT_DOUBLE_EQ(m::spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 20, 25, 100}), 1.0);
  EXPECT_DOUBLE_EQ(m::spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0);
  EXPECT_NEAR(m::spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{2, 1, 4, 3, 5}), 0.8, 1e-12);
}

TEST(ListMle, SpecExamples) {
  const std::vector<std::uint8_t> all3{1, 1, 1};
  const std::vector<std::size_t> order3{0, 1, 2};
  EXPECT_NEAR(listmle_loss(std::vector<double>{0.3, 0.3, 0.3}, order3, all3).loss, std::log(6.0), 1e-12);
  EXPECT_EQ(listmle_loss(std::vector<double>{4.2}, std::vector<std::size_t>{0}, std::vector<std::uint8_t>{1}).loss, 0.0);
  const std::vector<double> s{10.0, 0.0, -10.0};
  EXPECT_NEAR(listmle_loss(s, order3, all3).loss, oracle::listmle(s, order3), 1e-12);
}

TEST(ListMle, ShiftInvariant) {
  const std::vector<double> s{0.4, -1.3, 2.2, 0.9};
  std::vector<double> shifted;
  for (double v : s) shifted.push_back(v + 37.5);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const std::vector<std::uint8_t> mask(4, 1);
  EXPECT_NEAR(listmle_loss(s, order, mask).loss, listmle_loss(shifted, order, mask).loss, 1e-9);
}

TEST(Bce, MixedBatchAgainstDirectFormula) {
  const std::vector<double> z{-3.0, 0.25, 1.5, 7.0};
  const std::vector<double> y{0.0, 1.0, 0.3, 1.0};
  double expect = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    expect -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  expect /= 4.0;
  EXPECT_NEAR(bce_loss(z, y, std::vector<std::uint8_t>(4, 1)).loss, expect, 1e-12);
  EXPECT_NEAR(bce_loss(std::vector<double>{60.0}, std::vector<double>{1.0}, std::vector<std::uint8_t>{1}).loss, 0.0, 1e-20);
  EXPECT_THROW(bce_loss(z, y, std::vector<std::uint8_t>(4, 0)), ValidationError);
}

TEST(TotalLoss, SpecArithmetic) {
  EXPECT_NEAR(total_loss(1.0, 2.0, 3.0, LossWeights{0.1, 0.01}), 1.23, 1e-15);
}

TEST(Relevance, SpecExamples) {
  std::vector<double> st;
  for (int i = 1; i <= 10; ++i) st.push_back(i);
  const auto r = m::relevance_labels(st);
  EXPECT_NEAR(r.threshold, 7.3, 1e-12);
  EXPECT_EQ(std::count(r.labels.begin(), r.labels.end(), 1), 3);
  EXPECT_TRUE(r.labels[7] && r.labels[8] && r.labels[9]);
  const auto flat = m::relevance_labels(std::vector<double>(5, 4.0));
  EXPECT_EQ(std::count(flat.labels.begin(), flat.labels.end(), 1), 0);
  const auto one = m::relevance_labels(std::vector<double>{9.0});
  EXPECT_EQ(one.threshold, 9.0);
  EXPECT_EQ(one.labels[0], 0);
}

TEST(RankingMetrics, SecondPlaceNdcg) {
  m::UserList u;
  u.preds = {0.9, 0.8, 0.7, 0.6, 0.5};
  u.relevance = {0, 1, 0, 0, 0};
  u.staytimes = {1, 2, 3, 4, 5};
  u.item_ids = {1, 2, 3, 4, 5};
  const std::vector<m::UserList> users{u};
  EXPECT_NEAR(m::ndcg_at_k(users, 3), 1.0 / std::log2(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(m::mrr(users), 0.5);
  auto first = u;
  first.relevance = {1, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(m::ndcg_at_k(std::vector{first}, 1), 1.0);
  EXPECT_DOUBLE_EQ(m::mrr(std::vector{first}), 1.0);
}

TEST(Regression, RmseMae) {
  const std::vector<double> t{1.0, 5.0, 9.0};
  EXPECT_EQ(m::rmse(t, t), 0.0);
  EXPECT_EQ(m::mae(t, t), 0.0);
  const std::vector<double> p{2.0, 6.0, 10.0};
  EXPECT_DOUBLE_EQ(m::rmse(p, t), 1.0);
  EXPECT_DOUBLE_EQ(m::mae(p, t), 1.0);
}

TEST(Xauc, NegatedPredictionsComplement) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(60), neg(60), t(60);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    neg[i] = -p[i];
    t[i] = u(rng);
  }
  EXPECT_NEAR(m::xauc(p, t) + m::xauc(neg, t), 1.0, 1e-12);
}

TEST(Metrics, ListMetricsInvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(15);
  for (int f = 0; f < 30; ++f) {
    auto fx = oracle::random_fixture(rng);
    auto moved = fx.users;
    for (auto& u : moved) {
      for (double& p : u.preds) p = std::atan(5.0 * p) * 3.0 + 1.0;
    }
    EXPECT_DOUBLE_EQ(m::mrr(fx.users), m::mrr(moved));
    EXPECT_DOUBLE_EQ(m::ndcg_at_k(fx.users, 3), m::ndcg_at_k(moved, 3));
  }
}
