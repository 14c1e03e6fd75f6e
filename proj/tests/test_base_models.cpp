#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "staytime/base_models.hpp"
#include "staytime/error.hpp"
#include "staytime/nn/grad_check.hpp"
#include "test_util.hpp"

using namespace staytime;
using namespace staytime::models;
using staytime::fixtures::random_tensor;

namespace {

HeadForward outputs(std::vector<double> a, std::vector<double> b = {}) {
  HeadForward f;
  f.a = std::move(a);
  f.b = std::move(b);
  return f;
}

HeadTargets targets(std::vector<double> st, std::vector<std::uint8_t> opened, std::vector<double> dur = {}) {
  HeadTargets t;
  if (dur.empty()) dur.assign(st.size(), 60.0);
  t.staytime_s = std::move(st);
  t.opened = std::move(opened);
  t.duration_s = std::move(dur);
  return t;
}

HeadTargets random_targets(std::size_t n, std::mt19937_64& rng) {
  std::lognormal_distribution<double> st(2.5, 0.8);
  std::uniform_real_distribution<double> dur(5.0, 300.0);
  std::bernoulli_distribution open(0.7);
  HeadTargets t;
  for (std::size_t i = 0; i < n; ++i) {
    const bool o = open(rng);
    t.opened.push_back(o ? 1 : 0);
    t.staytime_s.push_back(o ? st(rng) : 0.0);
    t.duration_s.push_back(dur(rng));
  }
  t.opened[0] = 1;
  if (t.staytime_s[0] == 0.0) t.staytime_s[0] = 3.0;
  return t;
}

// Weighted-logistic objective of one shared logit, written out directly.
double wlr_objective(double z, const std::vector<double>& w) {
  double s = 0.0;
  for (double wi : w) s += wi * std::log1p(std::exp(-z)) + std::log1p(std::exp(z));
  return s / static_cast<double>(w.size());
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int i = 0; i < 200; ++i) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(ModelKind, ParsingAndCapabilities) {
  EXPECT_EQ(parse_model_kind("D2Q"), ModelKind::D2Q);
  EXPECT_EQ(parse_model_kind("wlr"), ModelKind::WLR);
  EXPECT_THROW(parse_model_kind("xgb"), ConfigError);
  for (auto k : {ModelKind::VR, ModelKind::WLR, ModelKind::PCR, ModelKind::D2Q}) EXPECT_TRUE(has_staytime_inverse(k));
  EXPECT_FALSE(has_staytime_inverse(ModelKind::NDT));
}

TEST(Vr, SquaredErrorExamples) {
  StaytimeHead h(ModelKind::VR, 4, 8);
  const auto t = targets({10.0, 30.0}, {1, 1});
  EXPECT_EQ(h.loss(outputs({10.0, 30.0}), t).loss, 0.0);
  EXPECT_DOUBLE_EQ(h.loss(outputs({12.0, 32.0}), t).loss, 4.0);
  EXPECT_EQ(h.predict_staytime(outputs({-3.0, 5.0}), t.duration_s), (std::vector<double>{0.0, 5.0}));
}

TEST(Vr, UnopenedRowsAreIgnored) {
  StaytimeHead h(ModelKind::VR, 4, 8);
  const auto t = targets({10.0, 0.0}, {1, 0});
  const auto l = h.loss(outputs({10.0, 99.0}), t);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.d_a[1], 0.0);
}

TEST(Wlr, ZeroLogitMeansUnitStaytime) {
  StaytimeHead h(ModelKind::WLR, 4, 8);
  const auto t = targets({5.0}, {1});
  EXPECT_DOUBLE_EQ(h.predict_staytime(outputs({0.0}, {0.0}), t.duration_s)[0], 1.0);
  EXPECT_DOUBLE_EQ(h.predict_rank(outputs({0.0}, {0.0}), t.duration_s)[0], 0.5);
}

TEST(Wlr, UnopenedRowsGiveTowerBNoGradient) {
  StaytimeHead h(ModelKind::WLR, 4, 8);
  const auto t = targets({5.0, 0.0, 9.0}, {1, 0, 1});
  const auto l = h.loss(outputs({0.3, -0.2, 0.1}, {1.0, 2.0, 0.5}), t);
  EXPECT_EQ(l.d_b[1], 0.0);
  EXPECT_NE(l.d_b[0], 0.0);
  EXPECT_NE(l.d_a[1], 0.0);
}

TEST(Wlr, RejectsNonPositiveWeights) {
  StaytimeHead h(ModelKind::WLR, 4, 8);
  EXPECT_THROW(h.loss(outputs({0.0}, {0.0}), targets({0.0}, {1})), ValidationError);
}

TEST(Wlr, OddsMatchScalarOptimum) {
  // A bias-only tower B trained by gradient descent must land on the
  // minimiser of the weighted logistic objective found by scalar search.
  for (const std::vector<double>& w : {std::vector<double>(6, 7.0), std::vector<double>{2.0, 5.0, 11.0, 3.5}}) {
    StaytimeHead h(ModelKind::WLR, 1, 2);
    const auto t = targets(w, std::vector<std::uint8_t>(w.size(), 1));
    double z = 0.0;
    for (int step = 0; step < 4000; ++step) {
      const auto l = h.loss(outputs(std::vector<double>(w.size(), 0.0), std::vector<double>(w.size(), z)), t);
      double g = 0.0;
      for (double d : l.d_b) g += d;
      z -= 0.5 * g;
    }
    const double z_star = golden_section_min([&](double x) { return wlr_objective(x, w); }, -10.0, 10.0);
    EXPECT_NEAR(z, z_star, 1e-6);
    const double odds = h.predict_staytime(outputs({0.0}, {z}), std::vector<double>{60.0})[0];
    EXPECT_NEAR(odds, std::exp(z_star), 1e-5);
  }
  // Constant staytime c: the odds converge to c.
  const std::vector<double> c(6, 7.0);
  EXPECT_NEAR(std::exp(golden_section_min([&](double x) { return wlr_objective(x, c); }, -10.0, 10.0)), 7.0, 1e-6);
}

TEST(Ndt, TargetEndpointsAndMonotone) {
  EXPECT_EQ(ndt_target(0.0, 80.0), 0.0);
  EXPECT_DOUBLE_EQ(ndt_target(80.0, 80.0), 1.0);
  EXPECT_EQ(ndt_target(500.0, 80.0), 1.0);
  double prev = 0.0;
  for (double st = 0.0; st <= 200.0; st += 0.5) {
    const double v = ndt_target(st, 80.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Ndt, UnopenedRowsTargetZeroAndNoStaytime) {
  StaytimeHead h(ModelKind::NDT, 4, 8);
  const auto t = targets({5.0, 0.0}, {1, 0});
  h.fit_transform(t);
  const auto l = h.loss(outputs({0.0, 0.0}), t);
  EXPECT_NEAR(l.d_a[1], 0.5 / 2.0, 1e-15);  // sigmoid(0) - 0, averaged over 2 rows
  EXPECT_THROW(h.predict_staytime(outputs({0.0, 0.0}), t.duration_s), UnsupportedOperation);
  const auto r = h.predict_rank(outputs({-1.0, 2.0}), t.duration_s);
  EXPECT_LT(r[0], r[1]);
}

TEST(Pcr, RatioExamplesAndExactRoundTrip) {
  StaytimeHead h(ModelKind::PCR, 4, 8);
  EXPECT_DOUBLE_EQ(h.transformed_target(30.0, 60.0), 0.5);
  EXPECT_DOUBLE_EQ(h.predict_staytime(outputs({0.5}), std::vector<double>{120.0})[0], 60.0);
  std::mt19937_64 rng(31);
  const auto t = random_targets(2000, rng);
  for (std::size_t i = 0; i < t.staytime_s.size(); ++i) {
    const double ratio = h.transformed_target(t.staytime_s[i], t.duration_s[i]);
    const double back = h.predict_staytime(outputs({ratio}), std::vector<double>{t.duration_s[i]})[0];
    EXPECT_NEAR(back, t.staytime_s[i], 1e-12);
  }
}

TEST(DurationBuckets, MidRankAndEndpoints) {
  const std::vector<double> d{5, 5, 5};
  const std::vector<double> st{20, 10, 30};
  const auto b = DurationBuckets::fit(d, st, 1);
  EXPECT_DOUBLE_EQ(b.transform(0, 20.0), 0.5);
  EXPECT_EQ(b.inverse(0, 0.0), 10.0);
  EXPECT_EQ(b.inverse(0, 1.0), 30.0);
  EXPECT_DOUBLE_EQ(b.inverse(0, 0.5), 20.0);
}

TEST(DurationBuckets, EqualFrequencyAndClamping) {
  std::vector<double> d, st;
  for (int i = 0; i < 300; ++i) {
    d.push_back(i + 1.0);
    st.push_back(i % 17 + 1.0);
  }
  const auto b = DurationBuckets::fit(d, st, 30);
  ASSERT_EQ(b.size(), 30u);
  for (std::size_t k = 0; k < 30; ++k) EXPECT_EQ(b.bucket_staytimes(k).size(), 10u);
  EXPECT_EQ(b.bucket_of(-5.0), 0u);
  EXPECT_EQ(b.bucket_of(1e9), 29u);
  EXPECT_EQ(b.bucket_of(10.0), 0u);
  EXPECT_EQ(b.bucket_of(10.5), 1u);
}

TEST(DurationBuckets, EmptyBucketIsAnError) {
  const std::vector<double> d{1, 1, 1, 1};
  const std::vector<double> st{1, 2, 3, 4};
  try {
    DurationBuckets::fit(d, st, 3);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fewer buckets"), std::string::npos);
  }
  EXPECT_THROW(DurationBuckets::fit(std::vector<double>{}, std::vector<double>{}, 3), ValidationError);
}

TEST(DurationBuckets, RoundTripWithinOrderStatisticGap) {
  std::mt19937_64 rng(32);
  std::lognormal_distribution<double> ln(3.0, 1.0);
  std::vector<double> d(1000, 50.0), st(1000);
  for (double& v : st) v = std::round(ln(rng) * 10.0) / 10.0;  // some ties
  const auto b = DurationBuckets::fit(d, st, 1);
  const double gap = b.max_adjacent_gap(0);
  for (double s : st) EXPECT_LE(std::abs(b.inverse(0, b.transform(0, s)) - s), gap + 1e-12);
}

TEST(DurationBuckets, MonotoneTransformAndInverse) {
  std::mt19937_64 rng(33);
  std::exponential_distribution<double> ex(0.05);
  std::vector<double> d(500), st(500);
  for (std::size_t i = 0; i < 500; ++i) {
    d[i] = 10.0 + static_cast<double>(i % 50);
    st[i] = ex(rng);
  }
  const auto b = DurationBuckets::fit(d, st, 5);
  for (std::size_t k = 0; k < b.size(); ++k) {
    double prev = -1.0;
    for (double s = 0.0; s < 200.0; s += 0.25) {
      const double q = b.transform(k, s);
      EXPECT_GE(q, prev);
      prev = q;
    }
    prev = -1.0;
    for (double q = 0.0; q <= 1.0; q += 0.001) {
      const double v = b.inverse(k, q);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(DurationBuckets, SectionRoundTrip) {
  std::mt19937_64 rng(34);
  const auto t = random_targets(400, rng);
  const auto b = DurationBuckets::fit(t.duration_s, t.staytime_s, 7);
  std::vector<nn::Section> sections;
  b.append_sections("d2q", sections);
  const auto back = DurationBuckets::from_sections("d2q", sections);
  EXPECT_EQ(back.upper_edges(), b.upper_edges());
  for (std::size_t k = 0; k < b.size(); ++k) EXPECT_EQ(back.bucket_staytimes(k), b.bucket_staytimes(k));
}

TEST(D2q, PredictsThroughBucketInverse) {
  std::mt19937_64 rng(35);
  const auto t = random_targets(600, rng);
  StaytimeHead h(ModelKind::D2Q, 4, 8);
  h.fit_transform(t, 5);
  for (std::size_t i = 0; i < 50; ++i) {
    if (!t.opened[i]) continue;
    const double q = h.transformed_target(t.staytime_s[i], t.duration_s[i]);
    const std::size_t k = h.buckets().bucket_of(t.duration_s[i]);
    const double back = h.predict_staytime(outputs({q}), std::vector<double>{t.duration_s[i]})[0];
    EXPECT_LE(std::abs(back - t.staytime_s[i]), h.buckets().max_adjacent_gap(k) + 1e-12);
  }
}

TEST(StaytimeHead, GradientCheckEveryKind) {
  for (auto kind : {ModelKind::VR, ModelKind::WLR, ModelKind::NDT, ModelKind::PCR, ModelKind::D2Q}) {
    std::mt19937_64 rng(36);
    const auto t = random_targets(12, rng);
    StaytimeHead h(kind, 5, 8);
    h.fit_transform(t, 2);
    h.init(rng);
    nn::Param x("representation", 12, 5);
    x.value = random_tensor(12, 5, rng);
    nn::ParamList ps;
    h.collect(ps);
    ps.push_back(&x);
    nn::GradCheckOptions opt;
    opt.exclude_kinks = true;
    const auto r = nn::grad_check(
        ps, [&] { return h.loss(h.forward(x.value), t).loss; },
        [&] {
          nn::zero_grad(ps);
          const auto out = h.forward(x.value);
          x.grad = h.backward(out, h.loss(out, t));
        },
        opt);
    EXPECT_TRUE(r.passed(1e-4)) << to_string(kind) << " " << r.worst_param << " " << r.max_rel_error;
    EXPECT_GT(r.checked, 50u);
  }
}

TEST(StaytimeHead, StateSectionsRoundTrip) {
  std::mt19937_64 rng(37);
  const auto t = random_targets(300, rng);
  for (auto kind : {ModelKind::VR, ModelKind::NDT, ModelKind::D2Q}) {
    StaytimeHead a(kind, 3, 4);
    a.fit_transform(t, 4);
    std::vector<nn::Section> s;
    a.append_state_sections(s);
    StaytimeHead b(kind, 3, 4);
    b.load_state_sections(s);
    EXPECT_EQ(a.vr_scale(), b.vr_scale());
    EXPECT_EQ(a.ndt_p99(), b.ndt_p99());
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_EQ(a.transformed_target(t.staytime_s[i], t.duration_s[i]),
                b.transformed_target(t.staytime_s[i], t.duration_s[i]));
    }
  }
}
