// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Runs from the build tree; all data goes under ./acceptance-work.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "staytime/base_models.hpp"
#include "staytime/datagen.hpp"
#include "staytime/features.hpp"
#include "staytime/harness.hpp"
#include "staytime/lcu_model.hpp"
#include "staytime/metrics.hpp"
#include "staytime/nn/grad_check.hpp"
#include "staytime/objectives.hpp"
#include "test_util.hpp"

using namespace staytime;
namespace fs = std::filesystem;
namespace m = staytime::metrics;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- gradient integrity ----------------------------------------------------------------

struct Worst {
  double linear = 0.0;  // layers held to 1e-7
  double other = 0.0;   // everything else, 1e-4
  std::string where;
  void linear_result(const std::string& what, const nn::GradCheckResult& r) {
    if (r.max_rel_error > linear) {
      linear = r.max_rel_error;
      if (linear >= 1e-7) where = what + ":" + r.worst_param;
    }
  }
  void other_result(const std::string& what, const nn::GradCheckResult& r) {
    if (r.max_rel_error > other) {
      other = r.max_rel_error;
      if (other >= 1e-4) where = what + ":" + r.worst_param;
    }
  }
};

void check_gradients() {
  using fixtures::random_tensor;
  using fixtures::weighted_sum;
  const auto t0 = Clock::now();
  Worst w;
  nn::GradCheckOptions kinks;
  kinks.exclude_kinks = true;
  nn::Rng rng(2024);

  {
    nn::Dense d("dense", 5, 4);
    d.init(rng);
    nn::Param x("x", 3, 5);
    x.value = random_tensor(3, 5, rng);
    const nn::Tensor up = random_tensor(3, 4, rng);
    nn::ParamList ps;
    d.collect(ps);
    ps.push_back(&x);
    w.linear_result("dense", nn::grad_check(
                                 ps, [&] { return weighted_sum(d.forward(x.value), up); },
                                 [&] {
                                   nn::zero_grad(ps);
                                   x.grad = d.backward(x.value, up);
                                 }));
  }
  {
    nn::Embedding e("embedding", 6, 3);
    e.init(rng);
    const std::vector<std::size_t> ids{0, 5, 5, 2};
    const nn::Tensor up = random_tensor(4, 3, rng);
    nn::ParamList ps;
    e.collect(ps);
    w.linear_result("embedding", nn::grad_check(
                                     ps, [&] { return weighted_sum(e.forward(ids), up); },
                                     [&] {
                                       nn::zero_grad(ps);
                                       e.backward(ids, up);
                                     }));
  }
  {
    nn::Mlp3 mlp("mlp3", 4, 6, 5, 2);
    mlp.init(rng);
    nn::Param x("x", 5, 4);
    x.value = random_tensor(5, 4, rng);
    const nn::Tensor up = random_tensor(5, 2, rng);
    nn::ParamList ps;
    mlp.collect(ps);
    ps.push_back(&x);
    w.other_result("mlp3", nn::grad_check(
                               ps, [&] { return weighted_sum(mlp.forward(x.value), up); },
                               [&] {
                                 nn::zero_grad(ps);
                                 nn::Mlp3Cache c;
                                 mlp.forward(x.value, c);
                                 x.grad = mlp.backward(c, up);
                               },
                               kinks));
  }
  {
    nn::Mlp2 mlp("mlp2", 3, 7, 4);
    mlp.init(rng);
    nn::Param x("x", 4, 3);
    x.value = random_tensor(4, 3, rng);
    const nn::Tensor up = random_tensor(4, 4, rng);
    nn::ParamList ps;
    mlp.collect(ps);
    ps.push_back(&x);
    w.other_result("mlp2", nn::grad_check(
                               ps, [&] { return weighted_sum(mlp.forward(x.value), up); },
                               [&] {
                                 nn::zero_grad(ps);
                                 nn::Mlp2Cache c;
                                 mlp.forward(x.value, c);
                                 x.grad = mlp.backward(c, up);
                               },
                               kinks));
  }
  {
    nn::Mhsa att("mhsa", nn::MhsaConfig{8, 2});
    att.init(rng);
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 0, 0};
    nn::Param x("tokens", 8, 8);
    x.value = random_tensor(8, 8, rng);
    nn::Tensor up = random_tensor(8, 8, rng);
    for (std::size_t r = 6; r < 8; ++r) std::fill(up.row(r).begin(), up.row(r).end(), 0.0);
    nn::ParamList ps;
    att.collect(ps);
    ps.push_back(&x);
    w.other_result("mhsa", nn::grad_check(
                               ps, [&] { return weighted_sum(att.forward(x.value, 8, mask), up); },
                               [&] {
                                 nn::zero_grad(ps);
                                 nn::MhsaCache c;
                                 att.forward(x.value, 8, mask, c);
                                 x.grad = att.backward(c, up);
                               }));
  }

  // End-to-end LCU losses, every base kind, on a 2-example batch.
  datagen::GeneratorConfig g;
  g.n_users = 40;
  g.n_videos = 60;
  g.n_impressions = 1200;
  g.comments_per_video_min = 2;
  g.comments_per_video_max = 10;
  const auto data = datagen::generate_synthetic(g);
  const auto index = build_comment_index(data.dataset.comments);
  const auto splits = datagen::time_split(data.dataset.impressions);
  const auto context = features::fit_context(data.dataset, index, splits.train);
  const features::EmbeddingSources src{&data.video_embeddings, &data.comment_embeddings};
  const auto train = features::build_examples(data.dataset, index, splits.train, context, src);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.size() && rows.size() < 2; ++i) {
    if (train.targets.opened[i]) rows.push_back(i);
  }
  const auto batch = train.subset(rows);
  std::size_t e2e_checked = 0;
  for (auto kind : {models::ModelKind::VR, models::ModelKind::WLR, models::ModelKind::NDT, models::ModelKind::PCR,
                    models::ModelKind::D2Q}) {
    lcu::ModelConfig c;
    c.kind = kind;
    c.model_dim = 8;
    c.id_embedding_dim = 4;
    c.projection_hidden = 8;
    c.head_hidden = 8;
    c.aux_hidden = 8;
    c.n_buckets = 4;
    c.weights = {0.5, 0.5};
    lcu::LcuModel model(c, context.users.rows(), context.videos.rows(), train.video_llm.cols(),
                        train.comment_llm.cols());
    model.fit_transform(lcu::training_rows(train, kind));
    nn::Rng init(7);
    model.init(init);
    auto ps = model.params();
    // Central differences on a loss of magnitude L carry roundoff near L * 1e-11,
    // so the absolute floor of the relative error scales with L.
    nn::GradCheckOptions opt = kinks;
    opt.floor = 1e-6 * std::max(1.0, std::abs(model.loss(model.forward(batch), batch).total));
    const auto r = nn::grad_check(
        ps, [&] { return model.loss(model.forward(batch), batch).total; },
        [&] {
          nn::zero_grad(ps);
          model.accumulate_gradients(batch);
        },
        opt);
    e2e_checked += r.checked;
    w.other_result("lcu-" + models::to_string(kind), r);
  }
  const double secs = seconds_since(t0);
  const bool ok = w.linear < 1e-7 && w.other < 1e-4 && secs < 30.0;
  std::ostringstream d;
  d << "linear max " << fmt("%.2e", w.linear) << " (<1e-7), nonlinear+e2e max " << fmt("%.2e", w.other)
    << " (<1e-4), " << e2e_checked << " e2e coords, " << fmt("%.1fs", secs) << (w.where.empty() ? "" : " at ")
    << w.where;
  report("gradient-integrity", ok, d.str());
}

// --- loss oracles ----------------------------------------------------------------------

void check_losses() {
  bool ok = true;
  double worst = 0.0;
  double log_fact = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) {
    log_fact += std::log(static_cast<double>(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const double l = listmle_loss(std::vector<double>(n, -0.4), order, std::vector<std::uint8_t>(n, 1)).loss;
    worst = std::max(worst, std::abs(l - log_fact));
  }
  ok = ok && worst <= 1e-9;
  const double bce =
      bce_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, std::vector<std::uint8_t>{1}).loss;
  const double bce_err = std::abs(bce - std::log(2.0));
  ok = ok && bce_err <= 1e-12;
  const bool total_exact = total_loss(1.0, 2.0, 3.0, LossWeights{0.1, 0.01}) == 1.0 + 0.1 * 2.0 + 0.01 * 3.0 &&
                           total_loss(2.5, 7.0, 9.0, LossWeights{0.0, 0.0}) == 2.5;
  ok = ok && total_exact;
  report("loss-oracles", ok,
         "ListMLE ln(n!) max err " + fmt("%.1e", worst) + ", BCE ln2 err " + fmt("%.1e", bce_err) +
             ", total " + (total_exact ? "exact" : "inexact"));
}

// --- metric oracles --------------------------------------------------------------------

void check_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(100);
  double worst = 0.0;
  std::size_t compared = 0;
  auto cmp = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b));
    ++compared;
  };
  for (int f = 0; f < 100; ++f) {
    const auto fx = oracle::random_fixture(rng);
    if (oracle::xauc_pairs(fx.preds, fx.truths).count > 0) cmp(m::xauc(fx.preds, fx.truths), oracle::xauc(fx.preds, fx.truths));
    double user_pairs = 0.0;
    bool gauc_ok = false;
    for (const auto& u : fx.users) {
      user_pairs += oracle::xauc_pairs(u.preds, u.staytimes).count;
      const auto pos = std::count(u.relevance.begin(), u.relevance.end(), 1);
      gauc_ok = gauc_ok || (pos > 0 && pos < static_cast<long>(u.size()));
    }
    if (user_pairs > 0) cmp(m::xgauc(fx.users), oracle::xgauc(fx.users));
    if (gauc_ok) cmp(m::gauc(fx.users), oracle::gauc(fx.users));
    cmp(m::mrr(fx.users), oracle::mrr(fx.users));
    for (std::size_t k : {1, 3, 5}) {
      cmp(m::ndcg_at_k(fx.users, k), oracle::ndcg(fx.users, k));
      cmp(m::staytime_at_n(fx.users, k), oracle::staytime_at(fx.users, k));
    }
    cmp(m::rmse(fx.preds, fx.truths), oracle::rmse(fx.preds, fx.truths));
    cmp(m::mae(fx.preds, fx.truths), oracle::mae(fx.preds, fx.truths));
  }
  const double secs = seconds_since(t0);
  report("metric-oracles", worst <= 1e-12 && secs < 60.0,
         std::to_string(compared) + " comparisons over 100 fixtures, max abs diff " + fmt("%.1e", worst) + ", " +
             fmt("%.2fs", secs));
}

// --- D2Q / PCR round trips ---------------------------------------------------------------

void check_round_trips() {
  datagen::GeneratorConfig g;
  g.n_impressions = 30000;
  g.seed = 11;
  const auto data = datagen::generate_synthetic(g);
  std::unordered_map<Id, double> duration;
  for (const auto& v : data.dataset.videos) duration[v.video_id] = v.duration_s;
  std::vector<double> d, st;
  for (const auto& imp : data.dataset.impressions) {
    if (!imp.opened) continue;
    d.push_back(duration.at(imp.video_id));
    st.push_back(imp.staytime_s);
  }
  const auto buckets = models::DurationBuckets::fit(d, st, 30);
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const std::size_t b = buckets.bucket_of(d[i]);
    const double err = std::abs(buckets.inverse(b, buckets.transform(b, st[i])) - st[i]);
    const double gap = buckets.max_adjacent_gap(b);
    if (err > gap) ++violations;
    if (gap > 0) worst_ratio = std::max(worst_ratio, err / gap);
  }
  models::StaytimeHead pcr(models::ModelKind::PCR, 1, 2);
  double pcr_err = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    models::HeadForward out;
    out.a = {pcr.transformed_target(st[i], d[i])};
    pcr_err = std::max(pcr_err, std::abs(pcr.predict_staytime(out, std::vector<double>{d[i]})[0] - st[i]));
  }
  report("d2q-pcr-round-trip", violations == 0 && buckets.size() == 30 && pcr_err <= 1e-12,
         std::to_string(st.size()) + " opened rows in " + std::to_string(buckets.size()) +
             " buckets, D2Q err/gap max " + fmt("%.3f", worst_ratio) + " (" + std::to_string(violations) +
             " over), PCR max err " + fmt("%.1e", pcr_err));
}

// --- experiments on the 50k synthetic dataset ------------------------------------------------

const fs::path kWork = "acceptance-work";

harness::ExperimentConfig experiment(const std::string& kind, bool lcu, double lambda, const std::string& run) {
  std::ostringstream t;
  t << "[dataset]\ndir = \"" << (kWork / "data").string() << "\"\n"
    << "[model]\nkind = \"" << kind << "\"\nlcu = " << (lcu ? "true" : "false") << "\n"
    << "[loss]\nlambda1 = " << lambda << "\nlambda2 = " << lambda << "\n"
    << "[train]\nseeds = [1, 2, 3]\n"
    << "[output]\ndir = \"" << (kWork / "runs").string() << "\"\nrun_name = \"" << run << "\"\n";
  return harness::parse_config(t.str());
}

double mean_of(const harness::ExperimentReport& r, const std::string& metric) {
  return r.aggregate.at(metric).mean;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_timestamp(std::string text) {
  const auto at = text.find("\"generated_at\"");
  if (at == std::string::npos) return text;
  return text.erase(at, text.find('\n', at) - at);
}

void check_experiments() {
  fs::remove_all(kWork);
  const auto t0 = Clock::now();
  const auto vr_cfg = experiment("vr", false, 0.0, "vr");
  harness::cmd_generate(vr_cfg);
  const auto vr = harness::cmd_train(vr_cfg);
  const auto lcu_vr = harness::cmd_train(experiment("vr", true, 1e-2, "lcu-vr"));
  const double vr_secs = seconds_since(t0);
  const double d_xauc = mean_of(lcu_vr, "xauc") - mean_of(vr, "xauc");

  const auto t1 = Clock::now();
  const auto d2q = harness::cmd_train(experiment("d2q", false, 0.0, "d2q"));
  const auto lcu_d2q = harness::cmd_train(experiment("d2q", true, 1e-2, "lcu-d2q"));
  const double d2q_secs = seconds_since(t1);
  const double d_ndcg = mean_of(lcu_d2q, "ndcg@5") - mean_of(d2q, "ndcg@5");
  const double total_secs = vr_secs + d2q_secs;
  std::ostringstream dd;
  dd << "XAUC VR " << fmt("%.4f", mean_of(vr, "xauc")) << " -> LCU " << fmt("%.4f", mean_of(lcu_vr, "xauc"))
     << " (" << fmt("%+.4f", d_xauc) << "), NDCG@5 D2Q " << fmt("%.4f", mean_of(d2q, "ndcg@5")) << " -> LCU "
     << fmt("%.4f", mean_of(lcu_d2q, "ndcg@5")) << " (" << fmt("%+.4f", d_ndcg) << "), 3 seeds, "
     << fmt("%.0fs", total_secs);
  report("directional-lcu-gain", d_xauc >= 0.005 && d_ndcg >= 0.005 && total_secs < 600.0, dd.str());

  const auto no_aux = harness::cmd_train(experiment("d2q", true, 0.0, "lcu-d2q-no-aux"));
  const auto full = harness::cmd_train(experiment("d2q", true, 0.1, "lcu-d2q-full"));
  const double a0 = mean_of(no_aux, "xauc"), a1 = mean_of(full, "xauc");
  report("ablation-aux-losses", a0 <= a1,
         "LCU-D2Q mean XAUC lambda=0 " + fmt("%.5f", a0) + " vs lambda=0.1 " + fmt("%.5f", a1) + " (" +
             fmt("%+.5f", a1 - a0) + ")");

  // Curves on the same dataset.
  double rho_likes = 0.0, rho_inter = 0.0;
  {
    const Dataset dataset = datagen::load_dataset((kWork / "data").string());
    for (const std::string feature : {"avg_top5_likes", "interactions"}) {
      auto cfg = vr_cfg;
      cfg.curves.feature = feature;
      cfg.curves.bins = 20;
      cfg.out_dir = (kWork / "curves").string();
      harness::cmd_curves(cfg);
      const auto [x, y] = harness::curve_data(dataset, feature);
      const auto bins = harness::binned_curve(x, y, 20);
      std::vector<double> idx, means;
      for (std::size_t b = 0; b < 10; ++b) {
        idx.push_back(static_cast<double>(b));
        means.push_back(bins[b].mean);
      }
      (feature == "interactions" ? rho_inter : rho_likes) = m::spearman(idx, means);
    }
  }
  report("curve-shapes", rho_likes <= -0.8 && rho_inter >= 0.8,
         "Spearman over first 10 of 20 bins: avg_top5_likes " + fmt("%.3f", rho_likes) + " (<=-0.8), interactions " +
             fmt("%.3f", rho_inter) + " (>=0.8)");

  // Re-run two experiments and compare report bytes without the timestamp.
  const fs::path vr_report = kWork / "runs" / "vr" / "report.json";
  const fs::path lcu_report = kWork / "runs" / "lcu-vr" / "report.json";
  const std::string vr_before = slurp(vr_report), lcu_before = slurp(lcu_report);
  harness::cmd_train(vr_cfg);
  harness::cmd_train(experiment("vr", true, 1e-2, "lcu-vr"));
  const bool same = without_timestamp(slurp(vr_report)) == without_timestamp(vr_before) &&
                    without_timestamp(slurp(lcu_report)) == without_timestamp(lcu_before);
  report("determinism", same && !vr_before.empty(),
         std::string(same ? "byte-identical" : "reports differ") + " on re-run of VR and LCU-VR (3 seeds each)");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  auto guarded = [](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(name, false, std::string("exception: ") + e.what());
    }
  };
  guarded("gradient-integrity", check_gradients);
  guarded("loss-oracles", check_losses);
  guarded("metric-oracles", check_metrics);
  guarded("d2q-pcr-round-trip", check_round_trips);
  guarded("experiments", check_experiments);
  std::printf("%s  %d failing, %.0fs total\n", failures == 0 ? "ALL PASS" : "FAILURES", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
