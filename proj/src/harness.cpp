#include "staytime/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "csv.hpp"
#include "staytime/error.hpp"
#include "staytime/metrics.hpp"
#include "staytime/nn/checkpoint.hpp"

namespace fs = std::filesystem;

namespace staytime::harness {

// --- config --------------------------------------------------------------------------

std::string DatasetConfig::video_embedding_path() const {
  return video_embeddings.empty() ? (fs::path(dir) / datagen::kVideoEmbeddingFile).string() : video_embeddings;
}

std::string DatasetConfig::comment_embedding_path() const {
  return comment_embeddings.empty() ? (fs::path(dir) / datagen::kCommentEmbeddingFile).string() : comment_embeddings;
}

std::string ExperimentConfig::effective_run_name() const {
  if (!run_name.empty()) return run_name;
  return (model.lcu ? "lcu-" : "") + models::to_string(model.kind);
}

std::string ExperimentConfig::run_dir() const { return (fs::path(out_dir) / effective_run_name()).string(); }

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("train.seeds contains a duplicate");
  }
  if (dataset.source != "synthetic" && dataset.source != "external") {
    throw ConfigError("dataset.source must be 'synthetic' or 'external', got '" + dataset.source + "'");
  }
  if (dataset.source == "external" && dataset.external_dir.empty()) {
    throw ConfigError("dataset.external_dir is required when dataset.source = 'external'");
  }
  if (dataset.source == "external" && model.lcu &&
      (dataset.video_embeddings.empty() || dataset.comment_embeddings.empty())) {
    throw ConfigError("LCU on external data needs dataset.video_embeddings and dataset.comment_embeddings");
  }
  if (dataset.sampled_comments == 0) throw ConfigError("dataset.sampled_comments must be >= 1");
  if (curves.bins == 0) throw ConfigError("curves.bins must be >= 1");
  dataset.generator.validate();
  model.validate();
  train.validate();
}

Json ExperimentConfig::to_json() const {
  const auto& g = dataset.generator;
  const auto& r = g.response;
  Json j;
  j["dataset"] = {
      {"source", dataset.source},
      {"dir", dataset.dir},
      {"external_dir", dataset.external_dir},
      {"column_map", dataset.column_map},
      {"video_embeddings", dataset.video_embedding_path()},
      {"comment_embeddings", dataset.comment_embedding_path()},
      {"missing_embeddings", features::to_string(dataset.missing_embeddings)},
      {"sampled_comments", dataset.sampled_comments},
  };
  j["dataset"]["generator"] = {
      {"n_users", g.n_users},
      {"n_videos", g.n_videos},
      {"n_impressions", g.n_impressions},
      {"comments_per_video_min", g.comments_per_video_min},
      {"comments_per_video_max", g.comments_per_video_max},
      {"like_exponent", g.like_exponent},
      {"open_rate", g.open_rate},
      {"noise_sigma", g.noise_sigma},
      {"latent_dim", g.latent_dim},
      {"embedding_noise", g.embedding_noise},
      {"embedding_extra_dims", g.embedding_extra_dims},
      {"seed", g.seed},
  };
  j["dataset"]["generator"]["response"] = {
      {"base_staytime_s", r.base_staytime_s},   {"like_knee", r.like_knee},
      {"like_decay", r.like_decay},             {"interaction_gain", r.interaction_gain},
      {"interaction_knee", r.interaction_knee}, {"watch_slope", r.watch_slope},
      {"watch_ref_s", r.watch_ref_s},           {"completion_threshold_s", r.completion_threshold_s},
      {"completion_jump", r.completion_jump},   {"affinity_gain", r.affinity_gain},
  };
  j["model"] = {
      {"kind", models::to_string(model.kind)},
      {"lcu", model.lcu},
      {"model_dim", model.model_dim},
      {"n_heads", model.n_heads},
      {"id_embedding_dim", model.id_embedding_dim},
      {"projection_hidden", model.projection_hidden},
      {"head_hidden", model.head_hidden},
      {"aux_hidden", model.aux_hidden},
      {"n_buckets", model.n_buckets},
      {"attention_residual", model.attention_residual},
  };
  j["loss"] = {{"lambda1", model.weights.lambda1},
               {"lambda2", model.weights.lambda2},
               {"detach_aux", model.detach_aux}};
  j["train"] = {{"max_epochs", train.max_epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"patience", train.patience},
                {"seeds", seeds}};
  j["output"] = {{"dir", out_dir}, {"run_name", effective_run_name()}};
  j["evaluation"] = {{"low_exposure_max", exposure.low_max}};
  return j;
}

namespace {

// Typed access to one TOML table that remembers which keys were read.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!node->is_boolean()) throw ConfigError(where + " must be a boolean");
      out = node->as_boolean()->get();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!node->is_string()) throw ConfigError(where + " must be a string");
      out = node->as_string()->get();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (node->is_integer()) {
        out = static_cast<T>(node->as_integer()->get());
      } else if (node->is_floating_point()) {
        out = static_cast<T>(node->as_floating_point()->get());
      } else {
        throw ConfigError(where + " must be a number");
      }
    } else {
      if (!node->is_integer()) throw ConfigError(where + " must be an integer");
      const std::int64_t v = node->as_integer()->get();
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) throw ConfigError(where + " must be >= 0");
      }
      out = static_cast<T>(v);
    }
  }

  const toml::table* child(const std::string& key) {
    seen_.insert(key);
    if (table_ == nullptr) return nullptr;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return nullptr;
    if (!node->is_table()) throw ConfigError(path_ + "." + key + " must be a table");
    return node->as_table();
  }

  const toml::array* array(const std::string& key) {
    seen_.insert(key);
    if (table_ == nullptr) return nullptr;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return nullptr;
    if (!node->is_array()) throw ConfigError(path_ + "." + key + " must be an array");
    return node->as_array();
  }

  void reject_unknown() const {
    if (table_ == nullptr) return;
    for (const auto& [key, node] : *table_) {
      if (!seen_.contains(std::string(key.str()))) {
        throw ConfigError("unknown config key '" + (path_.empty() ? "" : path_ + ".") + std::string(key.str()) + "'");
      }
    }
  }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line << ", column "
        << e.source().begin.column;
    throw ConfigError(msg.str());
  }
  ExperimentConfig c;
  Section top(&root, "");

  Section ds(top.child("dataset"), "dataset");
  ds.read("source", c.dataset.source);
  ds.read("dir", c.dataset.dir);
  ds.read("external_dir", c.dataset.external_dir);
  ds.read("column_map", c.dataset.column_map);
  ds.read("video_embeddings", c.dataset.video_embeddings);
  ds.read("comment_embeddings", c.dataset.comment_embeddings);
  ds.read("sampled_comments", c.dataset.sampled_comments);
  std::string policy = features::to_string(c.dataset.missing_embeddings);
  ds.read("missing_embeddings", policy);
  c.dataset.missing_embeddings = features::parse_missing_policy(policy);
  {
    auto& g = c.dataset.generator;
    Section gen(ds.child("generator"), "dataset.generator");
    gen.read("n_users", g.n_users);
    gen.read("n_videos", g.n_videos);
    gen.read("n_impressions", g.n_impressions);
    gen.read("comments_per_video_min", g.comments_per_video_min);
    gen.read("comments_per_video_max", g.comments_per_video_max);
    gen.read("like_exponent", g.like_exponent);
    gen.read("open_rate", g.open_rate);
    gen.read("noise_sigma", g.noise_sigma);
    gen.read("latent_dim", g.latent_dim);
    gen.read("embedding_noise", g.embedding_noise);
    gen.read("embedding_extra_dims", g.embedding_extra_dims);
    gen.read("seed", g.seed);
    auto& r = g.response;
    Section resp(gen.child("response"), "dataset.generator.response");
    resp.read("base_staytime_s", r.base_staytime_s);
    resp.read("like_knee", r.like_knee);
    resp.read("like_decay", r.like_decay);
    resp.read("interaction_gain", r.interaction_gain);
    resp.read("interaction_knee", r.interaction_knee);
    resp.read("watch_slope", r.watch_slope);
    resp.read("watch_ref_s", r.watch_ref_s);
    resp.read("completion_threshold_s", r.completion_threshold_s);
    resp.read("completion_jump", r.completion_jump);
    resp.read("affinity_gain", r.affinity_gain);
    resp.reject_unknown();
    gen.reject_unknown();
  }
  ds.reject_unknown();

  Section model(top.child("model"), "model");
  std::string kind = models::to_string(c.model.kind);
  model.read("kind", kind);
  c.model.kind = models::parse_model_kind(kind);
  model.read("lcu", c.model.lcu);
  model.read("model_dim", c.model.model_dim);
  model.read("n_heads", c.model.n_heads);
  model.read("id_embedding_dim", c.model.id_embedding_dim);
  model.read("projection_hidden", c.model.projection_hidden);
  model.read("head_hidden", c.model.head_hidden);
  model.read("aux_hidden", c.model.aux_hidden);
  model.read("n_buckets", c.model.n_buckets);
  model.read("attention_residual", c.model.attention_residual);
  model.reject_unknown();

  Section loss(top.child("loss"), "loss");
  loss.read("lambda1", c.model.weights.lambda1);
  loss.read("lambda2", c.model.weights.lambda2);
  loss.read("detach_aux", c.model.detach_aux);
  loss.reject_unknown();

  Section train(top.child("train"), "train");
  train.read("max_epochs", c.train.max_epochs);
  train.read("batch_size", c.train.batch_size);
  train.read("learning_rate", c.train.learning_rate);
  train.read("patience", c.train.patience);
  if (const toml::array* seeds = train.array("seeds")) {
    c.seeds.clear();
    for (const auto& node : *seeds) {
      if (!node.is_integer() || node.as_integer()->get() < 0) {
        throw ConfigError("train.seeds must hold non-negative integers");
      }
      c.seeds.push_back(static_cast<std::uint64_t>(node.as_integer()->get()));
    }
  }
  train.reject_unknown();

  Section out(top.child("output"), "output");
  out.read("dir", c.out_dir);
  out.read("run_name", c.run_name);
  out.reject_unknown();

  Section eval(top.child("evaluation"), "evaluation");
  eval.read("low_exposure_max", c.exposure.low_max);
  eval.reject_unknown();

  Section curves(top.child("curves"), "curves");
  curves.read("feature", c.curves.feature);
  curves.read("bins", c.curves.bins);
  curves.reject_unknown();

  Section cmp(top.child("compare"), "compare");
  if (const toml::array* reports = cmp.array("reports")) {
    for (const auto& node : *reports) {
      if (!node.is_string()) throw ConfigError("compare.reports must hold strings");
      c.compare_reports.push_back(node.as_string()->get());
    }
  }
  cmp.reject_unknown();
  top.reject_unknown();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

// --- running -----------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t init_seed(std::uint64_t seed) { return splitmix64(seed * 2 + 1); }
std::uint64_t shuffle_seed(std::uint64_t seed) { return splitmix64(seed * 2 + 2); }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset load_configured_dataset(const ExperimentConfig& config, std::size_t& rejected) {
  rejected = 0;
  const auto& d = config.dataset;
  if (d.source == "synthetic") {
    if (!fs::exists(fs::path(d.dir) / kImpressionsFile)) {
      throw IoError("no dataset in '" + d.dir + "'; run `staytime-lab generate` first");
    }
    return datagen::load_dataset(d.dir);
  }
  datagen::ColumnMap map;
  if (!d.column_map.empty()) map = datagen::parse_column_map(read_text(d.column_map));
  datagen::LoadResult r =
      datagen::load_external(datagen::ExternalPaths::in_directory(d.external_dir), map, config.out_dir);
  rejected = r.total_rejected();
  return std::move(r.dataset);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData p;
  p.dataset = load_configured_dataset(config, p.rejected_rows);
  p.index = build_comment_index(p.dataset.comments, p.dataset.videos);
  p.splits = datagen::time_split(p.dataset.impressions);
  p.context = features::fit_context(p.dataset, p.index, p.splits.train, config.dataset.sampled_comments);

  EmbeddingTable ev, ec;
  features::EmbeddingSources sources;
  sources.policy = config.dataset.missing_embeddings;
  if (config.model.lcu) {
    ev = read_embedding_table(config.dataset.video_embedding_path());
    ec = read_embedding_table(config.dataset.comment_embedding_path());
    sources.videos = &ev;
    sources.comments = &ec;
    p.ev_dim = ev.dim();
    p.ec_dim = ec.dim();
  }
  p.train = features::build_examples(p.dataset, p.index, p.splits.train, p.context, sources, &p.missing);
  p.validation = features::build_examples(p.dataset, p.index, p.splits.validation, p.context, sources, &p.missing);
  p.test = features::build_examples(p.dataset, p.index, p.splits.test, p.context, sources, &p.missing);
  return p;
}

lcu::LcuModel make_model(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  lcu::LcuModel model(config.model, data.context.users.rows(), data.context.videos.rows(), data.ev_dim, data.ec_dim);
  model.fit_transform(data.train);
  nn::Rng rng(init_seed(seed));
  model.init(rng);
  return model;
}

SeedResult run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                    std::optional<lcu::LcuModel>* model_out) {
  lcu::LcuModel model = make_model(config, data, seed);
  SeedResult r;
  r.seed = seed;
  r.log = lcu::train_model(model, lcu::training_rows(data.train, config.model.kind), data.validation, config.train,
                           shuffle_seed(seed));
  r.evaluation = lcu::evaluate_model(model, data.test, data.context.video_train_count, config.exposure);
  if (model_out) model_out->emplace(std::move(model));
  return r;
}

// --- reports ---------------------------------------------------------------------------------

MetricSummary summarise(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

void ExperimentReport::summarise() {
  aggregate.clear();
  if (per_seed.empty()) return;
  for (const auto& [name, value] : per_seed.front()) {
    std::vector<double> values;
    for (const auto& m : per_seed) {
      const auto it = m.find(name);
      if (it == m.end()) break;
      values.push_back(it->second);
    }
    if (values.size() == per_seed.size()) aggregate[name] = harness::summarise(values);
  }
}

Json ExperimentReport::to_json() const {
  Json j;
  j["schema_version"] = kReportSchema;
  j["version"] = version;
  j["generated_at"] = generated_at;
  j["run"] = run;
  j["config"] = config;
  j["dataset"] = dataset;
  j["seeds"] = seeds;
  Json per = Json::array();
  for (std::size_t i = 0; i < per_seed.size(); ++i) {
    Json s;
    s["seed"] = seeds.at(i);
    Json m = Json::object();
    for (const auto& [k, v] : per_seed[i]) m[k] = v;
    s["metrics"] = m;
    if (i < per_seed_details.size()) {
      for (const auto& [k, v] : per_seed_details[i].items()) s[k] = v;
    }
    per.push_back(s);
  }
  j["per_seed"] = per;
  Json agg = Json::object();
  for (const auto& [k, s] : aggregate) agg[k] = {{"mean", s.mean}, {"std", s.std}};
  j["aggregate"] = agg;
  return j;
}

ExperimentReport ExperimentReport::from_json(const Json& j) {
  ExperimentReport r;
  try {
    if (j.at("schema_version").get<std::string>() != kReportSchema) {
      throw ValidationError("unsupported report schema '" + j.at("schema_version").get<std::string>() + "'");
    }
    r.version = j.at("version").get<std::string>();
    r.generated_at = j.at("generated_at").get<std::string>();
    r.run = j.at("run").get<std::string>();
    r.config = j.at("config");
    r.dataset = j.at("dataset");
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& s : j.at("per_seed")) {
      std::map<std::string, double> m;
      for (const auto& [k, v] : s.at("metrics").items()) m[k] = v.get<double>();
      r.per_seed.push_back(std::move(m));
      Json details = Json::object();
      for (const auto& [k, v] : s.items()) {
        if (k != "seed" && k != "metrics") details[k] = v;
      }
      r.per_seed_details.push_back(details);
    }
    for (const auto& [k, v] : j.at("aggregate").items()) {
      r.aggregate[k] = MetricSummary{v.at("mean").get<double>(), v.at("std").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  if (r.seeds.size() != r.per_seed.size()) throw ValidationError("report seeds and per_seed entries differ in count");

  ExperimentReport check = r;
  check.summarise();
  for (const auto& [k, s] : r.aggregate) {
    const auto it = check.aggregate.find(k);
    if (it == check.aggregate.end()) throw ValidationError("aggregate metric '" + k + "' has no per-seed values");
    const double tol_mean = 1e-12 * std::max(1.0, std::abs(it->second.mean));
    const double tol_std = 1e-12 * std::max(1.0, std::abs(it->second.std));
    if (std::abs(s.mean - it->second.mean) > tol_mean || std::abs(s.std - it->second.std) > tol_std) {
      throw ValidationError("aggregate of '" + k + "' does not match its per-seed values");
    }
  }
  if (check.aggregate.size() != r.aggregate.size()) throw ValidationError("report aggregate is missing metrics");
  return r;
}

void write_report(const ExperimentReport& report, const std::string& path) {
  write_text(path, report.to_json().dump(2) + "\n");
}

ExperimentReport read_report(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("report '" + path + "' is not valid JSON: " + e.what(), e.byte);
  }
  return ExperimentReport::from_json(j);
}

// --- commands --------------------------------------------------------------------------------

namespace {

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json dataset_json(const ExperimentConfig& config, const PreparedData& data) {
  Json d;
  d["source"] = config.dataset.source;
  const fs::path manifest = fs::path(config.dataset.dir) / "manifest.json";
  d["manifest_hash"] = config.dataset.source == "synthetic" && fs::exists(manifest) ? file_hash(manifest.string()) : "";
  auto opened = [](const features::ExampleSet& e) { return e.opened_rows().size(); };
  d["rows"] = {{"train", data.train.size()}, {"validation", data.validation.size()}, {"test", data.test.size()}};
  d["opened_rows"] = {{"train", opened(data.train)},
                      {"validation", opened(data.validation)},
                      {"test", opened(data.test)}};
  d["rejected_rows"] = data.rejected_rows;
  d["missing_embeddings"] = {{"videos", data.missing.videos}, {"comments", data.missing.comments}};
  return d;
}

Json seed_details(const SeedResult& r) {
  Json d;
  d["opened_test_rows"] = r.evaluation.opened_rows;
  d["ranked_users"] = r.evaluation.ranked_users;
  d["excluded_users"] = r.evaluation.excluded_users;
  if (!r.log.epochs.empty()) {
    Json epochs = Json::array();
    for (const auto& e : r.log.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"loss", e.mean_loss.total},
                        {"staytime_loss", e.mean_loss.staytime},
                        {"r1_loss", e.mean_loss.r1},
                        {"r2_loss", e.mean_loss.r2},
                        {"validation_xauc", e.validation_xauc}});
    }
    d["training"] = {{"best_epoch", r.log.best_epoch},
                     {"best_validation_xauc", r.log.best_validation_xauc},
                     {"stopped_early", r.log.stopped_early},
                     {"epochs", epochs}};
  }
  return d;
}

std::string checkpoint_path(const ExperimentConfig& config, std::uint64_t seed) {
  return (fs::path(config.run_dir()) / ("seed-" + std::to_string(seed) + ".lcuw")).string();
}

std::vector<nn::Section> checkpoint_sections(lcu::LcuModel& model, const features::FeatureContext& context) {
  std::vector<nn::Section> s = model.state_sections();
  context.append_sections(s);
  return s;
}

ExperimentReport new_report(const ExperimentConfig& config, const PreparedData& data) {
  ExperimentReport report;
  report.run = config.effective_run_name();
  report.generated_at = utc_timestamp();
  report.config = config.to_json();
  report.dataset = dataset_json(config, data);
  return report;
}

}  // namespace

std::string cmd_generate(const ExperimentConfig& config) {
  if (config.dataset.source != "synthetic") throw ConfigError("generate needs dataset.source = 'synthetic'");
  const datagen::SyntheticData data = datagen::generate_synthetic(config.dataset.generator);
  datagen::save_synthetic(data, config.dataset.dir);
  return config.dataset.dir;
}

ExperimentReport cmd_train(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = prepare_data(config);
  ExperimentReport report = new_report(config, data);
  fs::create_directories(config.run_dir());
  for (std::uint64_t seed : config.seeds) {
    lcu::LcuModel model = make_model(config, data, seed);
    SeedResult r;
    r.seed = seed;
    try {
      r.log = lcu::train_model(model, lcu::training_rows(data.train, config.model.kind), data.validation,
                               config.train, shuffle_seed(seed));
    } catch (const DivergenceError&) {
      // train_model has rolled the parameters back to the last finished epoch.
      const std::string path = (fs::path(config.run_dir()) / ("seed-" + std::to_string(seed) + ".last-good.lcuw")).string();
      nn::write_checkpoint(path, checkpoint_sections(model, data.context));
      throw;
    }
    r.evaluation = lcu::evaluate_model(model, data.test, data.context.video_train_count, config.exposure);
    nn::write_checkpoint(checkpoint_path(config, seed), checkpoint_sections(model, data.context));
    report.seeds.push_back(seed);
    report.per_seed.push_back(r.evaluation.metrics);
    report.per_seed_details.push_back(seed_details(r));
  }
  report.summarise();
  write_report(report, (fs::path(config.run_dir()) / "report.json").string());
  return report;
}

ExperimentReport cmd_evaluate(const ExperimentConfig& config) {
  config.validate();
  for (std::uint64_t seed : config.seeds) {
    if (!fs::exists(checkpoint_path(config, seed))) {
      throw IoError("missing checkpoint '" + checkpoint_path(config, seed) + "'; run `staytime-lab train` first");
    }
  }
  const PreparedData data = prepare_data(config);
  ExperimentReport report = new_report(config, data);
  for (std::uint64_t seed : config.seeds) {
    const std::vector<nn::Section> sections = nn::read_checkpoint(checkpoint_path(config, seed));
    const features::FeatureContext ctx = features::FeatureContext::from_sections(sections);
    lcu::LcuModel model(config.model, ctx.users.rows(), ctx.videos.rows(), data.ev_dim, data.ec_dim);
    model.load_state(sections);

    EmbeddingTable ev, ec;
    features::EmbeddingSources sources;
    sources.policy = config.dataset.missing_embeddings;
    if (config.model.lcu) {
      ev = read_embedding_table(config.dataset.video_embedding_path());
      ec = read_embedding_table(config.dataset.comment_embedding_path());
      sources.videos = &ev;
      sources.comments = &ec;
    }
    const features::ExampleSet test =
        features::build_examples(data.dataset, data.index, data.splits.test, ctx, sources);
    SeedResult r;
    r.seed = seed;
    r.evaluation = lcu::evaluate_model(model, test, data.context.video_train_count, config.exposure);
    report.seeds.push_back(seed);
    report.per_seed.push_back(r.evaluation.metrics);
    report.per_seed_details.push_back(seed_details(r));
  }
  report.summarise();
  fs::create_directories(config.run_dir());
  write_report(report, (fs::path(config.run_dir()) / "evaluation.json").string());
  return report;
}

// --- compare ------------------------------------------------------------------------------------

bool lower_is_better(const std::string& metric) { return metric == "rmse" || metric == "mae"; }

Comparison compare_reports(const std::vector<ExperimentReport>& reports) {
  if (reports.size() < 2) throw ValidationError("compare needs at least two reports");
  Comparison c;
  std::map<std::string, int> seen;
  for (const auto& r : reports) {
    const int n = seen[r.run]++;
    c.columns.push_back(n == 0 ? r.run : r.run + "#" + std::to_string(n + 1));
  }
  for (const auto& [metric, base] : reports.front().aggregate) {
    bool shared = true;
    for (const auto& r : reports) shared = shared && r.aggregate.contains(metric);
    if (!shared) continue;
    ComparisonRow row;
    row.metric = metric;
    for (const auto& r : reports) {
      const double mean = r.aggregate.at(metric).mean;
      row.means.push_back(mean);
      row.delta_abs.push_back(mean - base.mean);
      row.delta_rel.push_back(base.mean == 0.0 ? std::nan("") : (mean - base.mean) / std::abs(base.mean));
      std::size_t wins = 0, matched = 0;
      for (std::size_t i = 0; i < r.seeds.size(); ++i) {
        const auto& base_seeds = reports.front().seeds;
        const auto it = std::find(base_seeds.begin(), base_seeds.end(), r.seeds[i]);
        if (it == base_seeds.end()) continue;
        const auto& bm = reports.front().per_seed[static_cast<std::size_t>(it - base_seeds.begin())];
        const auto a = r.per_seed[i].find(metric);
        const auto b = bm.find(metric);
        if (a == r.per_seed[i].end() || b == bm.end()) continue;
        ++matched;
        const bool better = lower_is_better(metric) ? a->second < b->second : a->second > b->second;
        wins += better ? 1 : 0;
      }
      row.wins.push_back(std::to_string(wins) + "/" + std::to_string(matched));
    }
    c.rows.push_back(std::move(row));
  }
  if (c.rows.empty()) throw ValidationError("reports share no metric");
  return c;
}

namespace {

std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string Comparison::to_text() const {
  std::size_t mw = 6;
  for (const auto& r : rows) mw = std::max(mw, r.metric.size());
  std::size_t cw = 12;
  for (const auto& c : columns) cw = std::max(cw, c.size() + 2);
  std::ostringstream out;
  out << pad("metric", mw + 2);
  for (const auto& c : columns) out << pad(c, cw);
  for (std::size_t i = 1; i < columns.size(); ++i) out << pad("d_abs", 12) << pad("d_rel%", 10) << pad("wins", 6);
  out << "\n";
  for (const auto& r : rows) {
    out << pad(r.metric, mw + 2);
    for (double m : r.means) out << pad(fixed(m), cw);
    for (std::size_t i = 1; i < columns.size(); ++i) {
      out << pad((r.delta_abs[i] >= 0 ? "+" : "") + fixed(r.delta_abs[i]), 12)
          << pad((r.delta_rel[i] >= 0 ? "+" : "") + fixed(100.0 * r.delta_rel[i], 2), 10) << pad(r.wins[i], 6);
    }
    out << "\n";
  }
  return out.str();
}

std::string Comparison::to_csv() const {
  std::ostringstream out;
  std::vector<std::string> header{"metric"};
  for (const auto& c : columns) header.push_back(c);
  for (std::size_t i = 1; i < columns.size(); ++i) {
    header.push_back(columns[i] + "_delta_abs");
    header.push_back(columns[i] + "_delta_rel");
    header.push_back(columns[i] + "_wins");
  }
  detail::write_csv_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{r.metric};
    for (double m : r.means) cells.push_back(detail::format_double(m));
    for (std::size_t i = 1; i < columns.size(); ++i) {
      cells.push_back(detail::format_double(r.delta_abs[i]));
      cells.push_back(std::isnan(r.delta_rel[i]) ? "nan" : detail::format_double(r.delta_rel[i]));
      cells.push_back(r.wins[i]);
    }
    detail::write_csv_row(out, cells);
  }
  return out.str();
}

// --- curves --------------------------------------------------------------------------------------

std::vector<CurveBin> binned_curve(const std::vector<double>& x, const std::vector<double>& y, std::size_t bins) {
  if (x.size() != y.size()) throw ValidationError("curve: x and y differ in length");
  if (bins == 0) throw ConfigError("curve: bins must be >= 1");
  if (x.size() < bins) {
    throw ValidationError("curve: " + std::to_string(x.size()) + " rows cannot fill " + std::to_string(bins) + " bins");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<CurveBin> out;
  const std::size_t n = x.size();
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t begin = b * n / bins, end = (b + 1) * n / bins;
    CurveBin bin;
    bin.count = end - begin;
    bin.lo = x[order[begin]];
    bin.hi = x[order[end - 1]];
    for (std::size_t i = begin; i < end; ++i) bin.mean += y[order[i]];
    bin.mean /= static_cast<double>(bin.count);
    for (std::size_t i = begin; i < end; ++i) bin.variance += (y[order[i]] - bin.mean) * (y[order[i]] - bin.mean);
    bin.variance /= static_cast<double>(bin.count);
    out.push_back(bin);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> curve_data(const Dataset& dataset, const std::string& feature) {
  static const std::vector<std::string> known{"avg_top5_likes", "interactions", "duration", "watchtime"};
  if (std::find(known.begin(), known.end(), feature) == known.end()) {
    throw ConfigError("unknown curve feature '" + feature +
                      "' (expected avg_top5_likes|interactions|duration|watchtime)");
  }
  const CommentIndex index = build_comment_index(dataset.comments, dataset.videos);
  std::unordered_map<Id, const VideoRecord*> videos;
  std::unordered_map<Id, double> top5;
  for (const auto& v : dataset.videos) {
    videos.emplace(v.video_id, &v);
    top5.emplace(v.video_id, datagen::avg_top5_likes(v, index));
  }
  std::vector<double> x, y;
  for (const auto& imp : dataset.impressions) {
    if (!imp.opened) continue;
    double v = 0.0;
    if (feature == "avg_top5_likes") v = top5.at(imp.video_id);
    if (feature == "interactions") v = static_cast<double>(imp.interacted_comment_ids.size());
    if (feature == "duration") v = videos.at(imp.video_id)->duration_s;
    if (feature == "watchtime") v = imp.watchtime_s;
    x.push_back(v);
    y.push_back(imp.staytime_s);
  }
  return {x, y};
}

std::string curves_csv(const std::vector<CurveBin>& bins) {
  std::ostringstream out;
  const std::vector<std::string> header{"bin_lo", "bin_hi", "mean", "variance", "count"};
  detail::write_csv_row(out, header);
  for (const auto& b : bins) {
    const std::vector<std::string> row{detail::format_double(b.lo), detail::format_double(b.hi),
                                       detail::format_double(b.mean), detail::format_double(b.variance),
                                       std::to_string(b.count)};
    detail::write_csv_row(out, row);
  }
  return out.str();
}

std::string cmd_curves(const ExperimentConfig& config) {
  std::size_t rejected = 0;
  const Dataset dataset = load_configured_dataset(config, rejected);
  const auto [x, y] = curve_data(dataset, config.curves.feature);
  const std::string path = (fs::path(config.out_dir) / ("curve_" + config.curves.feature + ".csv")).string();
  write_text(path, curves_csv(binned_curve(x, y, config.curves.bins)));
  return path;
}

}  // namespace staytime::harness
