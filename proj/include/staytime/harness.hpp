#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "staytime/datagen.hpp"
#include "staytime/features.hpp"
#include "staytime/lcu_model.hpp"
#include "staytime/training.hpp"

namespace staytime::harness {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "staytime-report/1";

struct DatasetConfig {
  /// "synthetic": `dir` holds generated data (written by `generate`).
  /// "external": a KuaiComt-shaped export in `external_dir`.
  std::string source = "synthetic";
  std::string dir = "data";
  datagen::GeneratorConfig generator;
  std::string external_dir;
  std::string column_map;  ///< optional JSON file {canonical: external}
  /// Default to the generated tables inside `dir`.
  std::string video_embeddings;
  std::string comment_embeddings;
  features::MissingEmbeddingPolicy missing_embeddings = features::MissingEmbeddingPolicy::ZeroFallback;
  std::size_t sampled_comments = kDefaultSampledComments;

  std::string video_embedding_path() const;
  std::string comment_embedding_path() const;
};

struct CurvesConfig {
  std::string feature = "avg_top5_likes";
  std::size_t bins = 20;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  lcu::ModelConfig model;
  lcu::TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "runs";
  /// Defaults to "<kind>" or "lcu-<kind>".
  std::string run_name;
  lcu::ExposureThresholds exposure;
  CurvesConfig curves;
  std::vector<std::string> compare_reports;

  std::string effective_run_name() const;
  std::string run_dir() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
  Json to_json() const;
};

/// Parses TOML text; unknown keys are rejected.
ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::string& path);

// --- running ---------------------------------------------------------------------

/// Dataset, splits and model-ready example sets shared by every seed.
struct PreparedData {
  Dataset dataset;
  CommentIndex index;
  datagen::Splits splits;
  features::FeatureContext context;
  features::ExampleSet train, validation, test;
  features::MissingEmbeddingCounts missing;
  std::size_t ev_dim = 0, ec_dim = 0;
  std::size_t rejected_rows = 0;
};

/// Loads the configured dataset (and embedding tables when LCU is on).
PreparedData prepare_data(const ExperimentConfig& config);

struct SeedResult {
  std::uint64_t seed = 0;
  lcu::Evaluation evaluation;
  lcu::TrainingLog log;
};

/// Builds, trains and evaluates one model. `model_out` receives the trained model.
SeedResult run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                    std::optional<lcu::LcuModel>* model_out = nullptr);

lcu::LcuModel make_model(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);

// --- reports ---------------------------------------------------------------------

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (0 for one seed)
};

struct ExperimentReport {
  std::string run;
  std::string version = STAYTIME_VERSION_STRING;
  std::string generated_at;
  Json config;
  Json dataset;
  std::vector<std::uint64_t> seeds;
  std::vector<std::map<std::string, double>> per_seed;
  std::vector<Json> per_seed_details;
  std::map<std::string, MetricSummary> aggregate;

  /// Recomputes `aggregate` over metrics present for every seed.
  void summarise();
  Json to_json() const;
  /// Parses and re-checks every aggregate against the per-seed values
  /// (1e-12, relative to max(1, |mean|)); throws ValidationError otherwise.
  static ExperimentReport from_json(const Json& j);
};

MetricSummary summarise(const std::vector<double>& values);

void write_report(const ExperimentReport& report, const std::string& path);
ExperimentReport read_report(const std::string& path);

// --- commands ----------------------------------------------------------------------

/// Generates synthetic data into dataset.dir and returns that directory.
std::string cmd_generate(const ExperimentConfig& config);
/// Trains every seed, writes one checkpoint per seed plus report.json into run_dir().
ExperimentReport cmd_train(const ExperimentConfig& config);
/// Re-evaluates the checkpoints written by cmd_train; writes evaluation.json.
/// Throws IoError when a seed's checkpoint is missing.
ExperimentReport cmd_evaluate(const ExperimentConfig& config);

struct ComparisonRow {
  std::string metric;
  std::vector<double> means;       ///< one per report
  std::vector<double> delta_abs;   ///< per report, versus the first
  std::vector<double> delta_rel;   ///< NaN when the base mean is 0
  std::vector<std::string> wins;   ///< "w/n" per report, matched by seed
};

struct Comparison {
  std::vector<std::string> columns;
  std::vector<ComparisonRow> rows;
  std::string to_text() const;
  std::string to_csv() const;
};

/// Compares reports against the first one. Throws ValidationError with
/// fewer than two reports or no shared metric.
Comparison compare_reports(const std::vector<ExperimentReport>& reports);
/// True when a lower value of the metric is better (RMSE, MAE).
bool lower_is_better(const std::string& metric);

struct CurveBin {
  double lo = 0.0, hi = 0.0;
  double mean = 0.0, variance = 0.0;
  std::size_t count = 0;
};

/// Equal-frequency bins over x (sorted, stable); bin sizes differ by at most
/// one. Mean and population variance of y per bin.
std::vector<CurveBin> binned_curve(const std::vector<double>& x, const std::vector<double>& y, std::size_t bins);

/// Known x-features: avg_top5_likes, interactions, duration, watchtime.
/// Returns (x, staytime) over opened impressions.
std::pair<std::vector<double>, std::vector<double>> curve_data(const Dataset& dataset, const std::string& feature);

std::string curves_csv(const std::vector<CurveBin>& bins);

/// Writes <out_dir>/curve_<feature>.csv and returns its path.
std::string cmd_curves(const ExperimentConfig& config);

}  // namespace staytime::harness
