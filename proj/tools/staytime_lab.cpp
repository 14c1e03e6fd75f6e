// staytime-lab: command-line front end of the harness.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "staytime/error.hpp"
#include "staytime/harness.hpp"

namespace fs = std::filesystem;
using namespace staytime;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<std::string> lcu;
  std::optional<std::string> out;
  std::optional<std::string> feature;
  std::optional<std::size_t> bins;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config_path, "experiment config (TOML)");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "run this single seed instead of train.seeds");
  cmd->add_option("--model", o.model, "base model: vr|wlr|ndt|pcr|d2q");
  cmd->add_option("--lcu", o.lcu, "LCU fusion and auxiliary heads: on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--out", o.out, "output directory");
}

harness::ExperimentConfig resolve(const Overrides& o) {
  harness::ExperimentConfig c = o.config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(o.config_path);
  if (o.seed) c.seeds = {*o.seed};
  if (o.model) c.model.kind = models::parse_model_kind(*o.model);
  if (o.lcu) c.model.lcu = *o.lcu == "on";
  if (o.out) c.out_dir = *o.out;
  if (o.feature) c.curves.feature = *o.feature;
  if (o.bins) c.curves.bins = *o.bins;
  c.validate();
  return c;
}

void print_summary(const harness::ExperimentReport& r) {
  std::cout << r.run << " (" << r.seeds.size() << " seed" << (r.seeds.size() == 1 ? "" : "s") << ")\n";
  for (const auto& [name, s] : r.aggregate) {
    std::cout << "  " << name << " = " << s.mean << " +- " << s.std << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Comment-section staytime prediction lab"};
  app.set_version_flag("--version", std::string(STAYTIME_VERSION_STRING));
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::string> reports;

  auto* gen = app.add_subcommand("generate", "write a seeded synthetic dataset and embedding tables");
  add_common(gen, o, true);
  auto* train = app.add_subcommand("train", "train every seed, write checkpoints and report.json");
  add_common(train, o, true);
  auto* eval = app.add_subcommand("evaluate", "re-evaluate trained checkpoints, write evaluation.json");
  add_common(eval, o, true);
  auto* cmp = app.add_subcommand("compare", "compare reports against the first one");
  add_common(cmp, o, false);
  cmp->add_option("reports", reports, "report JSON files (or compare.reports in the config)");
  auto* curves = app.add_subcommand("curves", "binned mean staytime over a feature, as CSV");
  add_common(curves, o, true);
  curves->add_option("--feature", o.feature, "avg_top5_likes|interactions|duration|watchtime");
  curves->add_option("--bins", o.bins, "number of equal-frequency bins");

  CLI11_PARSE(app, argc, argv);

  try {
    const harness::ExperimentConfig config = resolve(o);
    if (gen->parsed()) {
      const std::string dir = harness::cmd_generate(config);
      std::cout << "dataset written to " << dir << "\n";
    } else if (train->parsed()) {
      const auto report = harness::cmd_train(config);
      print_summary(report);
      std::cout << "report: " << (fs::path(config.run_dir()) / "report.json").string() << "\n";
    } else if (eval->parsed()) {
      const auto report = harness::cmd_evaluate(config);
      print_summary(report);
      std::cout << "report: " << (fs::path(config.run_dir()) / "evaluation.json").string() << "\n";
    } else if (cmp->parsed()) {
      if (reports.empty()) reports = config.compare_reports;
      std::vector<harness::ExperimentReport> loaded;
      for (const auto& p : reports) loaded.push_back(harness::read_report(p));
      const harness::Comparison c = harness::compare_reports(loaded);
      std::cout << c.to_text();
      fs::create_directories(config.out_dir);
      const std::string csv_path = (fs::path(config.out_dir) / "comparison.csv").string();
      std::ofstream(csv_path) << c.to_csv();
      std::cout << "csv: " << csv_path << "\n";
    } else if (curves->parsed()) {
      const std::string path = harness::cmd_curves(config);
      std::cout << "curve written to " << path << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
