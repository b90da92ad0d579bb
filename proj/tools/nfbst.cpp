// nfbst: command-line front end.
//
//   nfbst simulate  generate a preset dataset (data.csv, truth.json)
//   nfbst train     fit and save the variational posterior (posterior.json)
//   nfbst test      evidence and baselines from a saved posterior
//   nfbst evaluate  score a written report against ground truth
//   nfbst run       all of the above in one go
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "nfbst/config.hpp"
#include "nfbst/pipeline.hpp"
#include "nfbst/report.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>

namespace {

using namespace nfbst;
namespace fs = std::filesystem;

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct Overrides {
  std::string config_file;
  std::string truth_file;
  std::map<std::string, std::string> values;  // key -> flag text
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "flat key = value config file");
  for (const auto& key : config_keys()) {
    cmd->add_option_function<std::string>(
        flag_name(key.name), [&o, name = key.name](const std::string& v) { o.values[name] = v; }, key.help);
  }
}

ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    for (const auto& [k, v] : read_config_file(o.config_file)) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : o.values) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

void print_summary(const EvidenceReport& rep) {
  std::printf("%-12s", "feature");
  for (const auto& s : rep.statistics) std::printf(" %14s", ("qgs_" + to_string(s.kind)).c_str());
  if (rep.global_evidence) std::printf(" %14s", "ev_sqgrad");
  for (const auto& b : rep.baselines) std::printf(" %14s", ("p_" + to_string(b.kind)).c_str());
  std::printf("\n");
  for (std::size_t j = 0; j < rep.feature_names.size(); ++j) {
    std::printf("%-12s", rep.feature_names[j].c_str());
    const auto jj = static_cast<Index>(j);
    for (const auto& s : rep.statistics) std::printf(" %14.4f", s.qgs(jj, 0));
    if (rep.global_evidence) std::printf(" %14.4f", (*rep.global_evidence)(jj));
    for (const auto& b : rep.baselines) std::printf(" %14.4g", b.tests[j].p_value);
    std::printf("\n");
  }
}

void print_metrics(const MetricsReport& m) {
  for (const auto& g : m.global) {
    std::printf("global %-22s precision %.3f recall %.3f f1 %.3f%s\n", g.method.c_str(), g.scores.precision,
                g.scores.recall, g.scores.f1, g.scores.undefined ? " (undefined ratio)" : "");
  }
  for (const auto& i : m.instance) {
    if (i.auc) {
      std::printf("instance %-20s eps %-8g auc %.4f\n", i.method.c_str(), i.eps, *i.auc);
    } else {
      std::printf("instance %-20s eps %-8g auc n/a (single class)\n", i.method.c_str(), i.eps);
    }
  }
}

fs::path posterior_file(const ExperimentConfig& cfg) {
  return cfg.posterior_path.empty() ? cfg.out / "posterior.json" : cfg.posterior_path;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  if (cfg.source == DataSource::csv) throw ConfigError("simulate needs a generated data source, not csv");
  const LoadedData loaded = load_data(cfg);
  fs::create_directories(cfg.out);
  write_csv(loaded.data, cfg.out / "data.csv", "y");
  save_truth(loaded, cfg.out / "truth.json");
  std::printf("wrote %s (%ld rows, %ld features) and truth.json\n", (cfg.out / "data.csv").string().c_str(),
              static_cast<long>(loaded.data.rows()), static_cast<long>(loaded.data.dims()));
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const LoadedData loaded = load_data(cfg);
  const PosteriorArtifact artifact = train_stage(cfg, loaded.data);
  fs::create_directories(cfg.out);
  const fs::path path = cfg.out / "posterior.json";
  save_posterior(artifact, path);
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

int cmd_test(const ExperimentConfig& cfg) {
  const LoadedData loaded = load_data(cfg);
  const PosteriorArtifact artifact = load_posterior(posterior_file(cfg));
  EvidenceReport rep = test_stage(cfg, loaded, artifact);
  if (loaded.truth) rep.metrics = evaluate_stage(cfg, rep, *loaded.truth);
  write_report(rep, cfg.out);
  print_summary(rep);
  if (rep.metrics) print_metrics(*rep.metrics);
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& truth_file) {
  const EvidenceReport rep = read_report(cfg.out);
  const LoadedData loaded = load_data(cfg);
  GroundTruth truth;
  if (!truth_file.empty()) {
    truth = load_truth(truth_file, loaded.data);
  } else if (loaded.truth) {
    truth = *loaded.truth;
  } else {
    throw ConfigError("evaluate: csv data has no ground truth; pass --truth");
  }
  const MetricsReport m = evaluate_stage(cfg, rep, truth);
  write_metrics(m, cfg.out / "metrics.json");
  print_metrics(m);
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  const EvidenceReport rep = run_pipeline(cfg);
  print_summary(rep);
  if (rep.metrics) print_metrics(*rep.metrics);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full Bayesian significance testing for neural networks"};
  app.require_subcommand(1);
  Overrides o;
  auto* simulate = app.add_subcommand("simulate", "generate a preset dataset and its ground truth");
  auto* train = app.add_subcommand("train", "fit and save the variational posterior");
  auto* test = app.add_subcommand("test", "evidence and baselines from a saved posterior");
  auto* evaluate = app.add_subcommand("evaluate", "score a written report against ground truth");
  auto* run = app.add_subcommand("run", "full pipeline");
  for (auto* cmd : {simulate, train, test, evaluate, run}) add_config_flags(cmd, o);
  evaluate->add_option("--truth", o.truth_file, "truth.json written by simulate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  ExperimentConfig cfg;
  try {
    cfg = build_config(o);
  } catch (const std::exception& e) {
    std::cerr << "nfbst: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(cfg);
    if (*train) return cmd_train(cfg);
    if (*test) return cmd_test(cfg);
    if (*evaluate) return cmd_evaluate(cfg, o.truth_file);
    return cmd_run(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "nfbst: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "nfbst: " << e.what() << "\n";
    return kRuntime;
  }
}
