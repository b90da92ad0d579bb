#pragma once

// Experiment configuration: typed fields, a flat `key = value` file format,
// and a registry so every key can be overridden from the command line.

#include "nfbst/baselines.hpp"
#include "nfbst/bnn.hpp"
#include "nfbst/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nfbst {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { toy, dataset1, dataset2, dataset3, csv };

std::string to_string(DataSource source);
DataSource data_source_from_string(const std::string& name);

struct ExperimentConfig {
  // data
  DataSource source = DataSource::toy;
  std::filesystem::path csv_path;
  std::string target_column = "y";
  std::string scale = "desk";         // desk | paper (teacher presets)
  std::optional<Index> rows;          // overrides the preset's n
  std::optional<Index> dims;          // teacher presets only
  std::optional<Index> significant;   // teacher presets only
  std::optional<double> noise_sigma;  // overrides the preset's noise

  // model
  std::optional<std::vector<Index>> hidden;  // unset: preset default
  Activation activation = Activation::relu;
  PriorSpec prior;
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = 1500;
    return t;
  }();
  std::filesystem::path posterior_path;  // load instead of training when set

  // testing
  Index draws = 1000;
  /// sqgrad_global stands for the squared-gradient family (global evidence
  /// and, with `local`, per-interval evidence).
  std::vector<StatisticKind> stats{StatisticKind::grad_instance, StatisticKind::sqgrad_global};
  std::vector<double> lambdas{0.5};
  std::vector<double> eps{1e-3, 1e-2, 5e-2};
  bool local = true;
  Index hist_bins = 4;
  std::optional<double> hist_bound;  // unset: 1 for generated data, max |x| for csv
  Index lime_instances = 100;
  Index lime_perturbations = 500;
  double lrp_epsilon = 1e-6;

  // baselines
  std::vector<BaselineKind> baselines{BaselineKind::ttest};
  Index bootstrap_b = 50;
  FitConfig baseline_fit;

  // decisions
  double decision_threshold = 0.5;
  double alpha = 0.05;

  // run
  std::filesystem::path out = "nfbst_out";
  std::uint64_t seed = 0;
  Index workers = 1;

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  /// Preset or explicit hidden widths for the fitted network.
  std::vector<Index> hidden_widths() const;
};

/// One documented key of the flat format.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  /// False for keys that cannot change any result (output location, worker
  /// count); those are left out of config_text and the hash.
  bool affects_results = true;
};

const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form; throws ConfigError for unknown keys or
/// malformed values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Every result-affecting key in registry order with its current value.
std::vector<std::pair<std::string, std::string>> config_pairs(const ExperimentConfig& config);

/// Canonical text, one `key = value` per line, readable by parse_config_text.
std::string config_text(const ExperimentConfig& config);

/// FNV-1a 64 of config_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

std::vector<std::string> split_list(const std::string& text);

}  // namespace nfbst
