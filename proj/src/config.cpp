#include "nfbst/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nfbst {

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::toy: return "toy";
    case DataSource::dataset1: return "dataset1";
    case DataSource::dataset2: return "dataset2";
    case DataSource::dataset3: return "dataset3";
    case DataSource::csv: return "csv";
  }
  return "?";
}

DataSource data_source_from_string(const std::string& name) {
  if (name == "toy") return DataSource::toy;
  if (name == "dataset1") return DataSource::dataset1;
  if (name == "dataset2") return DataSource::dataset2;
  if (name == "dataset3") return DataSource::dataset3;
  if (name == "csv") return DataSource::csv;
  throw ConfigError("unknown data source '" + name + "' (expected toy, dataset1, dataset2, dataset3 or csv)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Index to_index(const std::string& key, const std::string& v) {
  Index out = 0;
  const auto t = trim(v);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = trim(v);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(trim(v));
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

bool is_auto(const std::string& v) {
  const auto t = trim(v);
  return t == "auto" || t == "none" || t.empty();
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(Index v) { return std::to_string(v); }

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + f(x);
  return out;
}

std::vector<double> to_real_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_real(key, item));
  return out;
}

// Builders keep each registry entry to one line.
ConfigKey key_index(std::string name, std::string help, Index ExperimentConfig::*field) {
  return {name, std::move(help), [name, field](ExperimentConfig& c, const std::string& v) { c.*field = to_index(name, v); },
          [field](const ExperimentConfig& c) { return fmt(c.*field); }};
}

ConfigKey key_real(std::string name, std::string help, double ExperimentConfig::*field) {
  return {name, std::move(help), [name, field](ExperimentConfig& c, const std::string& v) { c.*field = to_real(name, v); },
          [field](const ExperimentConfig& c) { return fmt(c.*field); }};
}

ConfigKey key_opt_index(std::string name, std::string help, std::optional<Index> ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            if (is_auto(v)) {
              (c.*field).reset();
            } else {
              c.*field = to_index(name, v);
            }
          },
          [field](const ExperimentConfig& c) { return (c.*field) ? fmt(*(c.*field)) : std::string("auto"); }};
}

ConfigKey key_opt_real(std::string name, std::string help, std::optional<double> ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            if (is_auto(v)) {
              (c.*field).reset();
            } else {
              c.*field = to_real(name, v);
            }
          },
          [field](const ExperimentConfig& c) { return (c.*field) ? fmt(*(c.*field)) : std::string("auto"); }};
}

std::vector<ConfigKey> build_keys() {
  using C = ExperimentConfig;
  std::vector<ConfigKey> k;
  k.push_back({"data", "toy | dataset1 | dataset2 | dataset3 | csv",
               [](C& c, const std::string& v) { c.source = data_source_from_string(trim(v)); },
               [](const C& c) { return to_string(c.source); }});
  k.push_back({"csv_path", "input CSV when data = csv",
               [](C& c, const std::string& v) { c.csv_path = trim(v); },
               [](const C& c) { return c.csv_path.string(); }});
  k.push_back({"target_column", "CSV column holding the response",
               [](C& c, const std::string& v) { c.target_column = trim(v); },
               [](const C& c) { return c.target_column; }});
  k.push_back({"scale", "teacher preset size: desk (d=20, n=2000) or paper (d=100, n=10000)",
               [](C& c, const std::string& v) {
                 const auto t = trim(v);
                 if (t != "desk" && t != "paper") throw ConfigError("scale: expected desk or paper, got '" + v + "'");
                 c.scale = t;
               },
               [](const C& c) { return c.scale; }});
  k.push_back(key_opt_index("rows", "number of generated rows (auto: preset)", &C::rows));
  k.push_back(key_opt_index("dims", "teacher input dimension (auto: preset)", &C::dims));
  k.push_back(key_opt_index("significant", "teacher live features (auto: half of dims)", &C::significant));
  k.push_back(key_opt_real("noise_sigma", "response noise sd (auto: 1 for toy, 0.1 for teachers)", &C::noise_sigma));
  k.push_back({"hidden", "hidden widths, comma separated (auto: 20,20,20, or 16,16,16 for dataset2/3)",
               [](C& c, const std::string& v) {
                 if (is_auto(v)) {
                   c.hidden.reset();
                   return;
                 }
                 std::vector<Index> w;
                 for (const auto& item : split_list(v)) w.push_back(to_index("hidden", item));
                 c.hidden = w;
               },
               [](const C& c) {
                 return c.hidden ? join<Index>(*c.hidden, [](const Index& x) { return fmt(x); }) : std::string("auto");
               }});
  k.push_back({"activation", "relu | tanh | identity",
               [](C& c, const std::string& v) {
                 try {
                   c.activation = activation_from_string(trim(v));
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(std::string("activation: ") + e.what());
                 }
               },
               [](const C& c) { return to_string(c.activation); }});
  k.push_back({"prior_mean", "prior mean for every parameter",
               [](C& c, const std::string& v) { c.prior.mean = to_real("prior_mean", v); },
               [](const C& c) { return fmt(c.prior.mean); }});
  k.push_back({"prior_sigma", "prior standard deviation for every parameter",
               [](C& c, const std::string& v) { c.prior.sigma = to_real("prior_sigma", v); },
               [](const C& c) { return fmt(c.prior.sigma); }});
  k.push_back({"epochs", "variational training epochs",
               [](C& c, const std::string& v) { c.train.epochs = to_index("epochs", v); },
               [](const C& c) { return fmt(c.train.epochs); }});
  k.push_back({"batch_size", "minibatch size",
               [](C& c, const std::string& v) { c.train.batch_size = to_index("batch_size", v); },
               [](const C& c) { return fmt(c.train.batch_size); }});
  k.push_back({"learning_rate", "initial Adam step size",
               [](C& c, const std::string& v) { c.train.learning_rate = to_real("learning_rate", v); },
               [](const C& c) { return fmt(c.train.learning_rate); }});
  k.push_back({"final_learning_rate", "cosine-annealed step size at the last epoch (none: constant)",
               [](C& c, const std::string& v) {
                 if (is_auto(v)) {
                   c.train.final_learning_rate.reset();
                 } else {
                   c.train.final_learning_rate = to_real("final_learning_rate", v);
                 }
               },
               [](const C& c) {
                 return c.train.final_learning_rate ? fmt(*c.train.final_learning_rate) : std::string("none");
               }});
  k.push_back({"mc_samples", "reparameterized draws per training step",
               [](C& c, const std::string& v) { c.train.mc_samples_per_step = to_index("mc_samples", v); },
               [](const C& c) { return fmt(c.train.mc_samples_per_step); }});
  k.push_back({"kl_scale", "KL weight per minibatch (auto: 1/n)",
               [](C& c, const std::string& v) {
                 if (is_auto(v)) {
                   c.train.kl_scale.reset();
                 } else {
                   c.train.kl_scale = to_real("kl_scale", v);
                 }
               },
               [](const C& c) { return c.train.kl_scale ? fmt(*c.train.kl_scale) : std::string("auto"); }});
  k.push_back({"observation_sigma", "Gaussian likelihood noise sd",
               [](C& c, const std::string& v) { c.train.observation_sigma = to_real("observation_sigma", v); },
               [](const C& c) { return fmt(c.train.observation_sigma); }});
  k.push_back({"initial_rho", "initial softplus-inverse standard deviation",
               [](C& c, const std::string& v) { c.train.initial_rho = to_real("initial_rho", v); },
               [](const C& c) { return fmt(c.train.initial_rho); }});
  k.push_back({"posterior", "saved posterior to load instead of training",
               [](C& c, const std::string& v) { c.posterior_path = trim(v); },
               [](const C& c) { return c.posterior_path.string(); }});
  k.push_back(key_index("draws", "posterior draws m", &C::draws));
  k.push_back({"stats", "statistics: grad, sqgrad, lrp, deeplift, lime (comma separated, may be empty)",
               [](C& c, const std::string& v) {
                 c.stats.clear();
                 for (const auto& item : split_list(v)) {
                   try {
                     const StatisticKind kind =
                         item == "sqgrad" ? StatisticKind::sqgrad_global : statistic_from_string(item);
                     if (kind == StatisticKind::sqgrad_local) {
                       throw std::invalid_argument("sqgrad_local is reported through 'local'; request sqgrad");
                     }
                     if (std::find(c.stats.begin(), c.stats.end(), kind) == c.stats.end()) c.stats.push_back(kind);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("stats: ") + e.what());
                   }
                 }
               },
               [](const C& c) {
                 return join<StatisticKind>(c.stats, [](const StatisticKind& s) {
                   return s == StatisticKind::sqgrad_global ? std::string("sqgrad") : to_string(s);
                 });
               }});
  k.push_back({"lambda", "Q-GS quantile levels",
               [](C& c, const std::string& v) { c.lambdas = to_real_list("lambda", v); },
               [](const C& c) { return join<double>(c.lambdas, [](const double& x) { return fmt(x); }); }});
  k.push_back({"eps", "instance-label thresholds on true gradients",
               [](C& c, const std::string& v) { c.eps = to_real_list("eps", v); },
               [](const C& c) { return join<double>(c.eps, [](const double& x) { return fmt(x); }); }});
  k.push_back({"local", "local evidence per histogram interval",
               [](C& c, const std::string& v) { c.local = to_bool("local", v); },
               [](const C& c) { return std::string(c.local ? "true" : "false"); }});
  k.push_back(key_index("hist_bins", "|x| intervals per feature for histograms and local evidence", &C::hist_bins));
  k.push_back(key_opt_real("hist_bound", "upper |x| edge of the last interval (auto)", &C::hist_bound));
  k.push_back(key_index("lime_instances", "rows scored by LIME (first rows of the data)", &C::lime_instances));
  k.push_back(key_index("lime_perturbations", "LIME perturbations per surrogate", &C::lime_perturbations));
  k.push_back(key_real("lrp_epsilon", "LRP stabilizer", &C::lrp_epsilon));
  k.push_back({"baselines", "classical tests: ttest, bootstrap, lrt (comma separated, may be empty)",
               [](C& c, const std::string& v) {
                 c.baselines.clear();
                 for (const auto& item : split_list(v)) {
                   try {
                     c.baselines.push_back(baseline_from_string(item));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("baselines: ") + e.what());
                   }
                 }
               },
               [](const C& c) {
                 return join<BaselineKind>(c.baselines, [](const BaselineKind& b) { return to_string(b); });
               }});
  k.push_back(key_index("bootstrap_b", "bootstrap resamples", &C::bootstrap_b));
  k.push_back({"baseline_epochs", "epochs for deterministic baseline fits",
               [](C& c, const std::string& v) { c.baseline_fit.epochs = to_index("baseline_epochs", v); },
               [](const C& c) { return fmt(c.baseline_fit.epochs); }});
  k.push_back({"baseline_batch_size", "minibatch size for baseline fits",
               [](C& c, const std::string& v) { c.baseline_fit.batch_size = to_index("baseline_batch_size", v); },
               [](const C& c) { return fmt(c.baseline_fit.batch_size); }});
  k.push_back({"baseline_learning_rate", "Adam step size for baseline fits",
               [](C& c, const std::string& v) { c.baseline_fit.learning_rate = to_real("baseline_learning_rate", v); },
               [](const C& c) { return fmt(c.baseline_fit.learning_rate); }});
  k.push_back(key_real("decision_threshold", "Q-GS above this declares a feature insignificant", &C::decision_threshold));
  k.push_back(key_real("alpha", "p-value at or above this declares a feature insignificant", &C::alpha));
  k.push_back({"seed", "master seed",
               [](C& c, const std::string& v) { c.seed = to_u64("seed", v); },
               [](const C& c) { return std::to_string(c.seed); }});
  ConfigKey out{"out", "output directory", [](C& c, const std::string& v) { c.out = trim(v); },
                [](const C& c) { return c.out.string(); }};
  out.affects_results = false;
  k.push_back(out);
  ConfigKey workers = key_index("workers", "threads for the evidence stage and bootstrap", &C::workers);
  workers.affects_results = false;
  k.push_back(workers);
  return k;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> config_pairs(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys())
    if (k.affects_results) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string config_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_pairs(config)) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Index> ExperimentConfig::hidden_widths() const {
  if (hidden) return *hidden;
  switch (source) {
    case DataSource::toy: return {20, 20, 20};
    case DataSource::dataset1: return {20, 20, 20};
    case DataSource::dataset2:
    case DataSource::dataset3: return {16, 16, 16};
    case DataSource::csv: return {20, 20, 20};
  }
  return {20, 20, 20};
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); };
  if (source == DataSource::csv && csv_path.empty()) fail("csv_path", "required when data = csv");
  if (rows && *rows < 1) fail("rows", "must be >= 1");
  if (dims && *dims < 1) fail("dims", "must be >= 1");
  if (significant && *significant < 0) fail("significant", "must be >= 0");
  if (significant && dims && *significant > *dims) fail("significant", "must not exceed dims");
  if (noise_sigma && !(*noise_sigma >= 0.0)) fail("noise_sigma", "must be >= 0");
  for (Index w : hidden_widths())
    if (w < 1) fail("hidden", "widths must be positive");
  if (hidden && hidden->empty()) fail("hidden", "need at least one hidden layer");
  try {
    prior.validate();
  } catch (const std::invalid_argument& e) {
    fail("prior_sigma", e.what());
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    fail("train", e.what());
  }
  if (draws < 2) fail("draws", "must be >= 2");
  for (double l : lambdas)
    if (!(l > 0.0 && l <= 1.0)) fail("lambda", "values must lie in (0, 1]");
  if (lambdas.empty()) fail("lambda", "need at least one value");
  for (double e : eps)
    if (!(e > 0.0)) fail("eps", "values must be positive");
  if (hist_bins < 1) fail("hist_bins", "must be >= 1");
  if (hist_bound && !(*hist_bound > 0.0)) fail("hist_bound", "must be positive");
  if (lime_instances < 1) fail("lime_instances", "must be >= 1");
  if (lime_perturbations < 2) fail("lime_perturbations", "must be >= 2");
  if (!(lrp_epsilon > 0.0)) fail("lrp_epsilon", "must be positive");
  if (bootstrap_b < 20) fail("bootstrap_b", "must be >= 20");
  try {
    baseline_fit.validate();
  } catch (const std::invalid_argument& e) {
    fail("baseline_epochs", e.what());
  }
  if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) fail("decision_threshold", "must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (workers < 1) fail("workers", "must be >= 1");
  if (scale != "desk" && scale != "paper") fail("scale", "expected desk or paper");
}

}  // namespace nfbst
