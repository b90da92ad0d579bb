#pragma once

// End-to-end orchestration: data -> posterior -> statistic samples ->
// evidence -> Q-GS, plus baselines and scoring against known ground truth.

#include "nfbst/baselines.hpp"
#include "nfbst/bnn.hpp"
#include "nfbst/config.hpp"
#include "nfbst/datagen.hpp"
#include "nfbst/metrics.hpp"
#include "nfbst/stats.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfbst {

/// Error from one pipeline stage, carrying the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Known data-generating truth for generated data.
struct GroundTruth {
  std::vector<bool> significant;  // per feature
  Eigen::MatrixXd gradients;      // n x d true input gradients
};

struct LoadedData {
  Dataset data;
  std::optional<TeacherSpec> teacher;
  std::optional<GroundTruth> truth;
};

/// Stage seeds fanned out from the master seed.
struct StageSeeds {
  std::uint64_t data = 0;
  std::uint64_t train = 0;
  std::uint64_t sampling = 0;
  std::uint64_t lime = 0;
  std::uint64_t bootstrap = 0;
  std::uint64_t lrt = 0;
};

StageSeeds stage_seeds(std::uint64_t master);

/// Preset generator or CSV ingest, with truth for generated data.
LoadedData load_data(const ExperimentConfig& config);

/// Truth for a toy dataset or a teacher (gradients evaluated on `data`).
GroundTruth toy_truth(const Dataset& data);
GroundTruth teacher_truth(const TeacherSpec& teacher, const Dataset& data);

/// Fits the variational posterior for the configured architecture.
PosteriorArtifact train_stage(const ExperimentConfig& config, const Dataset& data);

/// Instance-wise evidence for one statistic.
struct StatisticReport {
  StatisticKind kind = StatisticKind::grad_instance;
  Eigen::MatrixXd evidence;  // scored rows x d; rows are the first rows of the data
  Eigen::MatrixXd qgs;       // d x lambdas
  /// Per feature: counts over (|x| interval, evidence decile).
  std::vector<Eigen::MatrixXi> histogram;
};

/// Squared-gradient evidence on one |x_j| interval.
struct LocalEvidence {
  Index feature = 0;
  double lo = 0.0;
  double hi = 0.0;
  Index count = 0;
  double evidence = 1.0;
};

struct BaselineReport {
  BaselineKind kind = BaselineKind::ttest;
  std::vector<TestResult> tests;  // one per feature
};

struct GlobalScores {
  std::string method;
  std::vector<bool> significant;  // decision per feature
  ClassificationScores scores;
};

struct InstanceScores {
  std::string method;
  double eps = 0.0;
  std::optional<double> auc;  // unset when the labels hold a single class
  Index positives = 0;
  Index cells = 0;
};

struct MetricsReport {
  std::vector<GlobalScores> global;
  std::vector<InstanceScores> instance;
};

struct EvidenceReport {
  std::vector<std::string> feature_names;
  Index rows = 0;
  std::vector<double> lambdas;
  std::vector<StatisticReport> statistics;
  std::optional<Eigen::VectorXd> global_evidence;  // sqgrad_global, one per feature
  std::vector<LocalEvidence> local;
  std::vector<double> hist_edges;  // |x| interval edges
  /// Point-estimate scores, n x d: |E_q[df/dx_j]| over the draws, and
  /// |df/dx_j| of the network at the variational mean. Empty without grad.
  Eigen::MatrixXd point_scores;
  Eigen::MatrixXd mean_network_scores;
  std::vector<BaselineReport> baselines;
  std::optional<MetricsReport> metrics;

  std::vector<std::pair<std::string, std::string>> config;  // echo
  std::string config_hash;
  std::uint64_t master_seed = 0;
  StageSeeds seeds;
  std::map<std::string, double> durations;  // seconds per stage

  const StatisticReport* find(StatisticKind kind) const;
};

/// Interval edges 0 = e_0 < ... < e_bins = bound.
std::vector<double> histogram_edges(Index bins, double bound);

/// Index of the |x| interval holding x (values beyond the bound land in the
/// last interval).
Index interval_of(const std::vector<double>& edges, double x);

/// Counts of evidence deciles within each |x_j| interval; the last decile
/// includes 1.
std::vector<Eigen::MatrixXi> evidence_histogram(const Eigen::MatrixXd& evidence, const Eigen::MatrixXd& features,
                                                const std::vector<double>& edges, Index evidence_bins = 10);

/// Evidence, Q-GS, local evidence and baselines from a fitted posterior.
EvidenceReport test_stage(const ExperimentConfig& config, const LoadedData& loaded,
                          const PosteriorArtifact& artifact);

/// Global decisions and instance AUCs against the truth.
MetricsReport evaluate_stage(const ExperimentConfig& config, const EvidenceReport& report, const GroundTruth& truth);

/// load -> train (or load posterior) -> test -> evaluate -> write_report;
/// a freshly trained posterior is saved as posterior.json next to the report.
EvidenceReport run_pipeline(const ExperimentConfig& config);

}  // namespace nfbst
