#pragma once

// Report files and their readers. Numbers are written in shortest
// round-trip form so reading a file back reproduces the values exactly.
//
//   global.csv             feature x method: Q-GS per lambda, global evidence, p-values
//   instance_evidence.csv  row,feature,statistic,evidence
//   local_evidence.csv     feature,interval_lo,interval_hi,count,evidence
//   point_scores.csv       row,feature,posterior_mean_grad,mean_network_grad
//   histogram_<name>.csv   statistic,interval_lo,interval_hi,evidence_lo,evidence_hi,count
//   metrics.json           global F1 and instance AUC blocks
//   run.json               config echo, hash and seeds
//   timing.json            stage durations (the only nondeterministic file)

#include "nfbst/pipeline.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace nfbst {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr Index kEvidenceBins = 10;

void write_report(const EvidenceReport& report, const std::filesystem::path& dir);

/// Reconstructs everything but durations and metrics.
EvidenceReport read_report(const std::filesystem::path& dir);

void write_metrics(const MetricsReport& metrics, const std::filesystem::path& path);
MetricsReport read_metrics(const std::filesystem::path& path);

/// File-name-safe version of a column name.
std::string sanitize_name(const std::string& name);

/// Ground truth persistence for `simulate` / `evaluate`.
void save_truth(const LoadedData& loaded, const std::filesystem::path& path);
/// Rebuilds truth for `data` (gradients are recomputed on its rows).
GroundTruth load_truth(const std::filesystem::path& path, const Dataset& data);

}  // namespace nfbst
