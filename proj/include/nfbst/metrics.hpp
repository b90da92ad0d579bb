#pragma once

// Confusion-matrix scores for global decisions and ROC/AUC for
// instance-wise scores. The positive class is "significant".

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace nfbst {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const std::vector<bool>& labels, const std::vector<bool>& predictions);

struct ClassificationScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when some ratio had a zero denominator and was reported as 0.
  bool undefined = false;
  ConfusionCounts counts;
};

ClassificationScores precision_recall_f1(const std::vector<bool>& labels, const std::vector<bool>& predictions);

struct RocCurve {
  std::vector<double> thresholds;  // descending; first is +inf
  std::vector<double> tpr;
  std::vector<double> fpr;
  double auc = 0.0;
};

/// Higher score means more likely positive. Throws std::invalid_argument
/// when only one class is present or lengths differ.
RocCurve roc_auc(const std::vector<bool>& labels, const std::vector<double>& scores);

/// Trapezoidal area under (fpr, tpr).
double trapezoid_area(const std::vector<double>& fpr, const std::vector<double>& tpr);

}  // namespace nfbst
