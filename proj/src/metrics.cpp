#include "nfbst/metrics.hpp"

#include "nfbst/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nfbst {

ConfusionCounts confusion(const std::vector<bool>& labels, const std::vector<bool>& predictions) {
  if (labels.size() != predictions.size()) {
    throw DimensionError("confusion: prediction count", static_cast<Index>(labels.size()),
                         static_cast<Index>(predictions.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      predictions[i] ? ++c.tp : ++c.fn;
    } else {
      predictions[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

ClassificationScores precision_recall_f1(const std::vector<bool>& labels, const std::vector<bool>& predictions) {
  ClassificationScores s;
  s.counts = confusion(labels, predictions);
  const auto& c = s.counts;
  auto ratio = [&s](double num, double den) {
    if (den == 0.0) {
      s.undefined = true;
      return 0.0;
    }
    return num / den;
  };
  s.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  s.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

double trapezoid_area(const std::vector<double>& fpr, const std::vector<double>& tpr) {
  if (fpr.size() != tpr.size()) {
    throw DimensionError("trapezoid_area: tpr length", static_cast<Index>(fpr.size()), static_cast<Index>(tpr.size()));
  }
  double area = 0.0;
  for (std::size_t k = 1; k < fpr.size(); ++k) area += (fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2.0;
  return area;
}

RocCurve roc_auc(const std::vector<bool>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size()) {
    throw DimensionError("roc_auc: score count", static_cast<Index>(labels.size()),
                         static_cast<Index>(scores.size()));
  }
  const auto positives = std::count(labels.begin(), labels.end(), true);
  const auto negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw std::invalid_argument("roc_auc: labels contain a single class");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("roc_auc: NaN score");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.tpr.push_back(0.0);
  roc.fpr.push_back(0.0);
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  // one curve point per distinct score, so tied groups become diagonal
  // segments and the trapezoid gives ties half credit
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      labels[order[k]] ? ++tp : ++fp;
      ++k;
    }
    roc.thresholds.push_back(threshold);
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
  }
  roc.auc = trapezoid_area(roc.fpr, roc.tpr);
  return roc;
}

}  // namespace nfbst
