#pragma once

// Bayesian evidence for the sharp null eta = 0 from posterior draws of a
// statistic: Gaussian KDE of the draws, then the Monte Carlo mass of the
// region whose density exceeds the density at zero.

#include <Eigen/Core>

#include <optional>

namespace nfbst {

/// Silverman's rule, h = 0.9 * min(sd, IQR/1.34) * m^(-1/5). When the IQR
/// vanishes but the sample does not, the standard deviation alone is used.
/// Returns nullopt (degenerate) when every sample is identical.
std::optional<double> silverman_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& samples);

struct KdeEstimate {
  Eigen::VectorXd samples;
  double bandwidth = 1.0;
};

/// (1 / (m h)) * sum_i phi((point - samples_i) / h).
double kde_density(const KdeEstimate& est, double point);

struct EvidenceValue {
  double ev = 1.0;
  Eigen::Index m_used = 0;
  Eigen::Index tie_count = 0;  // draws whose density equals the density at 0
};

/// ev = 1 - (1/m) #{ i : p(eta_i) > p(0) }. Degenerate samples (all equal)
/// give 1 when the common value is 0 and 0 otherwise.
EvidenceValue evidence(const Eigen::Ref<const Eigen::VectorXd>& samples);

/// Quantile-based global significance: sort descending, return the value at
/// 1-indexed rank ceil(lambda * n).
double qgs(const Eigen::Ref<const Eigen::VectorXd>& evidences, double lambda);

}  // namespace nfbst
