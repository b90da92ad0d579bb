#pragma once

// Classical comparison tests: linear-model t-test, bootstrap Z-test on a
// refitted deterministic network, and a nested likelihood-ratio test.

#include "nfbst/datagen.hpp"
#include "nfbst/net.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfbst {

// --- tail areas --------------------------------------------------------------

/// P(Z > z) for a standard normal.
double normal_sf(double z);
/// P(T > t) for Student-t with df degrees of freedom (df may be fractional).
double student_t_sf(double t, double df);
/// P(X > x) for chi-square with df degrees of freedom.
double chi2_sf(double x, double df);

// --- results -------------------------------------------------------------------

enum class BaselineKind { ttest, bootstrap, lrt };

std::string to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& name);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  BaselineKind method = BaselineKind::ttest;
  Index feature_index = 0;
  /// Degrees of freedom of the reference distribution, when it has one.
  double df = 0.0;
};

// --- linear model ----------------------------------------------------------------

struct LinearFit {
  Eigen::VectorXd coefficients;     // intercept first, then one per feature
  Eigen::VectorXd standard_errors;  // same layout
  double residual_variance = 0.0;
  Index n = 0;
  Index d = 0;
};

class RankDeficientError : public std::invalid_argument {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : std::invalid_argument(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// Ordinary least squares with intercept. Throws RankDeficientError naming
/// the columns that are linear combinations of the others.
LinearFit ols_fit(const Dataset& data);

/// t = beta_j / SE_j, two-sided against Student-t with n - d - 1 df.
TestResult ttest_linear(const LinearFit& fit, Index j);
TestResult ttest_linear(const Dataset& data, Index j);

// --- deterministic network ---------------------------------------------------------

struct FitConfig {
  Index epochs = 100;
  Index batch_size = 100;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// 0/1 multiplier per parameter; zero entries are held at zero throughout.
using ParameterMask = Eigen::VectorXd;

/// Mask pinning feature j's first-layer weights to zero.
ParameterMask feature_mask(const Architecture& arch, Index j);

/// Adam on the mean squared error, starting from `init` when provided and
/// from a fan-in scaled uniform draw otherwise. Returns the parameters with
/// the lowest full-data MSE seen at epoch ends.
ParameterVector fit_network(const Dataset& data, const Architecture& arch, const FitConfig& config,
                            const ParameterMask* mask = nullptr, const ParameterVector* init = nullptr);

/// Residual sum of squares of the network on the dataset.
double residual_sum_squares(const Architecture& arch, const ParameterVector& params, const Dataset& data);

// --- resampling and nesting -----------------------------------------------------------

struct BootstrapResult {
  TestResult test;
  Eigen::VectorXd replicates;  // stat_sqgrad_global per refit
};

/// Z = mean / sd over replicate statistics, two-sided normal p. A zero sd
/// gives p = 1 when the mean is 0 and p = 0 otherwise.
BootstrapResult bootstrap_z_test(const Eigen::VectorXd& replicates, Index j);

/// B resamples with replacement; refit; Z = mean / sd of the squared-gradient
/// statistic; two-sided normal p. Resample b uses stream derive_seed(seed, b)
/// and is independent of `workers`.
BootstrapResult bootstrap_test(const Dataset& data, const Architecture& arch, const FitConfig& recipe, Index B,
                               Index j, std::uint64_t seed, Index workers = 1);

/// Same replicates for every feature from a single set of B refits.
std::vector<BootstrapResult> bootstrap_test_all(const Dataset& data, const Architecture& arch,
                                                const FitConfig& recipe, Index B, std::uint64_t seed,
                                                Index workers = 1);

struct LrtResult {
  TestResult test;
  double rss_full = 0.0;
  double rss_restricted = 0.0;
};

/// Restricted fit first; the full fit starts from the restricted optimum and
/// keeps whichever of the two has lower RSS, so LR >= 0.
/// LR = n ln(RSS_restricted / RSS_full), df = number of pinned weights.
LrtResult likelihood_ratio_test(const Dataset& data, const Architecture& arch, const FitConfig& recipe, Index j);

/// Shares one unrestricted fit across all features.
std::vector<LrtResult> likelihood_ratio_test_all(const Dataset& data, const Architecture& arch,
                                                 const FitConfig& recipe);

}  // namespace nfbst
