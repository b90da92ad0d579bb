#pragma once

// Testing statistics eta(theta, .) for one parameter realization, and the
// m-draw posterior sample of a statistic.

#include "nfbst/bnn.hpp"
#include "nfbst/datagen.hpp"
#include "nfbst/net.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nfbst {

enum class StatisticKind { grad_instance, sqgrad_local, sqgrad_global, lrp, deeplift, lime };

std::string to_string(StatisticKind kind);
StatisticKind statistic_from_string(const std::string& name);

struct LimeConfig {
  Index num_perturbations = 500;
  /// Per-feature perturbation standard deviation; empty means 0.3 * the
  /// feature's standard deviation in the data context (or 0.3 without one).
  Eigen::VectorXd perturbation_sigma;
  /// Empty means 0.75 * sqrt(d).
  std::optional<double> kernel_width;
  double ridge_penalty = 1e-3;
  std::uint64_t seed = 0;
};

// --- single realization -----------------------------------------------------

/// d f(x) / d x_j.
double stat_grad_instance(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                          Index j);

/// Mean of (d f / d x_j)^2 over the rows of `subset`.
double stat_sqgrad_local(const Architecture& arch, const ParameterVector& params, const Eigen::MatrixXd& subset,
                         Index j);

/// stat_sqgrad_local over every row of the dataset.
double stat_sqgrad_global(const Architecture& arch, const ParameterVector& params, const Dataset& data, Index j);

/// epsilon-rule relevance for every input, starting from R = f(x) at the
/// output. Biases take no relevance.
Eigen::VectorXd lrp_relevance(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                              double epsilon = 1e-6);
double stat_lrp(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x, Index j,
                double epsilon = 1e-6);

/// Rescale-rule contributions; they sum to f(x) - f(reference).
Eigen::VectorXd deeplift_contributions(const Architecture& arch, const ParameterVector& params,
                                       const Eigen::VectorXd& x, const Eigen::VectorXd& reference);
double stat_deeplift(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& reference, Index j);

/// Weighted ridge surrogate around x; returns all feature coefficients.
Eigen::VectorXd lime_coefficients(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                                  const LimeConfig& config);
double stat_lime(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x, Index j,
                 const LimeConfig& config);

// --- batched over instances (rows of `rows`, result n x d) --------------------

Eigen::MatrixXd lrp_relevance_batch(const Architecture& arch, const ParameterVector& params,
                                    const Eigen::MatrixXd& rows, double epsilon = 1e-6);
Eigen::MatrixXd deeplift_contributions_batch(const Architecture& arch, const ParameterVector& params,
                                             const Eigen::MatrixXd& rows, const Eigen::VectorXd& reference);

// --- posterior samples ------------------------------------------------------

struct InstanceTarget {
  Eigen::VectorXd x;
};
struct SubsetTarget {
  std::vector<Index> rows;  // into the data context
};
struct DatasetTarget {};

using StatisticTarget = std::variant<InstanceTarget, SubsetTarget, DatasetTarget>;

struct StatisticQuery {
  StatisticKind kind = StatisticKind::grad_instance;
  Index feature = 0;
  StatisticTarget target = DatasetTarget{};
  /// DeepLIFT reference; empty means the data-context feature mean.
  Eigen::VectorXd reference;
  double lrp_epsilon = 1e-6;
  LimeConfig lime;
};

struct StatisticSample {
  Eigen::VectorXd values;  // values(i) is the statistic under draws[i]
  StatisticQuery query;
};

/// Error from one posterior draw, tagged with the draw index.
class StatisticError : public std::runtime_error {
 public:
  StatisticError(Index draw, const std::string& what);
  Index draw() const { return draw_; }

 private:
  Index draw_;
};

/// Throws std::invalid_argument when the query's target does not suit its
/// kind or indices are out of range.
void validate_query(const StatisticQuery& query, const Architecture& arch, const Dataset* context);

/// Applies the query's statistic once per posterior draw. `context` supplies
/// the rows for subset/dataset targets and defaults for DeepLIFT/LIME.
StatisticSample statistic_distribution(const PosteriorDraws& draws, const StatisticQuery& query,
                                       const Architecture& arch, const Dataset* context = nullptr);

/// Per-feature default DeepLIFT reference (column means).
Eigen::VectorXd feature_means(const Dataset& data);

/// 0.3 * column standard deviation.
Eigen::VectorXd default_lime_sigma(const Dataset& data);

/// Statistic of `kind` for every (draw, instance, feature) on a block of rows.
/// Result[j] is m x n: column i holds the posterior sample for instance i and
/// feature j. Supports grad_instance, lrp, deeplift (settings.reference must
/// be set) and lime. LIME for global row r under draw i is seeded with
/// derive_seed(derive_seed(settings.lime.seed, row_offset + r), i), matching
/// statistic_distribution for a query seeded derive_seed(seed, row).
std::vector<Eigen::MatrixXd> instance_statistic_samples(StatisticKind kind, const PosteriorDraws& draws,
                                                        const Architecture& arch, const Eigen::MatrixXd& rows,
                                                        const StatisticQuery& settings, Index row_offset = 0);

}  // namespace nfbst
