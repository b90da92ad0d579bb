#pragma once

// Synthetic regression data (additive toy process, random teacher networks),
// eps-thresholded instance-wise ground truth, and CSV ingest/export.

#include "nfbst/net.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nfbst {

enum class Provenance { toy, teacher, csv };

std::string to_string(Provenance p);

struct Dataset {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd target;    // n
  std::vector<std::string> column_names;
  Provenance provenance = Provenance::csv;

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }

  /// Throws std::invalid_argument when shapes disagree or values are NaN.
  void validate() const;

  /// Rows selected by index, provenance and names kept.
  Dataset subset(const std::vector<Index>& indices) const;
};

/// Noiseless toy response
///   8 + x0^2 + x1 x2 + cos(x3) + exp(x4 x5) + 0.1 x6 + 0 x7.
double toy_response(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Analytic gradient of toy_response.
Eigen::VectorXd toy_gradient(const Eigen::Ref<const Eigen::VectorXd>& x);

inline constexpr Index kToyDims = 8;

/// X ~ U(-1,1)^8, y = toy_response(X) + N(0, noise_sigma^2).
Dataset gen_toy(Index n, std::uint64_t seed, double noise_sigma = 1.0);

struct TeacherSpec {
  Architecture arch;
  ParameterVector params;
  Index significant_count = 0;
  double noise_sigma = 0.1;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Random ReLU teacher with first-layer weight columns >= significant_count
/// set to zero. Weights and biases are U(-1/sqrt(fan_in), 1/sqrt(fan_in));
/// if the teacher output standard deviation over the sample falls outside
/// [0.5, 5] the output layer is rescaled to unit standard deviation.
std::pair<Dataset, TeacherSpec> gen_teacher(Index n, Index d, Index significant_count,
                                            const std::vector<Index>& hidden_widths, double noise_sigma,
                                            std::uint64_t seed);

struct GroundTruthLabels {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> instance_labels;  // n x d, true = significant
  double eps = 0.0;
};

/// label(i, j) = |d teacher(x_i) / d x_j| >= eps.
GroundTruthLabels label_instance_significance(const TeacherSpec& teacher, const Dataset& data, double eps);

/// Same rule applied to a precomputed n x d gradient matrix.
GroundTruthLabels label_from_gradients(const Eigen::MatrixXd& gradients, double eps);

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric CSV with a header row; `target_column` becomes Dataset::target.
Dataset ingest_csv(const std::filesystem::path& path, const std::string& target_column);

/// Writes feature columns followed by a `target` column (or `target_name`).
void write_csv(const Dataset& data, const std::filesystem::path& path, const std::string& target_name = "y");

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of a full field; throws std::invalid_argument otherwise.
double parse_double(std::string_view field);

}  // namespace nfbst
