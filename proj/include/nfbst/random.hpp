#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace nfbst {

using Rng = std::mt19937_64;

/// Counter-based split: a well-mixed child seed for (seed, stream).
/// Children of distinct streams are independent for practical purposes,
/// so stages and workers can be re-run in isolation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Named stage streams derived from a master seed.
enum class SeedStream : std::uint64_t { data = 1, train = 2, sampling = 3, lime = 4, bootstrap = 5, lrt = 6 };

inline std::uint64_t stage_seed(std::uint64_t master, SeedStream stream) {
  return derive_seed(master, static_cast<std::uint64_t>(stream));
}

inline Eigen::VectorXd standard_normal(Eigen::Index size, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = normal(rng);
  return out;
}

inline Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> uniform(lo, hi);
  Eigen::MatrixXd out(rows, cols);
  // row-major fill so row i depends only on the first i rows drawn
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = uniform(rng);
  return out;
}

}  // namespace nfbst
