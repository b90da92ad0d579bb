#include "nfbst/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nfbst {

namespace {

using Eigen::Index;

// Linear-interpolation quantile of an ascending sample.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& samples, const char* who) {
  if (!samples.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite samples");
}

// Beyond this many bandwidths exp(-d^2/2) underflows to exactly zero.
constexpr double kKernelReach = 38.7;

}  // namespace

std::optional<double> silverman_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& samples) {
  const Index m = samples.size();
  if (m < 2) throw std::invalid_argument("silverman_bandwidth: need at least 2 samples");
  require_finite(samples, "silverman_bandwidth");
  const double mean = samples.mean();
  const double sd = std::sqrt((samples.array() - mean).square().sum() / static_cast<double>(m - 1));
  std::vector<double> sorted(samples.data(), samples.data() + m);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) return std::nullopt;
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  if (!(spread > 0.0)) return std::nullopt;
  return 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
}

double kde_density(const KdeEstimate& est, double point) {
  const double h = est.bandwidth;
  const double sum = (-0.5 * ((point - est.samples.array()) / h).square()).exp().sum();
  return sum / (static_cast<double>(est.samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

EvidenceValue evidence(const Eigen::Ref<const Eigen::VectorXd>& samples) {
  const Index m = samples.size();
  if (m < 2) throw std::invalid_argument("evidence: need at least 2 samples");
  require_finite(samples, "evidence");

  EvidenceValue out;
  out.m_used = m;
  const std::optional<double> bandwidth = silverman_bandwidth(samples);
  if (!bandwidth) {
    out.ev = samples(0) == 0.0 ? 1.0 : 0.0;
    out.tie_count = samples(0) == 0.0 ? m : 0;
    return out;
  }
  const double inv_h = 1.0 / *bandwidth;

  // Unnormalized densities at every draw; the kernel matrix is symmetric and
  // sorted order lets each row stop where the kernel underflows.
  Eigen::ArrayXd sorted = samples.array() * inv_h;
  std::sort(sorted.data(), sorted.data() + m);
  Eigen::ArrayXd density = Eigen::ArrayXd::Ones(m);
  for (Index i = 0; i + 1 < m; ++i) {
    const double limit = sorted(i) + kKernelReach;
    const Index end = static_cast<Index>(std::upper_bound(sorted.data() + i + 1, sorted.data() + m, limit) -
                                         sorted.data());
    const Index len = end - i - 1;
    if (len == 0) continue;
    const Eigen::ArrayXd k = (-0.5 * (sorted.segment(i + 1, len) - sorted(i)).square()).exp();
    density(i) += k.sum();
    density.segment(i + 1, len) += k;
  }
  const double at_zero = (-0.5 * sorted.square()).exp().sum();

  Index above = 0;
  Index ties = 0;
  // A draw at exactly 0 has the density at 0 by definition; summation order
  // must not decide that tie.
  for (Index i = 0; i < m; ++i) {
    if (sorted(i) == 0.0) {
      ++ties;
    } else if (density(i) > at_zero) {
      ++above;
    } else if (density(i) == at_zero) {
      ++ties;
    }
  }
  out.ev = static_cast<double>(m - above) / static_cast<double>(m);
  out.tie_count = ties;
  return out;
}

double qgs(const Eigen::Ref<const Eigen::VectorXd>& evidences, double lambda) {
  const Index n = evidences.size();
  if (n == 0) throw std::invalid_argument("qgs: empty evidence vector");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("qgs: lambda must lie in (0, 1]");
  std::vector<double> sorted(evidences.data(), evidences.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // tolerate lambda * n landing a hair above an integer
  Index rank = static_cast<Index>(std::ceil(lambda * static_cast<double>(n) - 1e-9));
  rank = std::clamp<Index>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

}  // namespace nfbst
