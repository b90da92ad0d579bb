#include "nfbst/baselines.hpp"

#include "nfbst/optim.hpp"
#include "nfbst/random.hpp"
#include "nfbst/stats.hpp"

#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace nfbst {

namespace {

double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

double two_sided_normal(double z) { return clamp_probability(2.0 * normal_sf(std::abs(z))); }

}  // namespace

double normal_sf(double z) {
  if (std::isnan(z)) throw std::invalid_argument("normal_sf: NaN argument");
  if (std::isinf(z)) return z > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
}

double student_t_sf(double t, double df) {
  if (std::isnan(t)) throw std::invalid_argument("student_t_sf: NaN argument");
  if (!(df >= 1.0)) throw std::invalid_argument("student_t_sf: df must be >= 1");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), t));
}

double chi2_sf(double x, double df) {
  if (std::isnan(x)) throw std::invalid_argument("chi2_sf: NaN argument");
  if (!(df >= 1.0)) throw std::invalid_argument("chi2_sf: df must be >= 1");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::ttest: return "ttest";
    case BaselineKind::bootstrap: return "bootstrap";
    case BaselineKind::lrt: return "lrt";
  }
  return "?";
}

BaselineKind baseline_from_string(const std::string& name) {
  if (name == "ttest") return BaselineKind::ttest;
  if (name == "bootstrap") return BaselineKind::bootstrap;
  if (name == "lrt") return BaselineKind::lrt;
  throw std::invalid_argument("unknown baseline '" + name + "' (expected ttest, bootstrap or lrt)");
}

// --- linear model ------------------------------------------------------------

LinearFit ols_fit(const Dataset& data) {
  data.validate();
  const Index n = data.rows();
  const Index d = data.dims();
  if (n <= d + 1) throw std::invalid_argument("ols_fit: need n > d + 1 rows");

  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = data.features;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < d + 1) {
    // pivots past the rank are combinations of the earlier ones
    std::vector<std::string> names;
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = qr.rank(); k < d + 1; ++k) {
      const Index c = perm(k);
      if (c == 0) {
        names.emplace_back("(intercept)");
      } else {
        const auto idx = static_cast<std::size_t>(c - 1);
        names.push_back(idx < data.column_names.size() ? data.column_names[idx] : "x" + std::to_string(c - 1));
      }
    }
    std::sort(names.begin(), names.end());
    std::string list;
    for (const auto& s : names) list += (list.empty() ? "" : ", ") + s;
    throw RankDeficientError("ols_fit: design matrix is rank deficient; dependent columns: " + list, names);
  }

  LinearFit fit;
  fit.n = n;
  fit.d = d;
  fit.coefficients = qr.solve(data.target);
  const Eigen::VectorXd residual = data.target - design * fit.coefficients;
  fit.residual_variance = residual.squaredNorm() / static_cast<double>(n - d - 1);

  // (X'X)^{-1} = R^{-1} R^{-T} in pivoted coordinates
  const Eigen::MatrixXd r =
      qr.matrixR().topLeftCorner(d + 1, d + 1).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d + 1, d + 1));
  const Eigen::VectorXd pivoted_diag = r_inv.rowwise().squaredNorm();
  fit.standard_errors.resize(d + 1);
  const auto& perm = qr.colsPermutation().indices();
  for (Index k = 0; k < d + 1; ++k) {
    fit.standard_errors(perm(k)) = std::sqrt(pivoted_diag(k) * fit.residual_variance);
  }
  return fit;
}

TestResult ttest_linear(const LinearFit& fit, Index j) {
  if (j < 0 || j >= fit.d) throw std::out_of_range("ttest_linear: feature index out of range");
  TestResult out;
  out.method = BaselineKind::ttest;
  out.feature_index = j;
  out.df = static_cast<double>(fit.n - fit.d - 1);
  const double se = fit.standard_errors(j + 1);
  const double beta = fit.coefficients(j + 1);
  if (se == 0.0) {
    // exact fit: the coefficient is known without error
    out.statistic = beta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), beta);
    out.p_value = beta == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.statistic = beta / se;
  out.p_value = clamp_probability(2.0 * student_t_sf(std::abs(out.statistic), out.df));
  return out;
}

TestResult ttest_linear(const Dataset& data, Index j) { return ttest_linear(ols_fit(data), j); }

// --- deterministic network ----------------------------------------------------

void FitConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("fit: learning_rate must be positive");
}

ParameterMask feature_mask(const Architecture& arch, Index j) {
  if (j < 0 || j >= arch.input_dim) throw std::out_of_range("feature_mask: feature index out of range");
  ParameterMask mask = ParameterMask::Ones(arch.parameter_count());
  for (Index u = 0; u < arch.fan_out(0); ++u) mask(arch.weight_index(0, u, j)) = 0.0;
  return mask;
}

double residual_sum_squares(const Architecture& arch, const ParameterVector& params, const Dataset& data) {
  const Eigen::VectorXd pred = forward_batch<double>(arch, params, data.features);
  return (pred - data.target).squaredNorm();
}

ParameterVector fit_network(const Dataset& data, const Architecture& arch, const FitConfig& config,
                            const ParameterMask* mask, const ParameterVector* init) {
  arch.validate();
  config.validate();
  if (data.dims() != arch.input_dim) throw DimensionError("fit_network: feature count", arch.input_dim, data.dims());
  const Index p = arch.parameter_count();
  if (mask && mask->size() != p) throw DimensionError("fit_network: mask length", p, mask->size());
  Rng rng(config.seed);

  ParameterVector params(p);
  if (init) {
    check_parameters(arch, *init);
    params = *init;
  } else {
    for (Index l = 0; l < arch.layer_count(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(arch.fan_in(l)));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Index k = arch.weight_offset(l); k < arch.weight_offset(l + 1); ++k) params(k) = u(rng);
    }
  }
  if (mask) params.array() *= mask->array();

  const Index n = data.rows();
  const Index batch = std::min(config.batch_size, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  Adam adam(p, config.learning_rate);
  ParameterVector best = params;
  double best_rss = residual_sum_squares(arch, params, data);
  Eigen::MatrixXd rows(batch, data.dims());
  Eigen::VectorXd targets(batch);
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      rows.resize(len, data.dims());
      targets.resize(len);
      for (Index r = 0; r < len; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        rows.row(r) = data.features.row(src);
        targets(r) = data.target(src);
      }
      Eigen::VectorXd grad = param_gradient<double>(arch, params, rows, targets, Loss::mse, nullptr);
      if (mask) grad.array() *= mask->array();
      adam.step(params, grad);
      if (mask) params.array() *= mask->array();
    }
    const double rss = residual_sum_squares(arch, params, data);
    if (!std::isfinite(rss)) {
      throw std::runtime_error("fit_network: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (rss < best_rss) {
      best_rss = rss;
      best = params;
    }
  }
  return best;
}

// --- bootstrap ----------------------------------------------------------------

namespace {

Eigen::MatrixXd bootstrap_replicates(const Dataset& data, const Architecture& arch, const FitConfig& recipe, Index B,
                                     std::uint64_t seed, Index workers) {
  if (B < 20) throw std::invalid_argument("bootstrap_test: B must be >= 20");
  recipe.validate();
  const Index n = data.rows();
  const Index d = data.dims();
  Eigen::MatrixXd stats(B, d);

  auto run_one = [&](Index b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = pick(rng);
    const Dataset resample = data.subset(idx);
    FitConfig cfg = recipe;
    cfg.seed = derive_seed(seed ^ 0xB0075EEDULL, static_cast<std::uint64_t>(b));
    const ParameterVector params = fit_network(resample, arch, cfg);
    // the statistic is evaluated on the original sample's empirical measure
    const Eigen::MatrixXd g = input_gradient_batch<double>(arch, params, data.features);
    stats.row(b) = g.array().square().colwise().mean();
  };

  const Index w = std::clamp<Index>(workers, 1, B);
  if (w == 1) {
    for (Index b = 0; b < B; ++b) run_one(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
    for (Index t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (Index b = t; b < B; b += w) run_one(b);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return stats;
}


}  // namespace

BootstrapResult bootstrap_z_test(const Eigen::VectorXd& values, Index j) {
  if (values.size() < 2) throw std::invalid_argument("bootstrap_z_test: need at least 2 replicates");
  BootstrapResult out;
  out.replicates = values;
  out.test.method = BaselineKind::bootstrap;
  out.test.feature_index = j;
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / static_cast<double>(values.size() - 1);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) {
    out.test.statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.test.p_value = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.test.statistic = mean / sd;
  out.test.p_value = two_sided_normal(out.test.statistic);
  return out;
}

BootstrapResult bootstrap_test(const Dataset& data, const Architecture& arch, const FitConfig& recipe, Index B,
                               Index j, std::uint64_t seed, Index workers) {
  if (j < 0 || j >= data.dims()) throw std::out_of_range("bootstrap_test: feature index out of range");
  const Eigen::MatrixXd stats = bootstrap_replicates(data, arch, recipe, B, seed, workers);
  return bootstrap_z_test(stats.col(j), j);
}

std::vector<BootstrapResult> bootstrap_test_all(const Dataset& data, const Architecture& arch,
                                                const FitConfig& recipe, Index B, std::uint64_t seed,
                                                Index workers) {
  const Eigen::MatrixXd stats = bootstrap_replicates(data, arch, recipe, B, seed, workers);
  std::vector<BootstrapResult> out;
  for (Index j = 0; j < data.dims(); ++j) out.push_back(bootstrap_z_test(stats.col(j), j));
  return out;
}

// --- likelihood ratio ------------------------------------------------------------

namespace {

LrtResult lrt_from(double rss_full, double rss_restricted, Index n, Index df, Index j) {
  if (!(rss_full > 0.0)) {
    throw std::runtime_error("likelihood_ratio_test: full model fits the data exactly (RSS = 0); statistic undefined");
  }
  LrtResult out;
  out.rss_full = rss_full;
  out.rss_restricted = rss_restricted;
  out.test.method = BaselineKind::lrt;
  out.test.feature_index = j;
  out.test.df = static_cast<double>(df);
  out.test.statistic = std::max(0.0, static_cast<double>(n) * std::log(rss_restricted / rss_full));
  out.test.p_value = clamp_probability(chi2_sf(out.test.statistic, out.test.df));
  return out;
}

}  // namespace

LrtResult likelihood_ratio_test(const Dataset& data, const Architecture& arch, const FitConfig& recipe, Index j) {
  if (j < 0 || j >= data.dims()) throw std::out_of_range("likelihood_ratio_test: feature index out of range");
  if (data.rows() < 2) throw std::invalid_argument("likelihood_ratio_test: need at least 2 rows");
  const ParameterMask mask = feature_mask(arch, j);
  const ParameterVector restricted = fit_network(data, arch, recipe, &mask);
  const double rss_r = residual_sum_squares(arch, restricted, data);
  const ParameterVector full = fit_network(data, arch, recipe, nullptr, &restricted);
  const double rss_f = std::min(rss_r, residual_sum_squares(arch, full, data));
  return lrt_from(rss_f, rss_r, data.rows(), arch.fan_out(0), j);
}

std::vector<LrtResult> likelihood_ratio_test_all(const Dataset& data, const Architecture& arch,
                                                 const FitConfig& recipe) {
  if (data.rows() < 2) throw std::invalid_argument("likelihood_ratio_test: need at least 2 rows");
  const ParameterVector full = fit_network(data, arch, recipe);
  const double rss_full = residual_sum_squares(arch, full, data);
  std::vector<LrtResult> out;
  for (Index j = 0; j < data.dims(); ++j) {
    const ParameterMask mask = feature_mask(arch, j);
    FitConfig cfg = recipe;
    cfg.seed = derive_seed(recipe.seed, static_cast<std::uint64_t>(j));
    // warm start from the full optimum with column j removed
    ParameterVector start = full.array() * mask.array();
    const ParameterVector restricted = fit_network(data, arch, cfg, &mask, &start);
    const double rss_r = residual_sum_squares(arch, restricted, data);
    // the restricted optimum is admissible in the full model
    out.push_back(lrt_from(std::min(rss_full, rss_r), rss_r, data.rows(), arch.fan_out(0), j));
  }
  return out;
}

}  // namespace nfbst
