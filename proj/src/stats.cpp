#include "nfbst/stats.hpp"

#include "nfbst/random.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace nfbst {

std::string to_string(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::grad_instance:
      return "grad";
    case StatisticKind::sqgrad_local:
      return "sqgrad_local";
    case StatisticKind::sqgrad_global:
      return "sqgrad_global";
    case StatisticKind::lrp:
      return "lrp";
    case StatisticKind::deeplift:
      return "deeplift";
    case StatisticKind::lime:
      return "lime";
  }
  return "unknown";
}

StatisticKind statistic_from_string(const std::string& name) {
  if (name == "grad" || name == "grad_instance") return StatisticKind::grad_instance;
  if (name == "sqgrad_local") return StatisticKind::sqgrad_local;
  if (name == "sqgrad_global") return StatisticKind::sqgrad_global;
  if (name == "lrp") return StatisticKind::lrp;
  if (name == "deeplift") return StatisticKind::deeplift;
  if (name == "lime") return StatisticKind::lime;
  throw std::invalid_argument("unknown statistic '" + name + "'");
}

namespace {

void check_feature(const Architecture& arch, Index j) {
  if (j < 0 || j >= arch.input_dim) {
    throw std::out_of_range("feature index " + std::to_string(j) + " outside [0, " +
                            std::to_string(arch.input_dim) + ")");
  }
}

// z + eps * sign(z), with sign(0) taken as +1.
template <typename Derived>
auto stabilized(const Eigen::ArrayBase<Derived>& z, double epsilon) {
  return z + epsilon * (z >= 0.0).template cast<double>() * 2.0 - epsilon;
}

constexpr double kRescaleFallback = 1e-7;

}  // namespace

double stat_grad_instance(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                          Index j) {
  check_feature(arch, j);
  return input_gradient<double>(arch, params, x)(j);
}

double stat_sqgrad_local(const Architecture& arch, const ParameterVector& params, const Eigen::MatrixXd& subset,
                         Index j) {
  check_feature(arch, j);
  if (subset.rows() == 0) throw std::invalid_argument("stat_sqgrad_local: empty subset");
  return input_gradient_batch<double>(arch, params, subset).col(j).squaredNorm() /
         static_cast<double>(subset.rows());
}

double stat_sqgrad_global(const Architecture& arch, const ParameterVector& params, const Dataset& data, Index j) {
  return stat_sqgrad_local(arch, params, data.features, j);
}

Eigen::MatrixXd lrp_relevance_batch(const Architecture& arch, const ParameterVector& params,
                                    const Eigen::MatrixXd& rows, double epsilon) {
  BatchTrace<double> trace;
  Eigen::MatrixXd relevance = forward_batch<double>(arch, params, rows, trace).transpose();
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    const Eigen::MatrixXd scaled = relevance.array() / stabilized(trace.pre_activations[l].array(), epsilon);
    relevance = trace.inputs[l].array() * (layer_weights(arch, params, l).transpose() * scaled).array();
  }
  return relevance.transpose();
}

Eigen::VectorXd lrp_relevance(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                              double epsilon) {
  ForwardTrace<double> trace;
  Eigen::VectorXd relevance = Eigen::VectorXd::Constant(1, forward<double>(arch, params, x, trace));
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    const Eigen::VectorXd scaled = relevance.array() / stabilized(trace.pre_activations[l].array(), epsilon);
    relevance = trace.inputs[l].array() * (layer_weights(arch, params, l).transpose() * scaled).array();
  }
  return relevance;
}

double stat_lrp(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x, Index j,
                double epsilon) {
  check_feature(arch, j);
  return lrp_relevance(arch, params, x, epsilon)(j);
}

Eigen::MatrixXd deeplift_contributions_batch(const Architecture& arch, const ParameterVector& params,
                                             const Eigen::MatrixXd& rows, const Eigen::VectorXd& reference) {
  if (reference.size() != arch.input_dim) {
    throw DimensionError("deeplift: reference dimension", arch.input_dim, reference.size());
  }
  BatchTrace<double> trace;
  forward_batch<double>(arch, params, rows, trace);
  ForwardTrace<double> ref;
  forward<double>(arch, params, reference, ref);

  Eigen::MatrixXd multiplier = Eigen::MatrixXd::Ones(1, rows.rows());
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    Eigen::MatrixXd upstream = layer_weights(arch, params, l).transpose() * multiplier;
    if (l > 0) {
      const Eigen::ArrayXXd z = trace.pre_activations[l - 1].array();
      const Eigen::ArrayXXd dz = z.colwise() - ref.pre_activations[l - 1].array();
      const Eigen::ArrayXXd da = trace.inputs[l].array().colwise() - ref.inputs[l].array();
      const Eigen::ArrayXXd slope = detail::activate_derivative_array(arch.activation, z);
      const Eigen::ArrayXXd rescale = (dz.abs() < kRescaleFallback).select(slope, da / dz);
      upstream.array() *= rescale;
    }
    multiplier = std::move(upstream);
  }
  const Eigen::MatrixXd delta = rows.rowwise() - reference.transpose();
  return multiplier.transpose().cwiseProduct(delta);
}

Eigen::VectorXd deeplift_contributions(const Architecture& arch, const ParameterVector& params,
                                       const Eigen::VectorXd& x, const Eigen::VectorXd& reference) {
  detail::check_input(arch, x.size());
  return deeplift_contributions_batch(arch, params, x.transpose(), reference).row(0).transpose();
}

double stat_deeplift(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& reference, Index j) {
  check_feature(arch, j);
  if (reference.size() != x.size()) throw DimensionError("deeplift: reference dimension", x.size(), reference.size());
  return deeplift_contributions(arch, params, x, reference)(j);
}

Eigen::VectorXd lime_coefficients(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x,
                                  const LimeConfig& config) {
  detail::check_input(arch, x.size());
  const Index d = arch.input_dim;
  const Index k = config.num_perturbations;
  if (k < 1) throw std::invalid_argument("lime: num_perturbations must be positive");
  if (!(config.ridge_penalty >= 0.0)) throw std::invalid_argument("lime: ridge_penalty must be non-negative");
  Eigen::VectorXd sigma = config.perturbation_sigma;
  if (sigma.size() == 0) sigma = Eigen::VectorXd::Constant(d, 0.3);
  if (sigma.size() != d) throw DimensionError("lime: perturbation_sigma length", d, sigma.size());
  const double width = config.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(d)));

  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd offsets(k, d);
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < d; ++c) offsets(r, c) = sigma(c) * normal(rng);

  const Eigen::VectorXd outputs = forward_batch<double>(arch, params, offsets.rowwise() + x.transpose());
  const Eigen::ArrayXd weights = (-offsets.rowwise().squaredNorm().array() / (width * width)).exp();

  Eigen::MatrixXd design(k, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = offsets;
  Eigen::MatrixXd normal_matrix = design.transpose() * (design.array().colwise() * weights).matrix();
  normal_matrix.diagonal().tail(d).array() += config.ridge_penalty;
  const Eigen::VectorXd rhs = design.transpose() * (outputs.array() * weights).matrix();

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal_matrix);
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !(pivots.minCoeff() > 1e-12 * std::max(pivots.maxCoeff(), 1e-300))) {
    throw std::runtime_error("lime: singular surrogate regression (degenerate perturbations)");
  }
  return ldlt.solve(rhs).tail(d);
}

double stat_lime(const Architecture& arch, const ParameterVector& params, const Eigen::VectorXd& x, Index j,
                 const LimeConfig& config) {
  check_feature(arch, j);
  return lime_coefficients(arch, params, x, config)(j);
}

StatisticError::StatisticError(Index draw, const std::string& what)
    : std::runtime_error("posterior draw " + std::to_string(draw) + ": " + what), draw_(draw) {}

Eigen::VectorXd feature_means(const Dataset& data) { return data.features.colwise().mean().transpose(); }

Eigen::VectorXd default_lime_sigma(const Dataset& data) {
  const Index n = data.rows();
  const Eigen::RowVectorXd mean = data.features.colwise().mean();
  const double denom = static_cast<double>(std::max<Index>(n - 1, 1));
  return 0.3 * ((data.features.rowwise() - mean).colwise().squaredNorm().array() / denom).sqrt().transpose();
}

void validate_query(const StatisticQuery& query, const Architecture& arch, const Dataset* context) {
  check_feature(arch, query.feature);
  const bool instance = std::holds_alternative<InstanceTarget>(query.target);
  const bool subset = std::holds_alternative<SubsetTarget>(query.target);
  const bool whole = std::holds_alternative<DatasetTarget>(query.target);
  switch (query.kind) {
    case StatisticKind::grad_instance:
    case StatisticKind::lrp:
    case StatisticKind::deeplift:
    case StatisticKind::lime:
      if (!instance) throw std::invalid_argument(to_string(query.kind) + " needs an instance target");
      detail::check_input(arch, std::get<InstanceTarget>(query.target).x.size());
      break;
    case StatisticKind::sqgrad_local:
      if (!subset) throw std::invalid_argument("sqgrad_local needs a subset target");
      break;
    case StatisticKind::sqgrad_global:
      if (!whole) throw std::invalid_argument("sqgrad_global needs the whole-dataset target");
      break;
  }
  if ((subset || whole) && context == nullptr) {
    throw std::invalid_argument(to_string(query.kind) + " needs a data context");
  }
  if (subset) {
    const auto& rows = std::get<SubsetTarget>(query.target).rows;
    if (rows.empty()) throw std::invalid_argument("sqgrad_local: empty subset");
    for (Index r : rows) {
      if (r < 0 || r >= context->rows()) throw std::out_of_range("subset row " + std::to_string(r) + " out of range");
    }
  }
  if (context != nullptr) detail::check_input(arch, context->dims());
  if (query.kind == StatisticKind::deeplift && query.reference.size() == 0 && context == nullptr) {
    throw std::invalid_argument("deeplift needs a reference or a data context");
  }
}

StatisticSample statistic_distribution(const PosteriorDraws& draws, const StatisticQuery& query,
                                       const Architecture& arch, const Dataset* context) {
  validate_query(query, arch, context);
  const Index m = draws.count();
  StatisticSample sample;
  sample.query = query;
  sample.values.resize(m);

  Eigen::MatrixXd subset_rows;
  if (const auto* s = std::get_if<SubsetTarget>(&query.target)) {
    subset_rows.resize(static_cast<Index>(s->rows.size()), context->dims());
    for (std::size_t k = 0; k < s->rows.size(); ++k) subset_rows.row(static_cast<Index>(k)) = context->features.row(s->rows[k]);
  }
  Eigen::VectorXd reference = query.reference;
  if (query.kind == StatisticKind::deeplift && reference.size() == 0) reference = feature_means(*context);
  LimeConfig lime = query.lime;
  if (query.kind == StatisticKind::lime && lime.perturbation_sigma.size() == 0 && context != nullptr) {
    lime.perturbation_sigma = default_lime_sigma(*context);
  }

  for (Index i = 0; i < m; ++i) {
    const ParameterVector theta = draws.draw(i);
    try {
      double value = 0.0;
      switch (query.kind) {
        case StatisticKind::grad_instance:
          value = stat_grad_instance(arch, theta, std::get<InstanceTarget>(query.target).x, query.feature);
          break;
        case StatisticKind::sqgrad_local:
          value = stat_sqgrad_local(arch, theta, subset_rows, query.feature);
          break;
        case StatisticKind::sqgrad_global:
          value = stat_sqgrad_global(arch, theta, *context, query.feature);
          break;
        case StatisticKind::lrp:
          value = stat_lrp(arch, theta, std::get<InstanceTarget>(query.target).x, query.feature, query.lrp_epsilon);
          break;
        case StatisticKind::deeplift:
          value = stat_deeplift(arch, theta, std::get<InstanceTarget>(query.target).x, reference, query.feature);
          break;
        case StatisticKind::lime: {
          LimeConfig per_draw = lime;
          per_draw.seed = derive_seed(lime.seed, static_cast<std::uint64_t>(i));
          value = stat_lime(arch, theta, std::get<InstanceTarget>(query.target).x, query.feature, per_draw);
          break;
        }
      }
      if (!std::isfinite(value)) throw std::runtime_error("non-finite statistic");
      sample.values(i) = value;
    } catch (const std::exception& e) {
      throw StatisticError(i, e.what());
    }
  }
  return sample;
}

std::vector<Eigen::MatrixXd> instance_statistic_samples(StatisticKind kind, const PosteriorDraws& draws,
                                                        const Architecture& arch, const Eigen::MatrixXd& rows,
                                                        const StatisticQuery& settings, Index row_offset) {
  detail::check_input(arch, rows.cols());
  const Index m = draws.count();
  const Index n = rows.rows();
  const Index d = rows.cols();
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(d), Eigen::MatrixXd(m, n));
  if (kind == StatisticKind::deeplift && settings.reference.size() != d) {
    throw DimensionError("deeplift: reference dimension", d, settings.reference.size());
  }

  Eigen::MatrixXd block(n, d);
  for (Index i = 0; i < m; ++i) {
    const ParameterVector theta = draws.draw(i);
    try {
      switch (kind) {
        case StatisticKind::grad_instance:
          block = input_gradient_batch<double>(arch, theta, rows);
          break;
        case StatisticKind::lrp:
          block = lrp_relevance_batch(arch, theta, rows, settings.lrp_epsilon);
          break;
        case StatisticKind::deeplift:
          block = deeplift_contributions_batch(arch, theta, rows, settings.reference);
          break;
        case StatisticKind::lime:
          for (Index r = 0; r < n; ++r) {
            LimeConfig cfg = settings.lime;
            cfg.seed = derive_seed(derive_seed(settings.lime.seed, static_cast<std::uint64_t>(row_offset + r)),
                                   static_cast<std::uint64_t>(i));
            block.row(r) = lime_coefficients(arch, theta, rows.row(r).transpose(), cfg).transpose();
          }
          break;
        case StatisticKind::sqgrad_local:
        case StatisticKind::sqgrad_global:
          throw std::invalid_argument(to_string(kind) + " is not an instance-wise statistic");
      }
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw StatisticError(i, e.what());
    }
    if (!block.allFinite()) throw StatisticError(i, "non-finite statistic");
    for (Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)].row(i) = block.col(j).transpose();
  }
  return out;
}

}  // namespace nfbst
