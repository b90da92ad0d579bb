#include "nfbst/bnn.hpp"

#include "nfbst/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace nfbst {

void PriorSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mean)) {
    throw std::invalid_argument("prior: sigma must be positive and finite");
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd VariationalPosterior::stddev() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

void VariationalPosterior::validate(const Architecture& arch) const {
  detail::check_parameter_count(arch, mu.size());
  detail::check_parameter_count(arch, rho.size());
  if (!mu.allFinite() || !rho.allFinite()) {
    throw std::invalid_argument("variational posterior: non-finite parameters");
  }
  if ((stddev().array() <= 0.0).any()) {
    throw std::invalid_argument("variational posterior: standard deviation underflowed to zero");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (final_learning_rate && !(*final_learning_rate > 0.0)) {
    throw std::invalid_argument("train config: final_learning_rate must be positive");
  }
  if (mc_samples_per_step < 1) throw std::invalid_argument("train config: mc_samples_per_step must be positive");
  if (kl_scale && !(*kl_scale >= 0.0)) throw std::invalid_argument("train config: kl_scale must be non-negative");
  if (!(observation_sigma > 0.0)) throw std::invalid_argument("train config: observation_sigma must be positive");
}

double TrainConfig::resolved_kl_scale(Index rows) const {
  if (kl_scale) return *kl_scale;
  // the data term is a per-row mean, so the KL carries the matching 1/n
  return 1.0 / static_cast<double>(std::max<Index>(rows, 1));
}

double TrainConfig::learning_rate_at(Index epoch) const {
  if (!final_learning_rate || epochs < 2) return learning_rate;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return *final_learning_rate + 0.5 * (learning_rate - *final_learning_rate) * (1.0 + std::cos(std::numbers::pi * t));
}

double kl_diag_gaussians(const VariationalPosterior& post, const PriorSpec& prior) {
  if (post.mu.size() != post.rho.size()) {
    throw DimensionError("kl: rho length", post.mu.size(), post.rho.size());
  }
  if (!post.mu.allFinite() || !post.rho.allFinite() || !std::isfinite(prior.mean) || !std::isfinite(prior.sigma)) {
    throw std::invalid_argument("kl: non-finite input");
  }
  prior.validate();
  const Eigen::ArrayXd s = post.stddev().array();
  const double var_p = prior.sigma * prior.sigma;
  const Eigen::ArrayXd terms = std::log(prior.sigma) - s.log() +
                               (s.square() + (post.mu.array() - prior.mean).square()) / (2.0 * var_p) - 0.5;
  // Each term is >= 0 analytically; clamp rounding noise.
  return std::max(terms.sum(), 0.0);
}

namespace {

double kl_and_gradient(const VariationalPosterior& post, const PriorSpec& prior, double scale,
                       Eigen::VectorXd& gradient) {
  const Index p = post.size();
  const double var_p = prior.sigma * prior.sigma;
  const Eigen::ArrayXd s = post.stddev().array();
  const Eigen::ArrayXd dsd_rho = post.rho.unaryExpr([](double r) { return sigmoid(r); }).array();
  gradient.head(p).array() += scale * (post.mu.array() - prior.mean) / var_p;
  gradient.tail(p).array() += scale * (-1.0 / s + s / var_p) * dsd_rho;
  return scale * kl_diag_gaussians(post, prior);
}

double data_term(const Architecture& arch, const ParameterVector& theta, const Eigen::MatrixXd& rows,
                 const Eigen::VectorXd& targets, double sigma, Eigen::VectorXd* grad_theta) {
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  double mse = 0.0;
  if (grad_theta != nullptr) {
    *grad_theta = param_gradient<double>(arch, theta, rows, targets, Loss::mse, &mse);
    *grad_theta /= 2.0 * sigma * sigma;
  } else {
    mse = (forward_batch<double>(arch, theta, rows) - targets).squaredNorm() / static_cast<double>(rows.rows());
  }
  return log_norm + mse / (2.0 * sigma * sigma);
}

double elbo_impl(const VariationalPosterior& post, const PriorSpec& prior, const Architecture& arch,
                 const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, const TrainConfig& config,
                 double kl_scale, Rng& rng, Eigen::VectorXd* gradient) {
  if (rows.rows() == 0) throw std::invalid_argument("elbo: empty batch");
  post.validate(arch);
  const Index p = post.size();
  const Eigen::VectorXd s = post.stddev();
  const Eigen::ArrayXd dsd_rho = post.rho.unaryExpr([](double r) { return sigmoid(r); }).array();
  const double samples = static_cast<double>(config.mc_samples_per_step);

  if (gradient != nullptr) gradient->setZero(2 * p);
  double data = 0.0;
  Eigen::VectorXd grad_theta;
  for (Index k = 0; k < config.mc_samples_per_step; ++k) {
    const Eigen::VectorXd eps = standard_normal(p, rng);
    const ParameterVector theta = post.mu + s.cwiseProduct(eps);
    data += data_term(arch, theta, rows, targets, config.observation_sigma,
                      gradient != nullptr ? &grad_theta : nullptr);
    if (gradient != nullptr) {
      gradient->head(p) += grad_theta / samples;
      gradient->tail(p).array() += grad_theta.array() * eps.array() * dsd_rho / samples;
    }
  }
  data /= samples;

  if (gradient != nullptr) return data + kl_and_gradient(post, prior, kl_scale, *gradient);
  return data + kl_scale * kl_diag_gaussians(post, prior);
}

}  // namespace

double elbo_loss(const VariationalPosterior& post, const PriorSpec& prior, const Architecture& arch,
                 const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, const TrainConfig& config,
                 double kl_scale, Rng& rng) {
  return elbo_impl(post, prior, arch, rows, targets, config, kl_scale, rng, nullptr);
}

double elbo_loss_and_gradient(const VariationalPosterior& post, const PriorSpec& prior, const Architecture& arch,
                              const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets,
                              const TrainConfig& config, double kl_scale, Rng& rng, Eigen::VectorXd& gradient) {
  return elbo_impl(post, prior, arch, rows, targets, config, kl_scale, rng, &gradient);
}

VariationalPosterior initial_posterior(const Architecture& arch, double initial_rho, Rng& rng) {
  VariationalPosterior post;
  post.mu.resize(arch.parameter_count());
  for (Index l = 0; l < arch.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.fan_in(l)));
    std::uniform_real_distribution<double> init(-bound, bound);
    for (Index k = arch.weight_offset(l); k < arch.weight_offset(l + 1); ++k) post.mu(k) = init(rng);
  }
  post.rho = Eigen::VectorXd::Constant(arch.parameter_count(), initial_rho);
  return post;
}

TrainResult train(const Dataset& data, const Architecture& arch, const PriorSpec& prior, const TrainConfig& config) {
  arch.validate();
  prior.validate();
  config.validate();
  data.validate();
  if (data.dims() != arch.input_dim) throw DimensionError("train: feature count", arch.input_dim, data.dims());
  if (data.rows() < config.batch_size) {
    throw std::invalid_argument("train: dataset has fewer rows than batch_size");
  }

  Rng rng(config.seed);
  TrainResult result;
  result.posterior = initial_posterior(arch, config.initial_rho, rng);
  const Index p = arch.parameter_count();
  const Index n = data.rows();
  const Index batches = (n + config.batch_size - 1) / config.batch_size;
  const double kl_scale = config.resolved_kl_scale(n);

  Eigen::VectorXd state(2 * p);
  state << result.posterior.mu, result.posterior.rho;
  Adam adam(2 * p, config.learning_rate);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Eigen::MatrixXd rows;
  Eigen::VectorXd targets;
  Eigen::VectorXd gradient;
  result.epoch_losses.reserve(static_cast<std::size_t>(config.epochs));

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    adam.set_learning_rate(config.learning_rate_at(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Index b = 0; b < batches; ++b) {
      const Index begin = b * config.batch_size;
      const Index count = std::min(config.batch_size, n - begin);
      rows.resize(count, data.dims());
      targets.resize(count);
      for (Index k = 0; k < count; ++k) {
        const Index src = order[static_cast<std::size_t>(begin + k)];
        rows.row(k) = data.features.row(src);
        targets(k) = data.target(src);
      }
      result.posterior.mu = state.head(p);
      result.posterior.rho = state.tail(p);
      double loss = 0.0;
      try {
        loss = elbo_loss_and_gradient(result.posterior, prior, arch, rows, targets, config, kl_scale, rng, gradient);
      } catch (const std::invalid_argument& e) {
        throw TrainingError("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " +
                            e.what());
      }
      if (!std::isfinite(loss) || !gradient.allFinite()) {
        throw TrainingError("train: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
      }
      adam.step(state, gradient);
      total += loss;
    }
    result.epoch_losses.push_back(total / static_cast<double>(batches));
  }
  result.posterior.mu = state.head(p);
  result.posterior.rho = state.tail(p);
  return result;
}

PosteriorDraws sample_parameters(const VariationalPosterior& post, Index m, std::uint64_t seed) {
  if (m < 2) throw std::invalid_argument("sample_parameters: m must be at least 2");
  if (post.mu.size() != post.rho.size()) throw DimensionError("sample_parameters: rho length", post.mu.size(), post.rho.size());
  const Eigen::VectorXd s = post.stddev();
  PosteriorDraws out;
  out.source_seed = seed;
  out.draws.resize(post.size(), m);
  for (Index i = 0; i < m; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.draws.col(i) = post.mu + s.cwiseProduct(standard_normal(post.size(), rng));
  }
  return out;
}

Prediction predict(const VariationalPosterior& post, const Architecture& arch, const Eigen::VectorXd& x, Index m,
                   std::uint64_t seed) {
  post.validate(arch);
  detail::check_input(arch, x.size());
  const PosteriorDraws draws = sample_parameters(post, m, seed);
  Eigen::VectorXd outputs(m);
  for (Index i = 0; i < m; ++i) outputs(i) = forward<double>(arch, draws.draw(i), x);
  Prediction p;
  p.mean = outputs.mean();
  p.variance = (outputs.array() - p.mean).square().sum() / static_cast<double>(m - 1);
  return p;
}

namespace {

using nlohmann::json;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

void save_posterior(const PosteriorArtifact& artifact, const std::filesystem::path& path) {
  json j;
  j["format"] = "nfbst-posterior-v1";
  j["architecture"] = {{"input_dim", artifact.arch.input_dim},
                       {"hidden_widths", artifact.arch.hidden_widths},
                       {"activation", to_string(artifact.arch.activation)}};
  j["prior"] = {{"mean", artifact.prior.mean}, {"sigma", artifact.prior.sigma}};
  const TrainConfig& c = artifact.config;
  j["train_config"] = {{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"final_learning_rate", c.final_learning_rate ? json(*c.final_learning_rate) : json(nullptr)},
                       {"mc_samples_per_step", c.mc_samples_per_step},
                       {"kl_scale", c.kl_scale ? json(*c.kl_scale) : json(nullptr)},
                       {"observation_sigma", c.observation_sigma},
                       {"seed", c.seed},
                       {"initial_rho", c.initial_rho}};
  j["column_names"] = artifact.column_names;
  j["mu"] = to_std(artifact.posterior.mu);
  j["rho"] = to_std(artifact.posterior.rho);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write posterior to '" + path.string() + "'");
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

PosteriorArtifact load_posterior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open posterior '" + path.string() + "'");
  json j;
  try {
    in >> j;
    PosteriorArtifact a;
    const json& arch = j.at("architecture");
    a.arch.input_dim = arch.at("input_dim").get<Index>();
    a.arch.hidden_widths = arch.at("hidden_widths").get<std::vector<Index>>();
    a.arch.activation = activation_from_string(arch.at("activation").get<std::string>());
    a.prior.mean = j.at("prior").at("mean").get<double>();
    a.prior.sigma = j.at("prior").at("sigma").get<double>();
    const json& c = j.at("train_config");
    a.config.epochs = c.at("epochs").get<Index>();
    a.config.batch_size = c.at("batch_size").get<Index>();
    a.config.learning_rate = c.at("learning_rate").get<double>();
    a.config.final_learning_rate.reset();
    if (!c.at("final_learning_rate").is_null()) a.config.final_learning_rate = c.at("final_learning_rate").get<double>();
    a.config.mc_samples_per_step = c.at("mc_samples_per_step").get<Index>();
    if (!c.at("kl_scale").is_null()) a.config.kl_scale = c.at("kl_scale").get<double>();
    a.config.observation_sigma = c.at("observation_sigma").get<double>();
    a.config.seed = c.at("seed").get<std::uint64_t>();
    a.config.initial_rho = c.at("initial_rho").get<double>();
    a.column_names = j.at("column_names").get<std::vector<std::string>>();
    a.posterior.mu = from_std(j.at("mu").get<std::vector<double>>());
    a.posterior.rho = from_std(j.at("rho").get<std::vector<double>>());
    a.arch.validate();
    a.posterior.validate(a.arch);
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed posterior '" + path.string() + "': " + e.what());
  }
}

}  // namespace nfbst
