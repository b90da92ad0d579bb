#pragma once

// Mean-field Gaussian variational posterior over all network parameters:
// reparameterized ELBO training, posterior sampling, ensemble prediction,
// and JSON persistence.

#include "nfbst/datagen.hpp"
#include "nfbst/net.hpp"
#include "nfbst/random.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace nfbst {

/// Isotropic Gaussian prior N(mean, sigma^2) on every parameter.
struct PriorSpec {
  double mean = 0.0;
  double sigma = 1.0;

  void validate() const;
  friend bool operator==(const PriorSpec&, const PriorSpec&) = default;
};

/// q(theta) = prod_k N(mu_k, softplus(rho_k)^2).
struct VariationalPosterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;

  Index size() const { return mu.size(); }
  Eigen::VectorXd stddev() const;
  void validate(const Architecture& arch) const;
};

/// log(1 + exp(x)) without overflow.
double softplus(double x);

struct TrainConfig {
  Index epochs = 200;
  Index batch_size = 100;
  double learning_rate = 1e-2;
  /// Step size reached at the last epoch by cosine annealing; unset keeps
  /// learning_rate constant.
  std::optional<double> final_learning_rate = 1e-4;
  Index mc_samples_per_step = 1;
  /// Weight on the KL term per minibatch; unset means 1 / n, which makes the
  /// objective the per-row negative ELBO.
  std::optional<double> kl_scale;
  double observation_sigma = 1.0;
  std::uint64_t seed = 0;
  double initial_rho = -5.0;

  void validate() const;
  double resolved_kl_scale(Index rows) const;
  double learning_rate_at(Index epoch) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// m parameter draws stored as columns (parameter_count x m).
struct PosteriorDraws {
  Eigen::MatrixXd draws;
  std::uint64_t source_seed = 0;

  Index count() const { return draws.cols(); }
  ParameterVector draw(Index i) const { return draws.col(i); }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form KL(q || prior) summed over coordinates.
double kl_diag_gaussians(const VariationalPosterior& post, const PriorSpec& prior);

/// Monte Carlo negative ELBO on one minibatch: mean over
/// mc_samples_per_step reparameterized draws of the batch-mean Gaussian
/// negative log-likelihood, plus kl_scale * KL.
double elbo_loss(const VariationalPosterior& post, const PriorSpec& prior, const Architecture& arch,
                 const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, const TrainConfig& config,
                 double kl_scale, Rng& rng);

/// Same estimate plus its gradient w.r.t. (mu, rho), concatenated.
double elbo_loss_and_gradient(const VariationalPosterior& post, const PriorSpec& prior, const Architecture& arch,
                              const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets,
                              const TrainConfig& config, double kl_scale, Rng& rng, Eigen::VectorXd& gradient);

/// Fan-in scaled uniform means, constant rho.
VariationalPosterior initial_posterior(const Architecture& arch, double initial_rho, Rng& rng);

struct TrainResult {
  VariationalPosterior posterior;
  std::vector<double> epoch_losses;  // mean minibatch objective per epoch
};

/// Adam on the negative ELBO. Deterministic given config.seed.
TrainResult train(const Dataset& data, const Architecture& arch, const PriorSpec& prior, const TrainConfig& config);

/// theta_i = mu + softplus(rho) * eps_i; draw i uses stream (seed, i).
PosteriorDraws sample_parameters(const VariationalPosterior& post, Index m, std::uint64_t seed);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Monte Carlo posterior predictive mean and epistemic variance.
Prediction predict(const VariationalPosterior& post, const Architecture& arch, const Eigen::VectorXd& x, Index m,
                   std::uint64_t seed);

/// Everything needed to reuse a trained posterior.
struct PosteriorArtifact {
  Architecture arch;
  PriorSpec prior;
  TrainConfig config;
  VariationalPosterior posterior;
  std::vector<std::string> column_names;
};

void save_posterior(const PosteriorArtifact& artifact, const std::filesystem::path& path);
PosteriorArtifact load_posterior(const std::filesystem::path& path);

}  // namespace nfbst
