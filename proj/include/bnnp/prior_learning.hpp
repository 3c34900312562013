#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bnnp/datasets.hpp"
#include "bnnp/domain_losses.hpp"
#include "bnnp/optim.hpp"
#include "bnnp/variational.hpp"

namespace bnnp {

enum class Family { lowrank, diag };

std::string to_string(Family f);
Family parse_family(std::string_view s);

struct PriorTrainConfig {
  double tau = 1.0;
  double beta = 1.0;
  Index rank = 5;
  double jitter_sigma = 1e-3;
  double base_prior_variance = 1.0;
  int mc_samples = 4;
  double learning_rate = 1e-2;
  int epochs = 10;
  Index batch_size = 64;
  double init_scale = 0.1;
  Family family = Family::lowrank;
  std::uint64_t seed = 0;

  void validate() const;
};

using Variational = std::variant<LowRankGaussian, DiagGaussian>;

Variational init_variational(Index dim, const PriorTrainConfig& cfg, Rng& rng);
double kl_to_isotropic(const Variational& q, const IsotropicPrior& p);
ParamVector sample(const Variational& q, Rng& rng);

// Flat view of the trainable parameters: (mean, factors column-major) or (mean, log_std).
Vector pack(const Variational& q);
void unpack(const Vector& flat, Variational& q);

struct ElboGradient {
  double objective = 0.0;  // (1/S) sum_s [-sum_batch phi^2 / (2 tau^2)] - beta KL
  double kl = 0.0;
  double data_term = 0.0;
  bool phi_skipped = false;  // the batch was degenerate for the loss
  Vector grad;               // d objective / d pack(q)
};

// Batch sum of phi^2 at weights w; adds its gradient in w into *grad when
// non-null. Throws DegenerateBatch when the batch cannot be scored.
using PhiSquaresFn = std::function<double(const ParamVector& w, ParamVector* grad)>;

// Reparameterised Monte-Carlo estimate of the objective and its gradient.
ElboGradient elbo_gradient(const Variational& q, const PhiSquaresFn& phi_squares, const PriorTrainConfig& cfg,
                           Rng& rng);
ElboGradient elbo_gradient(const Variational& q, const Dataset& data, std::span<const Index> batch,
                           const DomainLoss& loss, const PriorTrainConfig& cfg, Rng& rng);

// Stateful optimiser of one variational distribution.
class PriorTrainer {
 public:
  PriorTrainer(Variational q, PriorTrainConfig cfg);

  // One Adam ascent step on a batch; returns the pre-step estimate.
  ElboGradient step(const Dataset& data, std::span<const Index> batch, const DomainLoss& loss, Rng& rng);
  ElboGradient step(const PhiSquaresFn& phi_squares, Rng& rng);

  const Variational& q() const noexcept { return q_; }
  const PriorTrainConfig& config() const noexcept { return cfg_; }

 private:
  ElboGradient apply(ElboGradient g);

  Variational q_;
  PriorTrainConfig cfg_;
  Adam adam_;
};

struct EpochStats {
  int epoch = 0;
  double objective = 0.0;  // mean step estimate over the epoch
  double kl = 0.0;         // at the end of the epoch
  double mean_phi = 0.0;   // phi of the mean weights on up to 256 rows
};

struct PriorTrainResult {
  Variational q;
  std::vector<EpochStats> curve;
};

// Full epoch loop over shuffled minibatches (stratified by group for the
// fairness loss); deterministic in cfg.seed.
PriorTrainResult train_prior(const Dataset& unlabeled, const DomainLoss& loss, const PriorTrainConfig& cfg);

std::string training_curve_csv(const std::vector<EpochStats>& curve);

struct SwagPriorConfig {
  int components = 1;
  int warmup_epochs = 5;
  int snapshot_interval_epochs = 5;
  int snapshots_per_component = 3;
  double learning_rate = 1e-3;
  Index batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  int total_epochs() const { return warmup_epochs + (snapshots_per_component - 1) * snapshot_interval_epochs; }
};

// Adam on sum_batch phi^2 / (2 tau^2) + ||w||^2 / (2 sigma_p^2) from a He
// initialisation per component, snapshots at the end of epochs warmup,
// warmup + interval, ...; each component becomes a SWAG Gaussian.
GaussianMixturePrior train_swag_prior(const Dataset& unlabeled, const DomainLoss& loss, const SwagPriorConfig& cfg,
                                      double tau, double base_prior_variance);

// Batch order of one epoch for a loss (stratified by group for fairness).
std::vector<std::vector<Index>> epoch_batches(const Dataset& data, const DomainLoss& loss, Index batch_size,
                                              Rng& rng);

}  // namespace bnnp
