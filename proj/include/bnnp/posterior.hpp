#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bnnp/datasets.hpp"
#include "bnnp/domain_losses.hpp"
#include "bnnp/ensemble.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/variational.hpp"

namespace bnnp {

enum class LikelihoodKind { categorical, bernoulli, gaussian };

std::string to_string(LikelihoodKind k);
LikelihoodKind parse_likelihood(std::string_view s);
// Natural likelihood of a network head: softmax -> categorical, sigmoid -> bernoulli, identity -> gaussian.
LikelihoodKind likelihood_for(OutputHead head);

// log p(y | h) per row and its gradient in the pre-head output h.
double log_likelihood(LikelihoodKind kind, double noise_variance, const Vector& h, VectorRef y, Vector* dlog_dh);

struct SgldConfig {
  double step_size = 1e-4;
  int epochs = 20;
  Index batch_size = 64;
  int n_samples = 5;
  int burnin_epochs = -1;  // -1: half the epochs
  int thin_epochs = -1;    // -1: remaining epochs spread evenly over the samples
  double prior_weight = 1.0;
  LikelihoodKind likelihood = LikelihoodKind::gaussian;
  double noise_variance = 1.0;
  Index dataset_size = 0;  // 0: rows of the training data
  bool inject_noise = true;
  std::uint64_t seed = 0;

  void validate() const;
  int resolved_burnin() const;
  int resolved_thin() const;
};

// w + (eps/2) [(N/B) grad log p(batch | w) + prior_weight grad log prior(w)] + N(0, eps I).
ParamVector sgld_step(const Mlp& net, const ParamVector& w, const Dataset& data, std::span<const Index> batch,
                      const PriorDensity& prior, const SgldConfig& cfg, Rng& rng);

// Starts at a prior draw and keeps n_samples weights thin epochs apart after burn-in.
Ensemble sgld_sample(const Dataset& data, const ArchSpec& arch, const Prior& prior, const SgldConfig& cfg);

// One sgld_sample chain per mixture component (other priors: one chain), pooled.
Ensemble sgld_sample_components(const Dataset& data, const ArchSpec& arch, const Prior& prior,
                                const SgldConfig& cfg);

// SWAG statistics of a sequence of weight snapshots.
struct SwagMoments {
  Vector mean;
  Vector second_moment;
  Matrix deviations;  // n x k: snapshot minus final mean, one column per snapshot
  Index count = 0;

  Vector variance() const;  // max(E[w^2] - mean^2, floor)
};

inline constexpr double kSwagVarianceFloor = 1e-8;

SwagMoments swag_collect(const std::vector<ParamVector>& snapshots);

// Covariance diag/2 + D D^T / (2 (k - 1)) stored as LowRankGaussian{diag = var/2,
// factors = D / sqrt(2 (k - 1))}. Needs at least two snapshots.
LowRankGaussian swag_to_gaussian(const SwagMoments& moments);

enum class RegressionLoss { l2, l1 };

struct LagrangianConfig {
  double lambda = 0.0;
  double learning_rate = 1e-2;
  int epochs = 20;
  Index batch_size = 64;
  RegressionLoss regression_loss = RegressionLoss::l2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean supervised loss (cross-entropy or l1/l2) of one network on rows, with gradient.
double supervised_loss(const Mlp& net, const ParamVector& w, const Dataset& data, std::span<const Index> rows,
                       RegressionLoss regression_loss, ParamVector* grad);

// Adam on mean loss + lambda * mean phi over unlabelled batches. Lambda 0
// never evaluates phi.
ParamVector lagrangian_train(const Dataset& data, const Dataset& unlabeled, const DomainLoss& loss,
                             const LagrangianConfig& cfg);

}  // namespace bnnp
