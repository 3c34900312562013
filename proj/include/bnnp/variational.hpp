#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "bnnp/rng.hpp"
#include "bnnp/types.hpp"

namespace bnnp {

inline constexpr double kMinJitterSigma = 1e-6;

// N(0, variance * I) with one shared variance.
struct IsotropicPrior {
  double variance = 1.0;
};

// N(mean, V V^T + sigma^2 I). When `diag` is set the covariance is
// diag(diag) + V V^T instead and jitter_sigma is ignored; SWAG Gaussians use
// this form so every prior shares one solve/density path.
struct LowRankGaussian {
  Vector mean;
  Matrix factors;  // n x r, columns are the covariance factors
  double jitter_sigma = 1e-3;
  std::optional<Vector> diag;

  Index dim() const { return mean.size(); }
  Index rank() const { return factors.cols(); }
  void validate() const;
  // Diagonal part D of the covariance as a vector.
  Vector diag_variance() const;
  Matrix dense_covariance() const;
};

struct DiagGaussian {
  Vector mean;
  Vector log_std;

  Index dim() const { return mean.size(); }
  void validate() const;
};

// Equal-weight mixture of low-rank Gaussians.
struct GaussianMixturePrior {
  std::vector<LowRankGaussian> components;

  Index dim() const { return components.empty() ? 0 : components.front().dim(); }
  void validate() const;
};

using Prior = std::variant<IsotropicPrior, LowRankGaussian, DiagGaussian, GaussianMixturePrior>;

// Cached Woodbury factorisation of a LowRankGaussian covariance.
class LowRankFactor {
 public:
  explicit LowRankFactor(const LowRankGaussian& q);

  Vector solve(const Vector& x) const;
  Matrix solve(const Matrix& x) const;
  double log_det() const { return log_det_; }
  double log_density(const Vector& w) const;
  Vector log_density_grad(const Vector& w) const;

 private:
  Vector mean_;
  Matrix factors_;
  Vector inv_diag_;
  Eigen::LLT<Matrix> core_;  // I + V^T D^-1 V
  double log_det_ = 0.0;
};

// w = mean + V eps_r + sqrt(D) .* eps_n
ParamVector sample_with_noise(const LowRankGaussian& q, const Vector& eps_r, const Vector& eps_n);
ParamVector sample(const LowRankGaussian& q, Rng& rng);

double kl_to_isotropic(const LowRankGaussian& q, const IsotropicPrior& p);

struct LowRankKlGrad {
  Vector mean;
  Matrix factors;
};
LowRankKlGrad kl_grad(const LowRankGaussian& q, const IsotropicPrior& p);

Vector woodbury_solve(const LowRankGaussian& q, const Vector& x);
double log_det_covariance(const LowRankGaussian& q);

ParamVector sample_with_noise(const DiagGaussian& q, const Vector& eps);
ParamVector sample(const DiagGaussian& q, Rng& rng);
double kl_to_isotropic(const DiagGaussian& q, const IsotropicPrior& p);

struct DiagKlGrad {
  Vector mean;
  Vector log_std;
};
DiagKlGrad kl_grad(const DiagGaussian& q, const IsotropicPrior& p);

// Variational initialisation: mean ~ N(0, s^2), factors ~ N(0, s^2 / r).
LowRankGaussian init_low_rank(Index n, Index rank, double jitter_sigma, double init_scale, Rng& rng);
// mean ~ N(0, s^2), std = s.
DiagGaussian init_diag(Index n, double init_scale, Rng& rng);

// Density, gradient and sampling for any Prior, with factorisations cached.
// Isotropic priors take their dimension from `dim`.
class PriorDensity {
 public:
  PriorDensity(Prior prior, Index dim);

  const Prior& prior() const noexcept { return prior_; }
  Index dim() const noexcept { return dim_; }

  double log_prob(const ParamVector& w) const;
  // grad_w log prior(w); for mixtures the responsibility-weighted sum of the
  // component gradients.
  ParamVector log_prob_grad(const ParamVector& w) const;
  ParamVector sample(Rng& rng) const;

 private:
  Prior prior_;
  Index dim_;
  std::vector<LowRankFactor> factors_;
};

ParamVector log_prob_grad(const Prior& prior, const ParamVector& w);

}  // namespace bnnp
