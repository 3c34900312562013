#include "bnnp/variational.hpp"

#include <cmath>
#include <numbers>

#include "bnnp/errors.hpp"
#include "bnnp/nn.hpp"

namespace bnnp {
namespace {

void check_dim(Index expected, Index got, const char* what) {
  if (expected != got)
    throw InvalidShape(std::string(what) + ": expected length " + std::to_string(expected) + ", got " +
                       std::to_string(got));
}

}  // namespace

void LowRankGaussian::validate() const {
  if (factors.rows() != mean.size()) throw InvalidShape("factor rows differ from mean length");
  if (diag) {
    check_dim(mean.size(), diag->size(), "diagonal");
    if (!(diag->array() > 0.0).all()) throw InvalidConfig("diagonal variances must be positive");
  } else if (!(jitter_sigma >= kMinJitterSigma)) {
    throw InvalidConfig("jitter sigma must be at least 1e-6");
  }
}

Vector LowRankGaussian::diag_variance() const {
  if (diag) return *diag;
  return Vector::Constant(mean.size(), jitter_sigma * jitter_sigma);
}

Matrix LowRankGaussian::dense_covariance() const {
  Matrix S = factors * factors.transpose();
  S.diagonal() += diag_variance();
  return S;
}

void DiagGaussian::validate() const {
  check_dim(mean.size(), log_std.size(), "log_std");
  if (!log_std.allFinite()) throw NumericalFailure("non-finite log std");
}

void GaussianMixturePrior::validate() const {
  if (components.empty()) throw InvalidConfig("mixture needs at least one component");
  for (const auto& c : components) {
    c.validate();
    if (c.dim() != components.front().dim()) throw InvalidShape("mixture components differ in dimension");
  }
}

LowRankFactor::LowRankFactor(const LowRankGaussian& q) : mean_(q.mean), factors_(q.factors) {
  q.validate();
  const Vector d = q.diag_variance();
  inv_diag_ = d.cwiseInverse();
  const Index r = factors_.cols();
  Matrix core = Matrix::Identity(r, r);
  if (r > 0) core.noalias() += factors_.transpose() * inv_diag_.asDiagonal() * factors_;
  core_.compute(core);
  if (core_.info() != Eigen::Success || !core.allFinite())
    throw NumericalFailure("Cholesky of the low-rank core failed");
  const Matrix& L = core_.matrixLLT();
  double ld_core = 0.0;
  for (Index i = 0; i < r; ++i) {
    if (!(L(i, i) > 0.0)) throw NumericalFailure("low-rank core is not positive definite");
    ld_core += 2.0 * std::log(L(i, i));
  }
  log_det_ = d.array().log().sum() + ld_core;
  if (!std::isfinite(log_det_)) throw NumericalFailure("non-finite covariance log-determinant");
}

Vector LowRankFactor::solve(const Vector& x) const {
  check_dim(mean_.size(), x.size(), "woodbury_solve");
  Vector y = inv_diag_.cwiseProduct(x);
  if (factors_.cols() == 0) return y;
  const Vector inner = core_.solve(factors_.transpose() * y);
  return y - inv_diag_.cwiseProduct(factors_ * inner);
}

Matrix LowRankFactor::solve(const Matrix& x) const {
  check_dim(mean_.size(), x.rows(), "woodbury_solve");
  Matrix y = inv_diag_.asDiagonal() * x;
  if (factors_.cols() == 0) return y;
  const Matrix inner = core_.solve(factors_.transpose() * y);
  return y - inv_diag_.asDiagonal() * (factors_ * inner);
}

double LowRankFactor::log_density(const Vector& w) const {
  const Vector d = w - mean_;
  const double n = static_cast<double>(mean_.size());
  return -0.5 * (d.dot(solve(d)) + log_det_ + n * std::log(2.0 * std::numbers::pi));
}

Vector LowRankFactor::log_density_grad(const Vector& w) const { return -solve(Vector(w - mean_)); }

ParamVector sample_with_noise(const LowRankGaussian& q, const Vector& eps_r, const Vector& eps_n) {
  check_dim(q.rank(), eps_r.size(), "eps_r");
  check_dim(q.dim(), eps_n.size(), "eps_n");
  ParamVector w = q.mean;
  if (q.rank() > 0) w.noalias() += q.factors * eps_r;
  if (q.diag)
    w += q.diag->cwiseSqrt().cwiseProduct(eps_n);
  else
    w += q.jitter_sigma * eps_n;
  return w;
}

ParamVector sample(const LowRankGaussian& q, Rng& rng) {
  const Vector eps_r = rng.normal_vector(q.rank());
  const Vector eps_n = rng.normal_vector(q.dim());
  return sample_with_noise(q, eps_r, eps_n);
}

double log_det_covariance(const LowRankGaussian& q) { return LowRankFactor(q).log_det(); }

double kl_to_isotropic(const LowRankGaussian& q, const IsotropicPrior& p) {
  if (!(p.variance > 0.0)) throw InvalidConfig("prior variance must be positive");
  const LowRankFactor f(q);
  const double n = static_cast<double>(q.dim());
  const double trace = q.diag_variance().sum() + q.factors.squaredNorm();
  const double kl =
      0.5 * ((trace + q.mean.squaredNorm()) / p.variance - n + n * std::log(p.variance) - f.log_det());
  if (!std::isfinite(kl)) throw NumericalFailure("non-finite KL divergence");
  return std::max(kl, 0.0);
}

LowRankKlGrad kl_grad(const LowRankGaussian& q, const IsotropicPrior& p) {
  if (!(p.variance > 0.0)) throw InvalidConfig("prior variance must be positive");
  const LowRankFactor f(q);
  LowRankKlGrad g;
  g.mean = q.mean / p.variance;
  g.factors = q.factors / p.variance;
  if (q.rank() > 0) g.factors -= f.solve(q.factors);
  return g;
}

Vector woodbury_solve(const LowRankGaussian& q, const Vector& x) { return LowRankFactor(q).solve(x); }

ParamVector sample_with_noise(const DiagGaussian& q, const Vector& eps) {
  check_dim(q.dim(), q.log_std.size(), "log_std");
  check_dim(q.dim(), eps.size(), "eps");
  return q.mean + q.log_std.array().exp().matrix().cwiseProduct(eps);
}

ParamVector sample(const DiagGaussian& q, Rng& rng) { return sample_with_noise(q, rng.normal_vector(q.dim())); }

double kl_to_isotropic(const DiagGaussian& q, const IsotropicPrior& p) {
  q.validate();
  if (!(p.variance > 0.0)) throw InvalidConfig("prior variance must be positive");
  const double lp = std::log(p.variance);
  double kl = 0.0;
  for (Index i = 0; i < q.dim(); ++i) {
    const double var = std::exp(2.0 * q.log_std[i]);
    kl += (var + q.mean[i] * q.mean[i]) / p.variance - 1.0 + lp - 2.0 * q.log_std[i];
  }
  kl *= 0.5;
  if (!std::isfinite(kl)) throw NumericalFailure("non-finite KL divergence");
  return std::max(kl, 0.0);
}

DiagKlGrad kl_grad(const DiagGaussian& q, const IsotropicPrior& p) {
  q.validate();
  DiagKlGrad g;
  g.mean = q.mean / p.variance;
  g.log_std = ((2.0 * q.log_std.array()).exp() / p.variance - 1.0).matrix();
  return g;
}

LowRankGaussian init_low_rank(Index n, Index rank, double jitter_sigma, double init_scale, Rng& rng) {
  LowRankGaussian q;
  q.mean = init_scale * rng.normal_vector(n);
  q.factors = rank > 0 ? Matrix(init_scale / std::sqrt(static_cast<double>(rank)) * rng.normal_matrix(n, rank))
                       : Matrix(n, 0);
  q.jitter_sigma = jitter_sigma;
  q.validate();
  return q;
}

DiagGaussian init_diag(Index n, double init_scale, Rng& rng) {
  DiagGaussian q;
  q.mean = init_scale * rng.normal_vector(n);
  q.log_std = Vector::Constant(n, std::log(init_scale));
  return q;
}

PriorDensity::PriorDensity(Prior prior, Index dim) : prior_(std::move(prior)), dim_(dim) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) {
          if (!(p.variance > 0.0)) throw InvalidConfig("prior variance must be positive");
        } else if constexpr (std::is_same_v<T, LowRankGaussian>) {
          check_dim(dim_, p.dim(), "prior");
          factors_.emplace_back(p);
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          check_dim(dim_, p.dim(), "prior");
          p.validate();
        } else {
          p.validate();
          check_dim(dim_, p.dim(), "prior");
          for (const auto& c : p.components) factors_.emplace_back(c);
        }
      },
      prior_);
}

double PriorDensity::log_prob(const ParamVector& w) const {
  check_dim(dim_, w.size(), "weights");
  const double n = static_cast<double>(dim_);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) {
          return -0.5 * (w.squaredNorm() / p.variance + n * std::log(p.variance) + n * log2pi);
        } else if constexpr (std::is_same_v<T, LowRankGaussian>) {
          return factors_.front().log_density(w);
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          const Vector z = (w - p.mean).cwiseQuotient(p.log_std.array().exp().matrix());
          return -0.5 * (z.squaredNorm() + n * log2pi) - p.log_std.sum();
        } else {
          Vector l(static_cast<Index>(factors_.size()));
          for (std::size_t k = 0; k < factors_.size(); ++k) l[static_cast<Index>(k)] = factors_[k].log_density(w);
          return log_sum_exp(l) - std::log(static_cast<double>(factors_.size()));
        }
      },
      prior_);
}

ParamVector PriorDensity::log_prob_grad(const ParamVector& w) const {
  check_dim(dim_, w.size(), "weights");
  return std::visit(
      [&](const auto& p) -> ParamVector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) {
          return -w / p.variance;
        } else if constexpr (std::is_same_v<T, LowRankGaussian>) {
          return factors_.front().log_density_grad(w);
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          return -(w - p.mean).cwiseQuotient((2.0 * p.log_std.array()).exp().matrix());
        } else {
          const Index K = static_cast<Index>(factors_.size());
          if (K == 1) return factors_.front().log_density_grad(w);
          Vector l(K);
          for (Index k = 0; k < K; ++k) l[k] = factors_[k].log_density(w);
          const Vector resp = softmax(l);
          ParamVector g = ParamVector::Zero(w.size());
          for (Index k = 0; k < K; ++k) g += resp[k] * factors_[k].log_density_grad(w);
          return g;
        }
      },
      prior_);
}

ParamVector PriorDensity::sample(Rng& rng) const {
  return std::visit(
      [&](const auto& p) -> ParamVector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) {
          return std::sqrt(p.variance) * rng.normal_vector(dim_);
        } else if constexpr (std::is_same_v<T, GaussianMixturePrior>) {
          const auto k = rng.uniform_int(0, static_cast<std::int64_t>(p.components.size()) - 1);
          return bnnp::sample(p.components[static_cast<std::size_t>(k)], rng);
        } else {
          return bnnp::sample(p, rng);
        }
      },
      prior_);
}

ParamVector log_prob_grad(const Prior& prior, const ParamVector& w) {
  return PriorDensity(prior, w.size()).log_prob_grad(w);
}

}  // namespace bnnp
