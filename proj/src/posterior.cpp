#include "bnnp/posterior.hpp"

#include <cmath>
#include <numbers>

#include "bnnp/errors.hpp"
#include "bnnp/kernels.hpp"
#include "bnnp/optim.hpp"

namespace bnnp {

std::string to_string(LikelihoodKind k) {
  switch (k) {
    case LikelihoodKind::categorical: return "categorical";
    case LikelihoodKind::bernoulli: return "bernoulli";
    case LikelihoodKind::gaussian: return "gaussian";
  }
  return "unknown";
}

LikelihoodKind parse_likelihood(std::string_view s) {
  if (s == "categorical") return LikelihoodKind::categorical;
  if (s == "bernoulli") return LikelihoodKind::bernoulli;
  if (s == "gaussian") return LikelihoodKind::gaussian;
  throw InvalidConfig("unknown likelihood '" + std::string(s) + "'");
}

LikelihoodKind likelihood_for(OutputHead head) {
  switch (head) {
    case OutputHead::softmax: return LikelihoodKind::categorical;
    case OutputHead::sigmoid: return LikelihoodKind::bernoulli;
    case OutputHead::identity: return LikelihoodKind::gaussian;
  }
  return LikelihoodKind::gaussian;
}

double log_likelihood(LikelihoodKind kind, double noise_variance, const Vector& h, VectorRef y, Vector* dlog_dh) {
  switch (kind) {
    case LikelihoodKind::categorical: {
      const auto c = static_cast<Index>(std::lround(y[0]));
      if (c < 0 || c >= h.size()) throw InvalidShape("class label outside the output range");
      const double lse = log_sum_exp(h);
      if (dlog_dh) {
        *dlog_dh = -(h.array() - lse).exp().matrix();
        (*dlog_dh)[c] += 1.0;
      }
      return h[c] - lse;
    }
    case LikelihoodKind::bernoulli: {
      const double t = y[0];
      const double z = h[0];
      if (dlog_dh) {
        dlog_dh->resize(1);
        (*dlog_dh)[0] = t - sigmoid(z);
      }
      // t log s(z) + (1 - t) log(1 - s(z)), evaluated stably.
      const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
      return t * z - softplus;
    }
    case LikelihoodKind::gaussian: {
      if (y.size() != h.size()) throw InvalidShape("target width differs from network output");
      const Vector r = y - h;
      if (dlog_dh) *dlog_dh = r / noise_variance;
      return -0.5 * r.squaredNorm() / noise_variance -
             0.5 * static_cast<double>(h.size()) * std::log(2.0 * std::numbers::pi * noise_variance);
    }
  }
  return 0.0;
}

// ---- SGLD ----

void SgldConfig::validate() const {
  if (!(step_size >= 0.0)) throw InvalidConfig("SGLD step size must be non-negative");
  if (epochs < 0 || n_samples < 1 || batch_size < 1) throw InvalidConfig("SGLD counts must be positive");
  if (!(noise_variance > 0.0)) throw InvalidConfig("noise variance must be positive");
  if (!(prior_weight >= 0.0)) throw InvalidConfig("prior weight must be non-negative");
  if (resolved_burnin() < 0 || resolved_thin() < 1) throw InvalidConfig("SGLD burn-in/thinning invalid");
  if (resolved_burnin() + n_samples * resolved_thin() > epochs)
    throw InvalidConfig("burn-in plus samples times thinning exceeds the epoch budget");
}

int SgldConfig::resolved_burnin() const { return burnin_epochs >= 0 ? burnin_epochs : epochs / 2; }

int SgldConfig::resolved_thin() const {
  if (thin_epochs >= 0) return thin_epochs;
  return std::max(1, (epochs - resolved_burnin()) / std::max(1, n_samples));
}

ParamVector sgld_step(const Mlp& net, const ParamVector& w, const Dataset& data, std::span<const Index> batch,
                      const PriorDensity& prior, const SgldConfig& cfg, Rng& rng) {
  if (batch.empty()) throw InvalidShape("empty SGLD batch");
  if (w.size() != net.param_count()) throw InvalidShape("parameter vector length mismatch");
  const Index N = cfg.dataset_size > 0 ? cfg.dataset_size : data.size();
  ParamVector lik = ParamVector::Zero(w.size());
  kernels::sum_rows(static_cast<Index>(batch.size()), w.size(), &lik, [&](Index i, Vector* buf) {
    const Index row = batch[static_cast<std::size_t>(i)];
    const Vector x = data.features.row(row).transpose();
    const Vector h = net.forward(w, x);
    Vector d;
    log_likelihood(cfg.likelihood, cfg.noise_variance, h, data.targets.row(row).transpose(), &d);
    net.accumulate_grad_params(w, x, d, 1.0, *buf);
    return 0.0;
  });
  const double scale = static_cast<double>(N) / static_cast<double>(batch.size());
  ParamVector drift = scale * lik;
  if (cfg.prior_weight != 0.0) drift += cfg.prior_weight * prior.log_prob_grad(w);
  ParamVector next = w + 0.5 * cfg.step_size * drift;
  if (cfg.inject_noise && cfg.step_size > 0.0) next += std::sqrt(cfg.step_size) * rng.normal_vector(w.size());
  if (!next.allFinite()) throw NumericalFailure("non-finite SGLD update; lower the step size or prior weight");
  return next;
}

Ensemble sgld_sample(const Dataset& data, const ArchSpec& arch, const Prior& prior, const SgldConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw InvalidShape("empty training data");
  const Mlp net(arch);
  const PriorDensity density(prior, net.param_count());
  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  Rng noise_rng = root.split("noise");
  ParamVector w = density.sample(init_rng);
  Ensemble e;
  e.arch = arch;
  const int burnin = cfg.resolved_burnin();
  const int thin = cfg.resolved_thin();
  for (int epoch = 1; epoch <= cfg.epochs && e.size() < cfg.n_samples; ++epoch) {
    for (const auto& batch : make_batches(shuffled_indices(data.size(), batch_rng), cfg.batch_size))
      w = sgld_step(net, w, data, batch, density, cfg, noise_rng);
    if (epoch > burnin && (epoch - burnin) % thin == 0) e.members.push_back(w);
  }
  return e;
}

Ensemble sgld_sample_components(const Dataset& data, const ArchSpec& arch, const Prior& prior,
                                const SgldConfig& cfg) {
  const auto* mix = std::get_if<GaussianMixturePrior>(&prior);
  if (!mix || mix->components.size() == 1) return sgld_sample(data, arch, prior, cfg);
  Ensemble pooled;
  pooled.arch = arch;
  for (std::size_t k = 0; k < mix->components.size(); ++k) {
    SgldConfig c = cfg;
    c.seed = derive_seed(cfg.seed, "component/" + std::to_string(k));
    Ensemble part = sgld_sample(data, arch, Prior{mix->components[k]}, c);
    for (auto& m : part.members) pooled.members.push_back(std::move(m));
  }
  return pooled;
}

// ---- SWAG ----

Vector SwagMoments::variance() const {
  return (second_moment - mean.cwiseProduct(mean)).cwiseMax(kSwagVarianceFloor);
}

SwagMoments swag_collect(const std::vector<ParamVector>& snapshots) {
  if (snapshots.empty()) throw InvalidConfig("SWAG needs at least one snapshot");
  const Index n = snapshots.front().size();
  SwagMoments m;
  m.mean = Vector::Zero(n);
  m.second_moment = Vector::Zero(n);
  for (const auto& s : snapshots) {
    if (s.size() != n) throw InvalidShape("SWAG snapshots differ in length");
    m.mean += s;
    m.second_moment += s.cwiseProduct(s);
  }
  m.count = static_cast<Index>(snapshots.size());
  m.mean /= static_cast<double>(m.count);
  m.second_moment /= static_cast<double>(m.count);
  m.deviations.resize(n, m.count);
  for (Index k = 0; k < m.count; ++k) m.deviations.col(k) = snapshots[static_cast<std::size_t>(k)] - m.mean;
  return m;
}

LowRankGaussian swag_to_gaussian(const SwagMoments& moments) {
  if (moments.count < 2) throw InvalidConfig("SWAG covariance needs at least two snapshots");
  LowRankGaussian g;
  g.mean = moments.mean;
  g.diag = 0.5 * moments.variance();
  g.factors = moments.deviations / std::sqrt(2.0 * static_cast<double>(moments.count - 1));
  g.validate();
  return g;
}

// ---- Lagrangian baseline ----

void LagrangianConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be non-negative");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("learning rate must be non-negative");
  if (epochs < 0 || batch_size < 1) throw InvalidConfig("epochs and batch size must be positive");
}

double supervised_loss(const Mlp& net, const ParamVector& w, const Dataset& data, std::span<const Index> rows,
                       RegressionLoss regression_loss, ParamVector* grad) {
  if (rows.empty()) throw InvalidShape("empty batch");
  const double inv = 1.0 / static_cast<double>(rows.size());
  const LikelihoodKind kind = likelihood_for(net.arch().head);
  ParamVector local;
  if (grad) local = ParamVector::Zero(w.size());
  const double total =
      kernels::sum_rows(static_cast<Index>(rows.size()), w.size(), grad ? &local : nullptr, [&](Index i, Vector* buf) {
        const Index row = rows[static_cast<std::size_t>(i)];
        const Vector x = data.features.row(row).transpose();
        const Vector h = net.forward(w, x);
        const Vector y = data.targets.row(row).transpose();
        double value;
        Vector d;
        if (kind == LikelihoodKind::gaussian) {
          const Vector r = h - y;
          if (regression_loss == RegressionLoss::l2) {
            value = 0.5 * r.squaredNorm();
            d = r;
          } else {
            value = r.lpNorm<1>();
            d = r.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
          }
        } else {
          Vector dl;
          value = -log_likelihood(kind, 1.0, h, y, &dl);
          d = -dl;
        }
        if (buf) net.accumulate_grad_params(w, x, d, inv, *buf);
        return value * inv;
      });
  if (grad) *grad += local;
  return total;
}

ParamVector lagrangian_train(const Dataset& data, const Dataset& unlabeled, const DomainLoss& loss,
                             const LagrangianConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw InvalidShape("empty training data");
  const Mlp& net = loss.net();
  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  Rng phi_rng = root.split("phi-batches");
  ParamVector w = net.init_he(init_rng);
  Adam adam(w.size());
  const bool use_phi = cfg.lambda > 0.0 && unlabeled.size() > 0;
  std::vector<std::vector<Index>> phi_batches;
  std::size_t phi_next = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : make_batches(shuffled_indices(data.size(), batch_rng), cfg.batch_size)) {
      ParamVector g = ParamVector::Zero(w.size());
      supervised_loss(net, w, data, batch, cfg.regression_loss, &g);
      if (use_phi) {
        if (phi_next >= phi_batches.size()) {
          const std::vector<Index> order = loss.spec().kind == PhiKind::group_fairness
                                               ? [&] {
                                                   std::vector<int> groups(static_cast<std::size_t>(unlabeled.size()));
                                                   for (Index i = 0; i < unlabeled.size(); ++i)
                                                     groups[static_cast<std::size_t>(i)] =
                                                         unlabeled.features(i, loss.spec().group_index) >= 0.5;
                                                   return stratified_order(groups, phi_rng);
                                                 }()
                                               : shuffled_indices(unlabeled.size(), phi_rng);
          phi_batches = make_batches(order, cfg.batch_size);
          phi_next = 0;
        }
        ParamVector gphi = ParamVector::Zero(w.size());
        try {
          loss.evaluate(w, unlabeled, phi_batches[phi_next], Reduction::mean, &gphi);
          g += cfg.lambda * gphi;
        } catch (const DegenerateBatch&) {
          // phi term skipped for this batch
        }
        ++phi_next;
      }
      adam.step(w, g, cfg.learning_rate);
      if (!w.allFinite()) throw NumericalFailure("non-finite weights in Lagrangian training");
    }
  }
  return w;
}

}  // namespace bnnp
