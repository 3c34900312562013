#include "bnnp/prior_learning.hpp"

#include <cmath>
#include <sstream>

#include "bnnp/errors.hpp"
#include "bnnp/metrics.hpp"
#include "bnnp/optim.hpp"
#include "bnnp/posterior.hpp"

namespace bnnp {

std::string to_string(Family f) { return f == Family::lowrank ? "lowrank" : "diag"; }

Family parse_family(std::string_view s) {
  if (s == "lowrank") return Family::lowrank;
  if (s == "diag") return Family::diag;
  throw InvalidConfig("unknown variational family '" + std::string(s) + "'");
}

void PriorTrainConfig::validate() const {
  if (!(tau > 0.0) || !(beta > 0.0)) throw InvalidConfig("tau and beta must be positive");
  if (rank < 0) throw InvalidConfig("rank must be non-negative");
  if (family == Family::lowrank && !(jitter_sigma >= kMinJitterSigma))
    throw InvalidConfig("jitter sigma must be at least 1e-6");
  if (!(base_prior_variance > 0.0)) throw InvalidConfig("base prior variance must be positive");
  if (mc_samples < 1) throw InvalidConfig("mc_samples must be at least 1");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("learning rate must be non-negative");
  if (epochs < 0 || batch_size < 1) throw InvalidConfig("epochs and batch size must be positive");
  if (!(init_scale > 0.0)) throw InvalidConfig("init scale must be positive");
}

Variational init_variational(Index dim, const PriorTrainConfig& cfg, Rng& rng) {
  if (cfg.family == Family::diag) return init_diag(dim, cfg.init_scale, rng);
  return init_low_rank(dim, cfg.rank, cfg.jitter_sigma, cfg.init_scale, rng);
}

double kl_to_isotropic(const Variational& q, const IsotropicPrior& p) {
  return std::visit([&](const auto& v) { return bnnp::kl_to_isotropic(v, p); }, q);
}

ParamVector sample(const Variational& q, Rng& rng) {
  return std::visit([&](const auto& v) { return bnnp::sample(v, rng); }, q);
}

Vector pack(const Variational& q) {
  if (const auto* lr = std::get_if<LowRankGaussian>(&q)) {
    Vector flat(lr->mean.size() + lr->factors.size());
    flat << lr->mean, lr->factors.reshaped();
    return flat;
  }
  const auto& d = std::get<DiagGaussian>(q);
  Vector flat(2 * d.mean.size());
  flat << d.mean, d.log_std;
  return flat;
}

void unpack(const Vector& flat, Variational& q) {
  if (auto* lr = std::get_if<LowRankGaussian>(&q)) {
    const Index n = lr->mean.size();
    if (flat.size() != n + lr->factors.size()) throw InvalidShape("packed length mismatch");
    lr->mean = flat.head(n);
    lr->factors = flat.tail(lr->factors.size()).reshaped(n, lr->factors.cols());
    return;
  }
  auto& d = std::get<DiagGaussian>(q);
  const Index n = d.mean.size();
  if (flat.size() != 2 * n) throw InvalidShape("packed length mismatch");
  d.mean = flat.head(n);
  d.log_std = flat.tail(n);
}

ElboGradient elbo_gradient(const Variational& q, const PhiSquaresFn& phi_squares, const PriorTrainConfig& cfg,
                           Rng& rng) {
  const IsotropicPrior p{cfg.base_prior_variance};
  const double S = static_cast<double>(cfg.mc_samples);
  const double coef = -1.0 / (2.0 * cfg.tau * cfg.tau);
  ElboGradient out;
  out.grad = Vector::Zero(pack(q).size());
  const Index n = std::visit([](const auto& v) { return v.dim(); }, q);
  auto g_mean = out.grad.head(n);

  if (const auto* lr = std::get_if<LowRankGaussian>(&q)) {
    const Index r = lr->rank();
    Eigen::Map<Matrix> g_factors(out.grad.data() + n, n, r);
    for (int s = 0; s < cfg.mc_samples && !out.phi_skipped; ++s) {
      const Vector eps_r = rng.normal_vector(r);
      const Vector eps_n = rng.normal_vector(n);
      const ParamVector w = sample_with_noise(*lr, eps_r, eps_n);
      ParamVector gw = ParamVector::Zero(n);
      try {
        out.data_term += coef * phi_squares(w, &gw) / S;
      } catch (const DegenerateBatch&) {
        out.phi_skipped = true;
        break;
      }
      gw *= coef / S;
      g_mean += gw;
      if (r > 0) g_factors.noalias() += gw * eps_r.transpose();
    }
    if (out.phi_skipped) {
      out.data_term = 0.0;
      out.grad.setZero();
    }
    out.kl = bnnp::kl_to_isotropic(*lr, p);
    const LowRankKlGrad kg = kl_grad(*lr, p);
    g_mean -= cfg.beta * kg.mean;
    if (r > 0) g_factors -= cfg.beta * kg.factors;
  } else {
    const auto& d = std::get<DiagGaussian>(q);
    auto g_log_std = out.grad.tail(n);
    const Vector sd = d.log_std.array().exp().matrix();
    for (int s = 0; s < cfg.mc_samples && !out.phi_skipped; ++s) {
      const Vector eps = rng.normal_vector(n);
      const ParamVector w = sample_with_noise(d, eps);
      ParamVector gw = ParamVector::Zero(n);
      try {
        out.data_term += coef * phi_squares(w, &gw) / S;
      } catch (const DegenerateBatch&) {
        out.phi_skipped = true;
        break;
      }
      gw *= coef / S;
      g_mean += gw;
      g_log_std += gw.cwiseProduct(sd).cwiseProduct(eps);
    }
    if (out.phi_skipped) {
      out.data_term = 0.0;
      out.grad.setZero();
    }
    out.kl = bnnp::kl_to_isotropic(d, p);
    const DiagKlGrad kg = kl_grad(d, p);
    g_mean -= cfg.beta * kg.mean;
    g_log_std -= cfg.beta * kg.log_std;
  }
  out.objective = out.data_term - cfg.beta * out.kl;
  if (!std::isfinite(out.objective) || !out.grad.allFinite())
    throw NumericalFailure("non-finite objective (data term " + format_double(out.data_term) + ", KL " +
                           format_double(out.kl) + ")");
  return out;
}

ElboGradient elbo_gradient(const Variational& q, const Dataset& data, std::span<const Index> batch,
                           const DomainLoss& loss, const PriorTrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw InvalidShape("empty batch");
  const Index n = std::visit([](const auto& v) { return v.dim(); }, q);
  if (n != loss.net().param_count()) throw InvalidShape("variational dimension differs from the network");
  return elbo_gradient(
      q, [&](const ParamVector& w, ParamVector* g) { return loss.evaluate(w, data, batch, Reduction::sum_squares, g); },
      cfg, rng);
}

PriorTrainer::PriorTrainer(Variational q, PriorTrainConfig cfg)
    : q_(std::move(q)), cfg_(std::move(cfg)), adam_(pack(q_).size()) {
  cfg_.validate();
}

ElboGradient PriorTrainer::step(const Dataset& data, std::span<const Index> batch, const DomainLoss& loss, Rng& rng) {
  return apply(elbo_gradient(q_, data, batch, loss, cfg_, rng));
}

ElboGradient PriorTrainer::step(const PhiSquaresFn& phi_squares, Rng& rng) {
  return apply(elbo_gradient(q_, phi_squares, cfg_, rng));
}

ElboGradient PriorTrainer::apply(ElboGradient g) {
  Vector flat = pack(q_);
  adam_.step(flat, g.grad, cfg_.learning_rate, /*ascend=*/true);
  if (!flat.allFinite()) throw NumericalFailure("non-finite variational parameters after a step");
  unpack(flat, q_);
  return g;
}

std::vector<std::vector<Index>> epoch_batches(const Dataset& data, const DomainLoss& loss, Index batch_size,
                                              Rng& rng) {
  if (loss.spec().kind == PhiKind::group_fairness) {
    std::vector<int> groups(static_cast<std::size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i)
      groups[static_cast<std::size_t>(i)] = data.features(i, loss.spec().group_index) >= 0.5 ? 1 : 0;
    return make_batches(stratified_order(groups, rng), batch_size);
  }
  return make_batches(shuffled_indices(data.size(), rng), batch_size);
}

namespace {

ParamVector mean_of(const Variational& q) {
  return std::visit([](const auto& v) -> ParamVector { return v.mean; }, q);
}

double probe_phi(const DomainLoss& loss, const ParamVector& w, const Dataset& data) {
  const Index m = std::min<Index>(256, data.size());
  std::vector<Index> rows(static_cast<std::size_t>(m));
  // Spread the probe rows over the whole set so both fairness groups appear.
  for (Index i = 0; i < m; ++i) rows[static_cast<std::size_t>(i)] = i * data.size() / m;
  try {
    return loss.evaluate(w, data, rows, Reduction::mean, nullptr);
  } catch (const DegenerateBatch&) {
    return NAN;
  }
}

}  // namespace

PriorTrainResult train_prior(const Dataset& unlabeled, const DomainLoss& loss, const PriorTrainConfig& cfg) {
  cfg.validate();
  if (unlabeled.size() == 0) throw InvalidShape("empty unlabelled set");
  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  Rng noise_rng = root.split("noise");
  PriorTrainer trainer(init_variational(loss.net().param_count(), cfg, init_rng), cfg);
  PriorTrainResult result;
  const IsotropicPrior p{cfg.base_prior_variance};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    int steps = 0;
    for (const auto& batch : epoch_batches(unlabeled, loss, cfg.batch_size, batch_rng)) {
      sum += trainer.step(unlabeled, batch, loss, noise_rng).objective;
      ++steps;
    }
    EpochStats st;
    st.epoch = epoch;
    st.objective = steps ? sum / steps : 0.0;
    st.kl = kl_to_isotropic(trainer.q(), p);
    st.mean_phi = probe_phi(loss, mean_of(trainer.q()), unlabeled);
    result.curve.push_back(st);
  }
  result.q = trainer.q();
  return result;
}

std::string training_curve_csv(const std::vector<EpochStats>& curve) {
  std::ostringstream os;
  os << "epoch,objective,kl,mean_phi\n";
  for (const auto& s : curve)
    os << s.epoch << ',' << format_double(s.objective) << ',' << format_double(s.kl) << ','
       << format_double(s.mean_phi) << '\n';
  return os.str();
}

void SwagPriorConfig::validate() const {
  if (components < 1) throw InvalidConfig("SWAG prior needs at least one component");
  if (snapshots_per_component < 2) throw InvalidConfig("SWAG needs at least two snapshots per component");
  if (warmup_epochs < 0 || snapshot_interval_epochs < 1) throw InvalidConfig("invalid SWAG schedule");
  if (!(learning_rate >= 0.0) || batch_size < 1) throw InvalidConfig("invalid SWAG optimiser settings");
}

GaussianMixturePrior train_swag_prior(const Dataset& unlabeled, const DomainLoss& loss, const SwagPriorConfig& cfg,
                                      double tau, double base_prior_variance) {
  cfg.validate();
  if (!(tau > 0.0) || !(base_prior_variance > 0.0)) throw InvalidConfig("tau and prior variance must be positive");
  if (unlabeled.size() == 0) throw InvalidShape("empty unlabelled set");
  const Mlp& net = loss.net();
  const double coef = 1.0 / (2.0 * tau * tau);
  GaussianMixturePrior mix;
  for (int k = 0; k < cfg.components; ++k) {
    Rng root(derive_seed(cfg.seed, "component/" + std::to_string(k)));
    Rng init_rng = root.split("init");
    Rng batch_rng = root.split("batches");
    ParamVector w = net.init_he(init_rng);
    Adam adam(w.size());
    std::vector<ParamVector> snapshots;
    if (cfg.warmup_epochs == 0) snapshots.push_back(w);
    for (int epoch = 1; epoch <= cfg.total_epochs(); ++epoch) {
      for (const auto& batch : epoch_batches(unlabeled, loss, cfg.batch_size, batch_rng)) {
        ParamVector g = w / base_prior_variance;
        ParamVector gphi = ParamVector::Zero(w.size());
        try {
          loss.evaluate(w, unlabeled, batch, Reduction::sum_squares, &gphi);
          g += coef * gphi;
        } catch (const DegenerateBatch&) {
          // phi term skipped for this batch
        }
        adam.step(w, g, cfg.learning_rate);
        if (!w.allFinite()) throw NumericalFailure("non-finite weights in SWAG prior training");
      }
      if (epoch >= cfg.warmup_epochs && (epoch - cfg.warmup_epochs) % cfg.snapshot_interval_epochs == 0)
        snapshots.push_back(w);
    }
    mix.components.push_back(swag_to_gaussian(swag_collect(snapshots)));
  }
  return mix;
}

}  // namespace bnnp
