#include "bnnp/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "bnnp/datasets.hpp"
#include "bnnp/errors.hpp"
#include "bnnp/kernels.hpp"
#include "bnnp/optim.hpp"
#include "bnnp/posterior.hpp"

namespace bnnp {

std::string to_string(TransferMethod m) {
  switch (m) {
    case TransferMethod::m1: return "m1";
    case TransferMethod::m1m2: return "m1m2";
    case TransferMethod::mmd: return "mmd";
    case TransferMethod::m1_swag: return "m1-swag";
  }
  return "unknown";
}

TransferMethod parse_transfer_method(std::string_view s) {
  if (s == "m1") return TransferMethod::m1;
  if (s == "m1m2") return TransferMethod::m1m2;
  if (s == "mmd") return TransferMethod::mmd;
  if (s == "m1-swag" || s == "m1_swag") return TransferMethod::m1_swag;
  throw InvalidConfig("unknown transfer method '" + std::string(s) + "'");
}

void TransferConfig::validate() const {
  target_arch.validate();
  if (n_function_samples < 1) throw InvalidConfig("n_function_samples must be positive");
  if (method == TransferMethod::mmd && n_function_samples < 2)
    throw InvalidConfig("MMD transfer needs at least two function samples");
  if (probe_set_size < 0) throw InvalidConfig("probe_set_size must be non-negative");
  if (!(learning_rate >= 0.0) || !(swag_learning_rate >= 0.0)) throw InvalidConfig("learning rates must be non-negative");
  if (epochs < 0) throw InvalidConfig("epochs must be non-negative");
  if (target_rank < 0 || !(target_jitter >= kMinJitterSigma) || !(init_scale > 0.0))
    throw InvalidConfig("invalid target family settings");
  if (snapshot_interval_epochs < 1 || swag_batch_size < 1) throw InvalidConfig("invalid SWAG schedule");
}

RowMatrix function_samples(const PriorDensity& prior, const ArchSpec& arch, const RowMatrix& probes, Index n,
                           Rng& rng) {
  const Mlp net(arch);
  if (prior.dim() != net.param_count()) throw InvalidShape("prior dimension differs from the architecture");
  if (probes.cols() != net.input_dim()) throw InvalidShape("probe width differs from the network input");
  const Index m = probes.rows();
  const Index out = net.output_dim();
  std::vector<ParamVector> ws;
  ws.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ws.push_back(prior.sample(rng));
  RowMatrix F(n, m * out);
  kernels::for_each_index(n, [&](Index i) {
    for (Index x = 0; x < m; ++x)
      F.row(i).segment(x * out, out) = net.forward(ws[static_cast<std::size_t>(i)], probes.row(x).transpose()).transpose();
  });
  return F;
}

double mmd2(const RowMatrix& W, const RowMatrix& U, double gamma) {
  if (W.rows() == 0 || U.rows() == 0) throw InvalidShape("MMD needs non-empty sample sets");
  if (W.cols() != U.cols()) throw InvalidShape("MMD sample sets differ in width");
  if (!(gamma > 0.0)) throw InvalidConfig("kernel bandwidth must be positive");
  const double nw = static_cast<double>(W.rows());
  const double nu = static_cast<double>(U.rows());
  const double ww = kernels::rbf_gram(W, W, gamma).sum() / (nw * nw);
  const double uu = kernels::rbf_gram(U, U, gamma).sum() / (nu * nu);
  const double wu = kernels::rbf_gram(W, U, gamma).sum() / (nw * nu);
  return ww + uu - 2.0 * wu;
}

double mmd2_with_grad(const RowMatrix& W, const RowMatrix& U, double gamma, RowMatrix& dU) {
  const double value = mmd2(W, U, gamma);
  const double nw = static_cast<double>(W.rows());
  const double nu = static_cast<double>(U.rows());
  const double g2 = gamma * gamma;
  const Matrix Kuu = kernels::rbf_gram(U, U, gamma);
  const Matrix Kuw = kernels::rbf_gram(U, W, gamma);
  dU = RowMatrix::Zero(U.rows(), U.cols());
  // dk(a, b)/da = -k(a, b) (a - b) / gamma^2
  for (Index j = 0; j < U.rows(); ++j) {
    for (Index l = 0; l < U.rows(); ++l)
      dU.row(j) -= (2.0 / (nu * nu)) * Kuu(j, l) * (U.row(j) - U.row(l)) / g2;
    for (Index i = 0; i < W.rows(); ++i)
      dU.row(j) += (2.0 / (nw * nu)) * Kuw(j, i) * (U.row(j) - W.row(i)) / g2;
  }
  return value;
}

double median_bandwidth(const RowMatrix& rows) {
  if (rows.rows() < 2) throw InvalidShape("median bandwidth needs at least two rows");
  std::vector<double> d = kernels::pairwise_sq_dists(rows);
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return std::max(std::sqrt(median / 2.0), 1e-6);
}

double moment_discrepancy(const RowMatrix& W, const RowMatrix& U, bool second_moment, RowMatrix* dU) {
  if (W.cols() != U.cols() || W.rows() == 0 || U.rows() == 0) throw InvalidShape("moment sets differ in shape");
  const double C = static_cast<double>(W.cols());
  const double nu = static_cast<double>(U.rows());
  const Eigen::RowVectorXd d1 = W.colwise().mean() - U.colwise().mean();
  double value = d1.squaredNorm() / C;
  Eigen::RowVectorXd d2;
  if (second_moment) {
    d2 = W.array().square().matrix().colwise().mean() - U.array().square().matrix().colwise().mean();
    value += d2.squaredNorm() / C;
  }
  if (dU) {
    *dU = RowMatrix::Zero(U.rows(), U.cols());
    for (Index j = 0; j < U.rows(); ++j) {
      dU->row(j) = -2.0 * d1 / (nu * C);
      if (second_moment) dU->row(j).array() -= 4.0 * d2.array() * U.row(j).array() / (nu * C);
    }
  }
  return value;
}

namespace {

RowMatrix probe_rows(const RowMatrix& probes, const TransferConfig& cfg) {
  if (probes.rows() == 0) throw InvalidShape("empty probe set");
  const Index m = cfg.probe_set_size > 0 ? std::min(cfg.probe_set_size, probes.rows()) : probes.rows();
  return probes.topRows(m);
}

LowRankGaussian initial_target(const Prior& source, const ArchSpec& source_arch, const TransferConfig& cfg,
                               Index dim, Rng& rng) {
  if (cfg.init_from_source) {
    if (!(source_arch == cfg.target_arch)) throw InvalidConfig("init_from_source needs identical architectures");
    if (const auto* q = std::get_if<LowRankGaussian>(&source)) return *q;
    if (const auto* mix = std::get_if<GaussianMixturePrior>(&source)) return mix->components.front();
    throw InvalidConfig("init_from_source needs a low-rank or mixture source");
  }
  return init_low_rank(dim, cfg.target_rank, cfg.target_jitter, cfg.init_scale, rng);
}

// Objective of one step given source and target function samples; fills dU.
using Discrepancy = std::function<double(const RowMatrix& W, const RowMatrix& U, RowMatrix& dU)>;

TransferResult optimise_target(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes_in,
                               const TransferConfig& cfg, const Discrepancy& discrepancy_for,
                               const std::function<void(const RowMatrix&)>& on_source) {
  cfg.validate();
  const RowMatrix probes = probe_rows(probes_in, cfg);
  const Mlp source_net(source_arch);
  const Mlp target(cfg.target_arch);
  if (target.input_dim() != source_net.input_dim() || target.output_dim() != source_net.output_dim())
    throw InvalidShape("source and target architectures differ in input or output size");
  Rng root(cfg.seed);
  Rng source_rng = root.split("source");
  Rng init_rng = root.split("init");
  Rng noise_rng = root.split("noise");
  const PriorDensity source_density(source, source_net.param_count());
  const RowMatrix W = function_samples(source_density, source_arch, probes, cfg.n_function_samples, source_rng);
  if (on_source) on_source(W);

  Variational q = initial_target(source, source_arch, cfg, target.param_count(), init_rng);
  Adam adam(pack(q).size());
  const Index n = target.param_count();
  const Index m = probes.rows();
  const Index out = target.output_dim();
  const Index S = cfg.n_function_samples;
  TransferResult result;
  for (int step = 0; step < cfg.epochs; ++step) {
    auto& lr = std::get<LowRankGaussian>(q);
    const Index r = lr.rank();
    const Matrix eps_r = noise_rng.normal_matrix(r, S);
    const Matrix eps_n = noise_rng.normal_matrix(n, S);
    std::vector<ParamVector> ws(static_cast<std::size_t>(S));
    RowMatrix U(S, m * out);
    kernels::for_each_index(S, [&](Index j) {
      ws[static_cast<std::size_t>(j)] = sample_with_noise(lr, eps_r.col(j), eps_n.col(j));
      for (Index x = 0; x < m; ++x)
        U.row(j).segment(x * out, out) =
            target.forward(ws[static_cast<std::size_t>(j)], probes.row(x).transpose()).transpose();
    });
    RowMatrix dU;
    const double value = discrepancy_for(W, U, dU);
    if (!std::isfinite(value)) throw NumericalFailure("non-finite transfer objective");
    result.objective.push_back(value);
    std::vector<ParamVector> gw(static_cast<std::size_t>(S));
    kernels::for_each_index(S, [&](Index j) {
      ParamVector g = ParamVector::Zero(n);
      for (Index x = 0; x < m; ++x)
        target.accumulate_grad_params(ws[static_cast<std::size_t>(j)], probes.row(x).transpose(),
                                      dU.row(j).segment(x * out, out).transpose(), 1.0, g);
      gw[static_cast<std::size_t>(j)] = std::move(g);
    });
    Vector grad = Vector::Zero(n + n * r);
    Eigen::Map<Matrix> g_factors(grad.data() + n, n, r);
    for (Index j = 0; j < S; ++j) {
      grad.head(n) += gw[static_cast<std::size_t>(j)];
      if (r > 0) g_factors.noalias() += gw[static_cast<std::size_t>(j)] * eps_r.col(j).transpose();
    }
    Vector flat = pack(q);
    adam.step(flat, grad, cfg.learning_rate);
    if (!flat.allFinite()) throw NumericalFailure("non-finite target parameters during transfer");
    unpack(flat, q);
  }
  result.prior = std::get<LowRankGaussian>(q);
  return result;
}

}  // namespace

TransferResult transfer_moment(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                               const TransferConfig& cfg) {
  if (cfg.method != TransferMethod::m1 && cfg.method != TransferMethod::m1m2)
    throw InvalidConfig("transfer_moment needs method m1 or m1m2");
  const bool second = cfg.method == TransferMethod::m1m2;
  return optimise_target(
      source, source_arch, probes, cfg,
      [second](const RowMatrix& W, const RowMatrix& U, RowMatrix& dU) {
        return moment_discrepancy(W, U, second, &dU);
      },
      nullptr);
}

TransferResult transfer_mmd(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                            const TransferConfig& cfg) {
  if (cfg.method != TransferMethod::mmd) throw InvalidConfig("transfer_mmd needs method mmd");
  double gamma = cfg.kernel_bandwidth;
  return optimise_target(
      source, source_arch, probes, cfg,
      [&gamma](const RowMatrix& W, const RowMatrix& U, RowMatrix& dU) { return mmd2_with_grad(W, U, gamma, dU); },
      [&gamma](const RowMatrix& W) {
        if (!(gamma > 0.0)) gamma = median_bandwidth(W);
      });
}

TransferResult transfer_m1_swag(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes_in,
                                const TransferConfig& cfg) {
  if (cfg.method != TransferMethod::m1_swag) throw InvalidConfig("transfer_m1_swag needs method m1_swag");
  cfg.validate();
  const RowMatrix probes = probe_rows(probes_in, cfg);
  const Mlp source_net(source_arch);
  const Mlp target(cfg.target_arch);
  if (target.input_dim() != source_net.input_dim() || target.output_dim() != source_net.output_dim())
    throw InvalidShape("source and target architectures differ in input or output size");
  // Snapshot epochs: the last `snapshots` multiples of the interval back from the final epoch.
  std::vector<int> snap_epochs;
  for (int i = cfg.snapshots - 1; i >= 0; --i) {
    const int e = cfg.epochs - i * cfg.snapshot_interval_epochs;
    if (e >= 1) snap_epochs.push_back(e);
  }
  if (snap_epochs.size() < 2) throw InvalidConfig("m1-swag needs at least two snapshots; raise epochs");

  Rng root(cfg.seed);
  Rng source_rng = root.split("source");
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  const PriorDensity source_density(source, source_net.param_count());
  const RowMatrix W = function_samples(source_density, source_arch, probes, cfg.n_function_samples, source_rng);
  const Eigen::RowVectorXd mean_fn = W.colwise().mean();
  const Index out = target.output_dim();

  Dataset reg;
  reg.features = probes;
  reg.targets.resize(probes.rows(), out);
  for (Index x = 0; x < probes.rows(); ++x) reg.targets.row(x) = mean_fn.segment(x * out, out);

  ArchSpec regression_arch = cfg.target_arch;
  regression_arch.head = OutputHead::identity;
  const Mlp reg_net(regression_arch);
  ParamVector w = target.init_he(init_rng);
  std::vector<ParamVector> snapshots;
  TransferResult result;
  std::vector<Index> all(static_cast<std::size_t>(reg.size()));
  for (Index i = 0; i < reg.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& batch : make_batches(shuffled_indices(reg.size(), batch_rng), cfg.swag_batch_size)) {
      ParamVector g = ParamVector::Zero(w.size());
      supervised_loss(reg_net, w, reg, batch, RegressionLoss::l2, &g);
      w -= cfg.swag_learning_rate * g;
      if (!w.allFinite()) throw NumericalFailure("non-finite weights in m1-swag regression");
    }
    result.objective.push_back(supervised_loss(reg_net, w, reg, all, RegressionLoss::l2, nullptr));
    if (std::find(snap_epochs.begin(), snap_epochs.end(), epoch) != snap_epochs.end()) snapshots.push_back(w);
  }
  GaussianMixturePrior mix;
  mix.components.push_back(swag_to_gaussian(swag_collect(snapshots)));
  result.prior = mix;
  return result;
}

TransferResult transfer_prior(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                              const TransferConfig& cfg) {
  switch (cfg.method) {
    case TransferMethod::m1:
    case TransferMethod::m1m2: return transfer_moment(source, source_arch, probes, cfg);
    case TransferMethod::mmd: return transfer_mmd(source, source_arch, probes, cfg);
    case TransferMethod::m1_swag: return transfer_m1_swag(source, source_arch, probes, cfg);
  }
  throw InvalidConfig("unknown transfer method");
}

}  // namespace bnnp
