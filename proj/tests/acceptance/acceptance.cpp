// Acceptance checks: one PASS/FAIL line per criterion. Tolerances are pinned
// below; the desk-scale reproductions run five seeds each.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnnp/checkpoint.hpp"
#include "bnnp/config.hpp"
#include "bnnp/data_io.hpp"
#include "bnnp/domain_losses.hpp"
#include "bnnp/errors.hpp"
#include "bnnp/metrics.hpp"
#include "bnnp/pendulum.hpp"
#include "bnnp/posterior.hpp"
#include "bnnp/prior_learning.hpp"
#include "bnnp/transfer.hpp"
#include "oracles.hpp"

using namespace bnnp;

namespace {

// ---- pinned tolerances ----
constexpr double kLinalgTol = 1e-8;
constexpr double kGradTol = 1e-4;
constexpr double kSgldMeanSe = 3.0;
constexpr double kSgldVarRel = 0.2;
constexpr double kEnergyDriftTol = 1e-6;
constexpr double kFrictionTol = 1e-9;
constexpr double kMmdAbsTol = 1e-12;
constexpr double kMmdRelTol = 1e-12;
constexpr double kRatioPendulum = 0.05;
constexpr double kRatioDecoy = 0.25;
constexpr double kRatioClinical = 0.10;
constexpr double kTransferRatio = 0.20;
constexpr int kSeeds = 5;
constexpr int kSeedsNeeded = 4;
constexpr double kAccuracySlack = 0.01;
constexpr double kFairnessWindow = 0.02;
constexpr double kSweepNoiseSe = 2.0;
constexpr double kKlLimit = 1e-2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

Prior as_prior(const Variational& q) {
  return std::visit([](const auto& v) -> Prior { return v; }, q);
}

ArchSpec arch_of(std::vector<int> sizes, Activation act, OutputHead head) {
  ArchSpec a;
  a.layer_sizes = std::move(sizes);
  a.activation = act;
  a.head = head;
  return a;
}

double mean_prior_phi(const DomainLoss& loss, const Prior& prior, const Dataset& data, int draws, std::uint64_t seed) {
  const PriorDensity density(prior, loss.net().param_count());
  Rng rng(seed);
  double s = 0.0;
  for (int i = 0; i < draws; ++i) s += loss.evaluate_all(density.sample(rng), data, Reduction::mean, nullptr);
  return s / draws;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// ---- shared desk-scale state ----

DataGenConfig desk_data(Task task) {
  DataGenConfig g;
  g.task = task;
  g.pendulum_train_trajectories = 40;
  g.pendulum_eval_trajectories = 10;
  g.pendulum_traj_len = 20;
  g.decoy_train = 1000;
  g.decoy_val = 300;
  g.decoy_test = 500;
  g.fairness.n_samples = 2000;
  g.clinical.n_samples = 2000;
  return g;
}

// Data and a learned low-rank prior at tau 0.1 for one task and seed.
struct Learned {
  DatasetSplits data;
  ArchSpec arch;
  Prior prior;
};

const Learned& learned(Task task, std::uint64_t seed) {
  static std::map<std::pair<Task, std::uint64_t>, Learned> cache;
  const auto key = std::pair{task, seed};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  Learned l;
  l.data = generate_task_data(desk_data(task), seed);
  l.arch = default_arch(task, l.data.train.features.cols());
  const DomainLoss loss(default_spec(l.data.train), l.arch);
  PriorTrainConfig c;
  c.tau = 0.1;
  c.epochs = 10;
  c.seed = seed;
  l.prior = as_prior(train_prior(l.data.train, loss, c).q);
  return cache.emplace(key, std::move(l)).first->second;
}

// Decoy posterior ensembles under a learned diagonal prior and the isotropic prior.
struct DecoyRun {
  Ensemble banana;
  Ensemble isotropic;
  Dataset test;
  DomainLoss loss;
};

const std::vector<DecoyRun>& decoy_runs() {
  static std::vector<DecoyRun> runs;
  if (!runs.empty()) return runs;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const DatasetSplits s = generate_task_data(desk_data(Task::decoy), seed);
    ArchSpec a = default_arch(Task::decoy, s.train.features.cols());
    a.layer_sizes[1] = 32;  // width 8 underfits under a phi-constrained prior
    DomainLoss loss(default_spec(s.train), a);
    PriorTrainConfig c;
    c.family = Family::diag;
    c.tau = 1.0;
    c.beta = 10.0;
    c.init_scale = 1.0;
    c.learning_rate = 3e-2;
    c.epochs = 60;
    c.seed = seed;
    const Prior prior = as_prior(train_prior(s.train, loss, c).q);
    SgldConfig sc;
    sc.likelihood = likelihood_for(a.head);
    sc.step_size = 3e-3;
    sc.epochs = 150;
    sc.batch_size = 64;
    sc.n_samples = 25;
    sc.seed = seed;
    Ensemble banana = sgld_sample(s.train, a, prior, sc);
    Ensemble iso = sgld_sample(s.train, a, Prior{IsotropicPrior{1.0}}, sc);
    runs.push_back({std::move(banana), std::move(iso), s.test, std::move(loss)});
  }
  return runs;
}

// ---- 1: linear algebra ----

Outcome linear_algebra() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index n = 1 + static_cast<Index>(rng.uniform_int(0, 49));
    const Index r = static_cast<Index>(rng.uniform_int(0, std::min<Index>(8, n)));
    LowRankGaussian q;
    q.mean = rng.normal_vector(n);
    q.factors = rng.normal_matrix(n, r);
    q.jitter_sigma = 0.05 + rng.uniform();
    Matrix S = q.factors * q.factors.transpose();
    if (t % 2 == 1) {
      q.diag = rng.normal_vector(n).array().square() + 0.1;
      S += q.diag->asDiagonal();
    } else {
      S += q.jitter_sigma * q.jitter_sigma * Matrix::Identity(n, n);
    }
    const IsotropicPrior p{0.5 + 1.5 * rng.uniform()};
    const Vector x = rng.normal_vector(n);
    const Matrix S_inv = S.inverse();

    worst = std::max(worst, oracle::rel_err(kl_to_isotropic(q, p), oracle::dense_kl(q.mean, S, p.variance)));
    worst = std::max(worst, oracle::rel_err(log_det_covariance(q), oracle::dense_log_det(S)));
    worst = std::max(worst, oracle::rel_err(woodbury_solve(q, x), S.llt().solve(x)));
    const LowRankKlGrad g = kl_grad(q, p);
    worst = std::max(worst, oracle::rel_err(g.mean, q.mean / p.variance));
    if (r > 0) worst = std::max(worst, oracle::rel_err(g.factors, q.factors / p.variance - S_inv * q.factors));
  }
  return {worst <= kLinalgTol, "worst rel err " + fmt(worst) + " over 50 priors (limit 1e-8)"};
}

// ---- 2: differentiation ----

Outcome differentiation() {
  Rng rng(202);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };

  const Mlp net(arch_of({5, 6, 3}, Activation::softplus, OutputHead::softmax));
  const std::vector<int> mask{0, 2, 4};
  for (int t = 0; t < 5; ++t) {
    const ParamVector w = 0.7 * rng.normal_vector(net.param_count());
    const Vector x = rng.normal_vector(5);
    const Vector up = rng.normal_vector(3);
    note("params", oracle::rel_err(net.grad_params(w, x, up),
                                   oracle::central_diff([&](const Vector& p) { return up.dot(net.forward(p, x)); }, w)));

    const Matrix J = net.input_jacobian(w, x);
    Matrix fdJ(3, 5);
    for (int c = 0; c < 3; ++c)
      fdJ.row(c) = oracle::central_diff([&](const Vector& z) { return net.forward(w, z)[c]; }, x).transpose();
    note("input", oracle::rel_err(J, fdJ));

    const MaskedGradNorm m = net.masked_input_grad_norm(w, x, mask);
    note("masked norm", oracle::rel_err(m.grad, oracle::central_diff(
                                                   [&](const Vector& p) { return net.masked_input_grad_norm(p, x, mask).value; }, w)));

    const OutputFunctional f{OutputFunctional::Kind::log_prob_sum, 0};
    const Vector mw = net.mask_vector(mask);
    ParamVector pg = ParamVector::Zero(net.param_count());
    net.input_grad_penalty(w, x, mw, f, &pg);
    note("masked norm",
         oracle::rel_err(pg, oracle::central_diff([&](const Vector& p) { return net.input_grad_penalty(p, x, mw, f, nullptr); }, w)));

    for (BackgroundMode mode :
         {BackgroundMode::log_prob_sum, BackgroundMode::log_softmax_jacobian, BackgroundMode::logit_jacobian}) {
      const PhiValue v = phi_background(net, w, x, mask, mode, true);
      note("phi background", oracle::rel_err(v.grad, oracle::central_diff(
                                                        [&](const Vector& p) { return phi_background(net, p, x, mask, mode, false).value; }, w)));
    }
  }

  const Mlp fair(arch_of({4, 5, 1}, Activation::softplus, OutputHead::sigmoid));
  const RowMatrix X = rng.normal_matrix(12, 4);
  std::vector<int> groups(12);
  for (int i = 0; i < 12; ++i) groups[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
  for (int t = 0; t < 5; ++t) {
    const ParamVector w = rng.normal_vector(fair.param_count());
    const PhiValue v = phi_group_fairness_batch(fair, w, X, groups, true);
    note("phi fairness", oracle::rel_err(v.grad, oracle::central_diff(
                                                    [&](const Vector& p) { return phi_group_fairness_batch(fair, p, X, groups, false).value; }, w)));
  }

  const Mlp clin(arch_of({kClinicalColumns, 5, 1}, Activation::softplus, OutputHead::sigmoid));
  const ClinicalRegion region;
  Vector inside = Vector::Zero(kClinicalColumns);
  inside[kLactate] = 1.0;
  inside[kBicarbonate] = -1.0;
  int clinical_active = 0;
  for (int t = 0; t < 10 && clinical_active < 5; ++t) {
    const ParamVector w = rng.normal_vector(clin.param_count());
    const PhiValue v = phi_clinical(clin, w, inside, region, true);
    if (v.value < 1e-3) continue;  // keep away from the hinge
    ++clinical_active;
    note("phi clinical", oracle::rel_err(v.grad, oracle::central_diff(
                                                    [&](const Vector& p) { return phi_clinical(clin, p, inside, region, false).value; }, w)));
  }

  const PendulumConfig pc;
  const Mlp dyn(arch_of({4, 6, 4}, Activation::softplus, OutputHead::identity));
  int energy_active = 0;
  for (int t = 0; t < 40 && energy_active < 5; ++t) {
    const ParamVector w = rng.normal_vector(dyn.param_count());
    const Vector x = 0.3 * rng.normal_vector(4);
    const PhiValue v = phi_energy_damping(dyn, w, x, pc, true);
    if (v.value < 1e-3) continue;
    ++energy_active;
    note("phi energy", oracle::rel_err(v.grad, oracle::central_diff(
                                                  [&](const Vector& p) { return phi_energy_damping(dyn, p, x, pc, false).value; }, w)));
  }

  DomainLossSpec spec;
  spec.kind = PhiKind::energy_damping;
  const DomainLoss loss(spec, arch_of({4, 3, 4}, Activation::softplus, OutputHead::identity));
  Dataset d;
  d.task = Task::pendulum;
  d.features = 0.5 * rng.normal_matrix(6, 4);
  d.targets = RowMatrix::Zero(6, 4);
  const std::vector<Index> rows{0, 1, 2, 3, 4, 5};
  for (Family fam : {Family::lowrank, Family::diag}) {
    PriorTrainConfig cfg;
    cfg.family = fam;
    cfg.rank = 2;
    cfg.mc_samples = 2;
    cfg.init_scale = 0.4;
    cfg.jitter_sigma = 0.05;
    const Variational q = init_variational(loss.net().param_count(), cfg, rng);
    Rng r0(7);
    const ElboGradient e = elbo_gradient(q, d, rows, loss, cfg, r0);
    const Vector fd = oracle::central_diff(
        [&](const Vector& flat) {
          Variational t = q;
          unpack(flat, t);
          Rng r(7);
          return elbo_gradient(t, d, rows, loss, cfg, r).objective;
        },
        pack(q), 1e-6);
    note("elbo", oracle::rel_err(e.grad, fd));
  }

  double all = 0.0;
  std::string detail;
  for (const auto& [name, e] : worst) {
    all = std::max(all, e);
    detail += name + " " + fmt(e) + ", ";
  }
  const bool covered = clinical_active > 0 && energy_active > 0 && worst.size() == 8;
  return {covered && all <= kGradTol, detail + "limit 1e-4"};
}

// ---- 3: SGLD on a conjugate Gaussian ----

Outcome sgld_conjugate() {
  // h(x) = a x + b with every x = 0: b sees the data, a only the prior.
  const Mlp lin(arch_of({1, 1}, Activation::relu, OutputHead::identity));
  Rng rng(303);
  const Index n = 20;
  RowMatrix Y(n, 1);
  for (Index i = 0; i < n; ++i) Y(i, 0) = 1.5 + rng.normal();
  Dataset d;
  d.task = Task::pendulum;
  d.features = RowMatrix::Zero(n, 1);
  d.targets = Y;
  const double post_prec = static_cast<double>(n) + 1.0;
  const double post_mean = Y.col(0).sum() / post_prec;
  const double post_var = 1.0 / post_prec;

  const PriorDensity prior(Prior{IsotropicPrior{1.0}}, lin.param_count());
  SgldConfig cfg;
  cfg.step_size = 1e-3;
  cfg.noise_variance = 1.0;
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  ParamVector w = ParamVector::Zero(2);
  const Index bias = lin.flat_index({0, 0, 0, true});
  for (int t = 0; t < 5000; ++t) w = sgld_step(lin, w, d, rows, prior, cfg, rng);
  const int kept = 20000, thin = 10, nbatch = 100;
  std::vector<double> b;
  b.reserve(kept);
  for (int t = 0; t < kept * thin; ++t) {
    w = sgld_step(lin, w, d, rows, prior, cfg, rng);
    if (t % thin == 0) b.push_back(w[bias]);
  }
  const double mean = mean_of(b);
  double var = 0.0;
  for (double v : b) var += (v - mean) * (v - mean);
  var /= kept - 1;
  // Batch means account for autocorrelation in the standard error.
  const int per = kept / nbatch;
  double bm_var = 0.0;
  for (int k = 0; k < nbatch; ++k) {
    const double m = std::accumulate(b.begin() + k * per, b.begin() + (k + 1) * per, 0.0) / per;
    bm_var += (m - mean) * (m - mean);
  }
  const double se = std::sqrt(bm_var / (nbatch - 1) / nbatch);
  const double z = std::abs(mean - post_mean) / se;
  const double vr = std::abs(var - post_var) / post_var;
  return {z <= kSgldMeanSe && vr <= kSgldVarRel,
          "mean off by " + fmt(z) + " SE (limit 3), variance off by " + fmt(100 * vr) + "% (limit 20%)"};
}

// ---- 4: pendulum physics ----

double local_error(const PendulumConfig& c, const PendulumState& s, double h) {
  const PendulumState coarse = pendulum_step(s, c, h);
  PendulumState fine = s;
  for (int i = 0; i < 16; ++i) fine = pendulum_step(fine, c, h / 16.0);
  return (coarse.to_vector() - fine.to_vector()).cwiseAbs().maxCoeff();
}

// RMS error on a grid of sample times against steps of grid / 8192.
double global_error(const PendulumConfig& c, const PendulumState& s, double h, double T, double grid) {
  auto run = [&](double dt) {
    std::vector<Vector> out;
    PendulumState x = s;
    const int steps = static_cast<int>(std::lround(grid / dt));
    for (int k = 0; k < static_cast<int>(std::lround(T / grid)); ++k) {
      for (int i = 0; i < steps; ++i) x = pendulum_step(x, c, dt);
      out.push_back(x.to_vector());
    }
    return out;
  };
  const auto ref = run(grid / 8192.0);
  const auto got = run(h);
  double e = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) e += (got[k] - ref[k]).squaredNorm();
  return std::sqrt(e / static_cast<double>(got.size()));
}

Outcome pendulum_physics() {
  const PendulumState s0{std::numbers::pi / 6.0, 0.0, std::numbers::pi / 6.0, 0.0};
  PendulumConfig free;
  free.c1 = free.c2 = 0.0;
  PendulumState s = s0;
  for (int i = 0; i < 10000; ++i) s = pendulum_step(s, free, 1e-3);
  const double e0 = pendulum_energy(s0, free);
  const double drift = std::abs(pendulum_energy(s, free) - e0) / std::abs(e0);

  const PendulumConfig damped;
  s = s0;
  double prev = pendulum_energy(s, damped);
  double rise = -1e300;
  for (int i = 0; i < 10000; ++i) {
    s = pendulum_step(s, damped, 1e-3);
    const double e = pendulum_energy(s, damped);
    rise = std::max(rise, e - prev);
    prev = e;
  }

  const PendulumState q{0.4, 0.3, -0.2, 0.1};
  const double local_order = std::log2(local_error(damped, q, 0.04) / local_error(damped, q, 0.02));
  const double global_order =
      std::log2(global_error(damped, q, 0.00125, 1.0, 0.04) / global_error(damped, q, 0.000625, 1.0, 0.04));
  const bool orders = local_order >= 4.5 && local_order <= 5.5 && global_order >= 3.7 && global_order <= 4.3;
  return {drift <= kEnergyDriftTol && rise <= kFrictionTol && orders,
          "drift " + fmt(drift) + " (limit 1e-6), largest per-step rise " + fmt(rise) +
              " (limit 1e-9), local order " + fmt(local_order) + ", global order " + fmt(global_order)};
}

// ---- 5: MMD ----

Outcome mmd_checks() {
  RowMatrix W1(1, 1), U1(1, 1);
  W1 << 0.0;
  U1 << 2.0;
  const double singleton = std::abs(mmd2(W1, U1, 1.0) - (2.0 - 2.0 * std::exp(-2.0)));
  Rng rng(505);
  double self = 0.0, sym = 0.0, perm = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index d = 1 + static_cast<Index>(rng.uniform_int(0, 5));
    const RowMatrix W = rng.normal_matrix(3 + t % 5, d);
    const RowMatrix U = 1.2 * rng.normal_matrix(4 + t % 3, d).array() + 0.3;
    const double gamma = 0.3 + 2.0 * rng.uniform();
    const double v = mmd2(W, U, gamma);
    self = std::max(self, std::abs(mmd2(W, W, gamma)));
    sym = std::max(sym, oracle::rel_err(mmd2(U, W, gamma), v));
    std::vector<Index> order(static_cast<std::size_t>(U.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::reverse(order.begin(), order.end());
    RowMatrix Up(U.rows(), U.cols());
    for (Index i = 0; i < U.rows(); ++i) Up.row(i) = U.row(order[static_cast<std::size_t>(i)]);
    perm = std::max(perm, oracle::rel_err(mmd2(W, Up, gamma), v));
  }
  return {singleton <= kMmdAbsTol && self == 0.0 && sym <= kMmdRelTol && perm <= kMmdRelTol,
          "singleton abs err " + fmt(singleton) + ", max mmd2(W,W) " + fmt(self) + ", symmetry " + fmt(sym) +
              ", permutation " + fmt(perm)};
}

// ---- 6: AUROC ----

Outcome auroc_oracle() {
  Rng rng(606);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 58));
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      // Coarse scores so ties are common.
      s[static_cast<std::size_t>(i)] = std::round(4.0 * rng.normal()) / 4.0;
      y[static_cast<std::size_t>(i)] = i < 2 ? i : static_cast<int>(rng.bernoulli(0.4));
    }
    if (auroc(s, y) == oracle::brute_auroc(s, y)) ++agree;
  }
  return {agree == 100, std::to_string(agree) + "/100 sets agree exactly"};
}

// ---- 7: checkpoint and dataset files ----

template <class Decode>
bool rejects_corruption(const std::string& bytes, Decode decode) {
  const std::size_t stride = std::max<std::size_t>(1, bytes.size() / 257);
  for (std::size_t len = 0; len < bytes.size(); len += stride) {
    try {
      decode(std::string_view(bytes).substr(0, len));
      return false;
    } catch (const FormatError&) {
    }
  }
  std::string bad = bytes;
  bad[0] = static_cast<char>(bad[0] ^ 0x20);
  try {
    decode(bad);
    return false;
  } catch (const FormatError&) {
  }
  return true;
}

Outcome file_formats() {
  const std::string dir = (std::filesystem::temp_directory_path() / "bnnp_acceptance_files").string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  int exact = 0, total = 0, rejected = 0;

  Rng rng(707);
  const ArchSpec arch = arch_of({3, 4, 2}, Activation::softplus, OutputHead::softmax);
  const Index n = arch.param_count();
  auto component = [&](Index r, bool with_diag) {
    LowRankGaussian q;
    q.mean = rng.normal_vector(n);
    q.factors = rng.normal_matrix(n, r);
    q.jitter_sigma = 0.03;
    if (with_diag) q.diag = rng.normal_vector(n).array().square() + 0.1;
    return q;
  };
  GaussianMixturePrior mix;
  for (Index r : {1, 3}) mix.components.push_back(component(r, r == 3));
  const std::vector<Prior> priors{Prior{component(3, false)}, Prior{DiagGaussian{rng.normal_vector(n), rng.normal_vector(n)}},
                                  Prior{mix}, Prior{IsotropicPrior{2.5}}};
  for (const Prior& p : priors) {
    PriorCheckpoint c;
    c.arch = arch;
    c.prior = p;
    c.seed = 9;
    c.phi_kind = "background";
    const std::string bytes = encode_prior(c);
    const std::string path = dir + "/p.bnnp";
    save_prior(path, c);
    ++total;
    if (read_file(path) == bytes && encode_prior(load_prior(path)) == bytes) ++exact;
    if (rejects_corruption(bytes, [](std::string_view b) { return decode_prior(b); })) ++rejected;
  }

  for (Task task : {Task::pendulum, Task::decoy, Task::fairness, Task::clinical}) {
    DataGenConfig g;
    g.task = task;
    g.pendulum_train_trajectories = 3;
    g.pendulum_eval_trajectories = 1;
    g.pendulum_traj_len = 5;
    g.decoy_train = 20;
    g.decoy_val = 5;
    g.decoy_test = 5;
    g.fairness.n_samples = 60;
    g.clinical.n_samples = 200;
    const Dataset d = generate_task_data(g, 3).train;
    const std::string bytes = encode_dataset(d);
    const std::string path = dir + "/d.bnnd";
    save_dataset(path, d);
    const Dataset back = load_dataset(path);
    ++total;
    const bool values = back.features == d.features.cast<float>().cast<double>() &&
                        back.targets == d.targets.cast<float>().cast<double>() && back.masks == d.masks &&
                        back.flags == d.flags && back.meta == d.meta;
    if (read_file(path) == bytes && encode_dataset(back) == bytes && values) ++exact;
    if (rejects_corruption(bytes, [](std::string_view b) { return decode_dataset(b); })) ++rejected;
  }
  std::filesystem::remove_all(dir);
  return {exact == total && rejected == total, std::to_string(exact) + "/" + std::to_string(total) +
                                                   " bit-exact round trips, " + std::to_string(rejected) + "/" +
                                                   std::to_string(total) + " reject truncation and bad magic"};
}

// ---- 8: learned versus isotropic prior samples ----

Outcome prior_sampling() {
  const std::vector<std::pair<Task, double>> tasks{
      {Task::pendulum, kRatioPendulum}, {Task::decoy, kRatioDecoy}, {Task::clinical, kRatioClinical}};
  bool pass = true;
  std::string detail;
  for (const auto& [task, limit] : tasks) {
    std::vector<double> lp, ip;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const Learned& l = learned(task, seed);
      const DomainLoss loss(default_spec(l.data.train), l.arch);
      lp.push_back(mean_prior_phi(loss, l.prior, l.data.val, 20, seed + 100));
      ip.push_back(mean_prior_phi(loss, Prior{IsotropicPrior{1.0}}, l.data.val, 20, seed + 100));
    }
    const double ratio = mean_of(lp) / mean_of(ip);
    pass = pass && ratio <= limit;
    detail += to_string(task) + " " + fmt(mean_of(lp)) + " vs " + fmt(mean_of(ip)) + " ratio " + fmt(ratio) +
              " (limit " + fmt(limit) + "); ";
  }
  return {pass, detail};
}

// ---- 9: transfer to a wider target ----

Outcome prior_transfer() {
  bool pass = true;
  std::string detail;
  for (Task task : {Task::pendulum, Task::decoy}) {
    std::map<TransferMethod, std::vector<double>> phi;
    std::vector<double> iso;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const Learned& l = learned(task, seed);
      ArchSpec big = l.arch;
      big.layer_sizes[1] *= 2;
      const DomainLoss wide(default_spec(l.data.train), big);
      iso.push_back(mean_prior_phi(wide, Prior{IsotropicPrior{1.0}}, l.data.val, 20, seed + 7));
      for (TransferMethod m : {TransferMethod::mmd, TransferMethod::m1, TransferMethod::m1_swag}) {
        TransferConfig t;
        t.method = m;
        t.target_arch = big;
        t.epochs = task == Task::decoy ? 100 : 200;
        t.probe_set_size = task == Task::decoy ? 50 : 100;
        t.learning_rate = 1e-2;
        t.seed = seed;
        const TransferResult r = transfer_prior(l.prior, l.arch, l.data.train.features, t);
        phi[m].push_back(mean_prior_phi(wide, r.prior, l.data.val, 20, seed + 7));
      }
    }
    detail += to_string(task) + ":";
    for (const auto& [m, v] : phi) {
      const double ratio = mean_of(v) / mean_of(iso);
      pass = pass && ratio <= kTransferRatio;
      detail += " " + to_string(m) + " " + fmt(ratio);
    }
    detail += "; ";
  }
  return {pass, detail + "ratios to the isotropic wide prior (limit 0.2)"};
}

// ---- 10: downstream direction ----

Outcome downstream() {
  int decoy_lower = 0;
  std::vector<double> acc_b, acc_i;
  for (const DecoyRun& r : decoy_runs()) {
    const TaskMetrics b = evaluate_task(r.banana, r.test, r.loss, PhiMode::averaged_predictor);
    const TaskMetrics i = evaluate_task(r.isotropic, r.test, r.loss, PhiMode::averaged_predictor);
    if (b.phi < i.phi) ++decoy_lower;
    acc_b.push_back(b.primary);
    acc_i.push_back(i.primary);
  }
  int pend_lower = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const Learned& l = learned(Task::pendulum, seed);
    const DomainLoss loss(default_spec(l.data.train), l.arch);
    SgldConfig sc;
    sc.likelihood = likelihood_for(l.arch.head);
    sc.epochs = 200;
    sc.n_samples = 25;
    sc.batch_size = 64;
    sc.seed = seed;
    sc.step_size = 1e-6;
    const Ensemble b = sgld_sample(l.data.train, l.arch, l.prior, sc);
    // The isotropic prior is far weaker, so a larger step is stable there.
    sc.step_size = 1e-5;
    const Ensemble i = sgld_sample(l.data.train, l.arch, Prior{IsotropicPrior{1.0}}, sc);
    const double pb = loss.ensemble_value(b, l.data.test);
    const double pi = loss.ensemble_value(i, l.data.test);
    if (pb < pi) ++pend_lower;
  }
  const double gap = mean_of(acc_b) - mean_of(acc_i);
  const bool pass = decoy_lower >= kSeedsNeeded && gap >= -kAccuracySlack && pend_lower >= kSeedsNeeded;
  return {pass, "decoy phi lower in " + std::to_string(decoy_lower) + "/5, accuracy " + fmt(mean_of(acc_b)) +
                    " vs " + fmt(mean_of(acc_i)) + " (gap " + fmt(gap) + ", limit -0.01); pendulum phi lower in " +
                    std::to_string(pend_lower) + "/5"};
}

// ---- 11: accuracy-matched prior samples on fairness data ----

Outcome pareto_window() {
  int lower = 0;
  std::string counts;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const DatasetSplits s = generate_task_data(desk_data(Task::fairness), seed);
    const ArchSpec a = default_arch(Task::fairness, s.train.features.cols());
    const DomainLoss loss(default_spec(s.train), a);
    PriorTrainConfig c;
    c.tau = 1.0;
    c.epochs = 10;
    c.seed = seed;
    const Prior banana = as_prior(train_prior(s.train, loss, c).q);
    auto draw = [&](const Prior& p, std::uint64_t sd) {
      const PriorDensity density(p, a.param_count());
      Rng rng(sd);
      std::vector<ParetoPoint> pts;
      for (int i = 0; i < 100; ++i) {
        const ParamVector w = density.sample(rng);
        pts.push_back({member_score(loss.net(), w, s.test), loss.evaluate_all(w, s.test, Reduction::mean, nullptr)});
      }
      return pts;
    };
    const auto iso = draw(Prior{IsotropicPrior{1.0}}, seed + 1);
    const auto ban = draw(banana, seed + 2);
    double centre = 0.0;
    for (const ParetoPoint& p : iso) centre += p.accuracy / static_cast<double>(iso.size());
    auto window = [&](const std::vector<ParetoPoint>& pts) {
      std::vector<double> v;
      for (const ParetoPoint& p : pts)
        if (std::abs(p.accuracy - centre) <= kFairnessWindow) v.push_back(p.phi);
      return v;
    };
    const auto wi = window(iso), wb = window(ban);
    if (!wi.empty() && !wb.empty() && mean_of(wb) < mean_of(wi)) ++lower;
    counts += " " + std::to_string(wb.size()) + "/" + std::to_string(wi.size());
  }
  return {lower >= kSeedsNeeded,
          "banana window phi lower in " + std::to_string(lower) + "/5 seeds; in-window banana/isotropic counts" + counts};
}

// ---- 12: ablation trends ----

Outcome ablations() {
  const std::vector<int> sizes{1, 2, 3, 5, 10, 15, 20, 25};
  std::vector<std::vector<double>> acc(sizes.size());
  for (const DecoyRun& r : decoy_runs()) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      // The last K samples, so every size sees the same stretch of the chain end.
      Ensemble e = r.banana;
      e.members.erase(e.members.begin(), e.members.end() - sizes[k]);
      acc[k].push_back(evaluate_task(e, r.test, r.loss, PhiMode::averaged_predictor).primary);
    }
  }
  bool monotone = true;
  std::string curve;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    curve += " " + std::to_string(sizes[k]) + ":" + fmt(mean_of(acc[k]));
    if (k == 0) continue;
    std::vector<double> diff;
    for (std::size_t s = 0; s < acc[k].size(); ++s) diff.push_back(acc[k][s] - acc[k - 1][s]);
    const Summary d = summarize(diff);
    if (d.mean < -kSweepNoiseSe * d.se) monotone = false;
  }
  const bool gain = mean_of(acc.back()) >= mean_of(acc.front());

  // tau -> infinity switches off phi, leaving KL(q || p) alone in the objective.
  const Learned& l = learned(Task::pendulum, 0);
  const DomainLoss loss(default_spec(l.data.train), l.arch);
  double worst_kl = 0.0;
  for (Family fam : {Family::diag, Family::lowrank}) {
    PriorTrainConfig c;
    c.tau = 1e12;
    c.family = fam;
    c.jitter_sigma = 1.0;  // sigma equal to the base prior scale makes KL = 0 attainable
    c.epochs = 60;
    c.seed = 12;
    worst_kl = std::max(worst_kl, train_prior(l.data.train, loss, c).curve.back().kl);
  }
  return {monotone && gain && worst_kl <= kKlLimit,
          "mean accuracy by ensemble size" + curve + (monotone ? " (non-decreasing within 2 SE)" : " (drops beyond 2 SE)") +
              "; tau 1e12 KL " + fmt(worst_kl) + " (limit 1e-2)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"linear algebra oracle", linear_algebra},
      {"gradients against finite differences", differentiation},
      {"SGLD conjugate Gaussian", sgld_conjugate},
      {"pendulum physics", pendulum_physics},
      {"MMD values and invariances", mmd_checks},
      {"AUROC pair-counting oracle", auroc_oracle},
      {"checkpoint and dataset files", file_formats},
      {"learned prior samples", prior_sampling},
      {"prior transfer to a wider target", prior_transfer},
      {"downstream direction", downstream},
      {"accuracy-matched fairness samples", pareto_window},
      {"ablation trends", ablations},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first << ": " << o.detail
              << " [" << fmt(secs) << "s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
