#include "bnnp/app.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <omp.h>

#include <CLI11.hpp>

#include "bnnp/checkpoint.hpp"
#include "bnnp/config.hpp"
#include "bnnp/data_io.hpp"
#include "bnnp/metrics.hpp"
#include "bnnp/posterior.hpp"
#include "bnnp/prior_learning.hpp"
#include "bnnp/transfer.hpp"

namespace bnnp {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io_error:
    case ErrorKind::format_error: return kExitIo;
    case ErrorKind::numerical_failure: return kExitNumerical;
    case ErrorKind::invalid_shape:
    case ErrorKind::invalid_mask:
    case ErrorKind::degenerate_batch:
    case ErrorKind::degenerate_labels:
    case ErrorKind::invalid_config: return kExitUsage;
  }
  return kExitUsage;
}

std::string resolve_output_path(const std::string& path) {
  const char* root = std::getenv("BNNP_OUTPUT_ROOT");
  const std::filesystem::path p(path);
  if (root == nullptr || *root == '\0' || p.is_absolute()) return path;
  return (std::filesystem::path(root) / p).string();
}

namespace {

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? parse_run_config(ConfigFile::parse("")) : load_run_config(path);
}

ArchSpec arch_for(const RunConfig& cfg, const Dataset& data) {
  ArchSpec a = cfg.arch ? *cfg.arch : default_arch(data.task, data.features.cols());
  a.validate();
  if (a.input_dim() != data.features.cols())
    throw InvalidConfig("architecture input width " + std::to_string(a.input_dim()) + " differs from the " +
                        std::to_string(data.features.cols()) + " data features");
  return a;
}

void require_rows(const Dataset& d, const std::string& what) {
  if (d.size() == 0) throw InvalidConfig(what + " has no rows");
}

Prior to_prior(const Variational& q) {
  return std::visit([](const auto& v) -> Prior { return v; }, q);
}

std::string csv_path_next_to(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

// ---- commands ----

struct GenDataArgs {
  std::string task, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  if (!a.task.empty()) cfg.task = parse_task(a.task);
  if (a.seed) cfg.seed = *a.seed;
  cfg.data.task = cfg.task;
  const DatasetSplits splits = generate_task_data(cfg.data, cfg.seed);
  const std::filesystem::path dir(resolve_output_path(a.out));
  json manifest = {{"task", to_string(cfg.task)}, {"seed", cfg.seed}, {"format_version", kDataFormatVersion},
                   {"splits", json::object()}};
  for (const auto& [name, d] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
    const std::string file = std::string(name) + ".bnnd";
    save_dataset((dir / file).string(), *d);
    manifest["splits"][name] = {{"file", file}, {"rows", d->size()}};
  }
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  out << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
      << " train/val/test rows to " << dir.string() << "\n";
  return kExitOk;
}

struct TrainPriorArgs {
  std::string config, out, data;
  std::optional<std::uint64_t> seed;
};

int cmd_train_prior(const TrainPriorArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.prior.seed = derive_seed(cfg.seed, "prior_learning");
    cfg.swag.seed = derive_seed(cfg.seed, "prior_learning/swag");
  }
  std::string path = a.data;
  if (path.empty()) path = cfg.unlabeled_path.empty() ? cfg.train_path : cfg.unlabeled_path;
  if (path.empty()) throw InvalidConfig("train-prior needs run.unlabeled, run.train or --data");
  const Dataset data = load_dataset(path);
  require_rows(data, "unlabeled data");
  const ArchSpec arch = arch_for(cfg, data);
  const DomainLossSpec spec = resolve_loss_spec(cfg, data);
  const DomainLoss loss(spec, arch);

  PriorCheckpoint ckpt;
  ckpt.arch = arch;
  ckpt.seed = cfg.seed;
  ckpt.phi_kind = to_string(spec.kind);
  std::vector<EpochStats> curve;
  if (cfg.prior_method == PriorMethod::vi) {
    PriorTrainResult result = train_prior(data, loss, cfg.prior);
    ckpt.prior = to_prior(result.q);
    curve = std::move(result.curve);
    ckpt.provenance = {{"command", "train-prior"}, {"method", "vi"},
                       {"family", to_string(cfg.prior.family)}, {"tau", cfg.prior.tau},
                       {"beta", cfg.prior.beta}, {"epochs", cfg.prior.epochs}};
  } else {
    ckpt.prior = train_swag_prior(data, loss, cfg.swag, cfg.prior.tau, cfg.prior.base_prior_variance);
    ckpt.provenance = {{"command", "train-prior"}, {"method", "swag"}, {"components", cfg.swag.components},
                       {"tau", cfg.prior.tau}};
  }
  const std::string target = resolve_output_path(a.out);
  save_prior(target, ckpt);
  write_file(csv_path_next_to(target, ".curve.csv"), training_curve_csv(curve));
  out << "wrote " << family_tag(ckpt.prior) << " prior to " << target << "\n";
  return kExitOk;
}

struct SamplePriorArgs {
  std::string prior, phi_eval, arch, out, config;
  std::optional<double> isotropic;
  int n = 10;
  std::uint64_t seed = 0;
};

int cmd_sample_prior(const SamplePriorArgs& a, std::ostream& out) {
  const Dataset data = load_dataset(a.phi_eval);
  require_rows(data, "phi evaluation data");
  RunConfig cfg = config_or_default(a.config);
  ArchSpec arch;
  Prior prior;
  if (a.isotropic) {
    if (!(*a.isotropic > 0.0)) throw InvalidConfig("--isotropic variance must be positive");
    if (!a.arch.empty()) {
      arch = default_arch(data.task, data.features.cols());
      arch.layer_sizes = parse_layer_sizes(a.arch);
    } else {
      arch = arch_for(cfg, data);
    }
    prior = IsotropicPrior{*a.isotropic};
  } else {
    if (a.prior.empty()) throw InvalidConfig("sample-prior needs --prior or --isotropic");
    PriorCheckpoint ckpt = load_prior(a.prior);
    arch = ckpt.arch;
    prior = std::move(ckpt.prior);
  }
  arch.validate();
  if (arch.input_dim() != data.features.cols())
    throw InvalidConfig("prior architecture expects " + std::to_string(arch.input_dim()) + " features, data has " +
                        std::to_string(data.features.cols()));
  const DomainLoss loss(resolve_loss_spec(cfg, data), arch);
  const PriorDensity density(prior, arch.param_count());
  Rng rng = Rng(a.seed).split("sample-prior");
  std::vector<double> values;
  std::string csv = "sample,phi,se\n";
  for (int i = 0; i < a.n; ++i) {
    const ParamVector w = density.sample(rng);
    const double phi = loss.evaluate_all(w, data, Reduction::mean, nullptr);
    values.push_back(phi);
    csv += std::to_string(i) + "," + format_double(phi) + ",\n";
  }
  if (!values.empty()) {
    const Summary s = summarize(values);
    csv += "mean," + format_double(s.mean) + "," + format_double(s.se) + "\n";
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(resolve_output_path(a.out), csv);
  }
  return kExitOk;
}

struct SamplePosteriorArgs {
  std::string prior, data, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_samples;
};

int cmd_sample_posterior(const SamplePosteriorArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.sgld.seed = derive_seed(*a.seed, "posterior_sampling");
  if (a.n_samples) cfg.sgld.n_samples = *a.n_samples;
  const PriorCheckpoint ckpt = load_prior(a.prior);
  const Dataset data = load_dataset(a.data);
  require_rows(data, "training data");
  if (ckpt.arch.input_dim() != data.features.cols())
    throw InvalidConfig("prior architecture does not match the training features");
  cfg.sgld.likelihood = likelihood_for(ckpt.arch.head);
  cfg.sgld.validate();
  const Ensemble e = sgld_sample_components(data, ckpt.arch, ckpt.prior, cfg.sgld);
  const std::string dir = resolve_output_path(a.out);
  save_ensemble(dir, e,
                {{"method", "sgld"}, {"prior_family", family_tag(ckpt.prior)}, {"phi_kind", ckpt.phi_kind},
                 {"seed", cfg.sgld.seed}});
  out << "wrote " << e.size() << " posterior samples to " << dir << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string ensemble, data, spec, out, averaging, method;
  bool pareto = false;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  json info;
  Ensemble e = load_ensemble(a.ensemble, &info);
  if (!a.averaging.empty()) e.averaging = parse_averaging(a.averaging);
  const Dataset data = load_dataset(a.data);
  require_rows(data, "evaluation data");
  if (e.arch.input_dim() != data.features.cols()) throw InvalidConfig("ensemble architecture does not match the data");
  const RunConfig cfg = config_or_default(a.spec);
  const DomainLoss loss(resolve_loss_spec(cfg, data), e.arch);
  const TaskMetrics m = evaluate_task(e, data, loss, PhiMode::averaged_predictor);
  if (std::isnan(m.primary)) err << "warning: " << m.primary_name << " undefined on single-class labels, reported as NaN\n";
  const std::string method = a.method.empty() ? info.value("method", std::string("ensemble")) : a.method;
  const std::string task = to_string(data.task);
  std::vector<MetricRow> rows{{task, method, a.seed, m.primary_name, m.primary}};
  if (m.primary_name == "auroc") rows.push_back({task, method, a.seed, "accuracy", m.accuracy});
  rows.push_back({task, method, a.seed, "phi", m.phi});
  rows.push_back({task, method, a.seed, "members", static_cast<double>(e.size())});
  const std::string target = resolve_output_path(a.out);
  write_file(target, metrics_csv(rows));
  if (a.pareto) {
    std::vector<ParetoPoint> points;
    for (const auto& w : e.members)
      points.push_back({member_score(loss.net(), w, data), loss.evaluate_all(w, data, Reduction::mean, nullptr)});
    const ParetoResult pr = pareto_points(points);
    std::vector<ParetoRow> prow;
    for (std::size_t k = 0; k < pr.points.size(); ++k)
      prow.push_back({method, static_cast<Index>(k), pr.points[k].accuracy, pr.points[k].phi, pr.on_frontier[k]});
    write_file(csv_path_next_to(target, ".pareto.csv"), pareto_csv(prow));
  }
  out << m.primary_name << "=" << format_double(m.primary) << " phi=" << format_double(m.phi) << "\n";
  return kExitOk;
}

struct TransferArgs {
  std::string source, target_arch, method, probe, out, config;
  bool init_from_source = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int cmd_transfer(const TransferArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  TransferConfig t = cfg.transfer;
  t.method = parse_transfer_method(a.method);
  if (a.seed) t.seed = derive_seed(*a.seed, "prior_transfer");
  if (a.epochs) t.epochs = *a.epochs;
  t.init_from_source = t.init_from_source || a.init_from_source;
  const std::string source_bytes = read_file(a.source);
  const PriorCheckpoint source = decode_prior(source_bytes);
  t.target_arch = source.arch;
  t.target_arch.layer_sizes = parse_layer_sizes(a.target_arch);
  t.validate();
  const Dataset probe = load_dataset(a.probe);
  require_rows(probe, "probe data");
  if (probe.features.cols() != source.arch.input_dim()) throw InvalidConfig("probe features do not match the source");
  const TransferResult result = transfer_prior(source.prior, source.arch, probe.features, t);
  PriorCheckpoint target;
  target.arch = t.target_arch;
  target.prior = result.prior;
  target.seed = a.seed.value_or(cfg.seed);
  target.phi_kind = source.phi_kind;
  target.provenance = {{"command", "transfer-prior"},
                       {"method", to_string(t.method)},
                       {"source_hash", content_hash(source_bytes)},
                       {"source", source.provenance}};
  const std::string path = resolve_output_path(a.out);
  save_prior(path, target);
  std::string csv = "step,objective\n";
  for (std::size_t i = 0; i < result.objective.size(); ++i)
    csv += std::to_string(i) + "," + format_double(result.objective[i]) + "\n";
  write_file(csv_path_next_to(path, ".objective.csv"), csv);
  out << "wrote " << family_tag(target.prior) << " prior for " << format_layer_sizes(t.target_arch.layer_sizes)
      << " to " << path << "\n";
  return kExitOk;
}

struct LagrangianArgs {
  std::string data, unlabeled, config, out;
  std::optional<double> lambda;
  std::optional<int> ensemble;
  std::optional<std::uint64_t> seed;
};

int cmd_lagrangian(const LagrangianArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  if (a.lambda) cfg.lagrangian.lambda = *a.lambda;
  if (a.ensemble) cfg.ensemble_size = *a.ensemble;
  if (a.seed) cfg.lagrangian.seed = derive_seed(*a.seed, "baseline");
  cfg.validate();
  const Dataset data = load_dataset(a.data);
  require_rows(data, "training data");
  const Dataset unlabeled = a.unlabeled.empty() ? data : load_dataset(a.unlabeled);
  const ArchSpec arch = arch_for(cfg, data);
  const DomainLoss loss(resolve_loss_spec(cfg, unlabeled), arch);
  Ensemble e;
  e.arch = arch;
  for (int k = 0; k < cfg.ensemble_size; ++k) {
    LagrangianConfig lc = cfg.lagrangian;
    lc.seed = derive_seed(cfg.lagrangian.seed, "member/" + std::to_string(k));
    e.members.push_back(lagrangian_train(data, unlabeled, loss, lc));
  }
  const std::string method = cfg.lagrangian.lambda == 0.0 ? "supervised"
                             : cfg.ensemble_size > 1       ? "lagrangian-ensemble"
                                                           : "lagrangian";
  const std::string dir = resolve_output_path(a.out);
  save_ensemble(dir, e, {{"method", method}, {"lambda", cfg.lagrangian.lambda}});
  out << "wrote " << e.size() << " " << method << " models to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn, sample and transfer informative priors for Bayesian neural networks", "bnnp"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "Upper bound on worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate train/val/test data files");
  c_gen->add_option("--task", gen.task, "pendulum | decoy | fairness | clinical");
  c_gen->add_option("--config", gen.config)->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out)->required();
  c_gen->add_option("--seed", gen.seed);

  TrainPriorArgs tp;
  auto* c_train = app.add_subcommand("train-prior", "Learn a prior from a domain loss");
  c_train->add_option("--config", tp.config)->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tp.out)->required();
  c_train->add_option("--data", tp.data, "Unlabeled data (overrides the config)")->check(CLI::ExistingFile);
  c_train->add_option("--seed", tp.seed);

  SamplePriorArgs sp;
  auto* c_sp = app.add_subcommand("sample-prior", "Per-sample phi of prior draws as CSV");
  c_sp->add_option("--prior", sp.prior)->check(CLI::ExistingFile);
  c_sp->add_option("--isotropic", sp.isotropic, "Use N(0, v I) instead of a checkpoint");
  c_sp->add_option("--arch", sp.arch, "Layer sizes for --isotropic, e.g. 4,8,4");
  c_sp->add_option("--n", sp.n)->check(CLI::NonNegativeNumber);
  c_sp->add_option("--phi-eval", sp.phi_eval)->required()->check(CLI::ExistingFile);
  c_sp->add_option("--config", sp.config)->check(CLI::ExistingFile);
  c_sp->add_option("--seed", sp.seed);
  c_sp->add_option("--out", sp.out, "CSV path (default: stdout)");

  SamplePosteriorArgs spo;
  auto* c_post = app.add_subcommand("sample-posterior", "SGLD posterior ensemble under a prior");
  c_post->add_option("--prior", spo.prior)->required()->check(CLI::ExistingFile);
  c_post->add_option("--data", spo.data)->required()->check(CLI::ExistingFile);
  c_post->add_option("--config", spo.config)->check(CLI::ExistingFile);
  c_post->add_option("--out", spo.out)->required();
  c_post->add_option("--seed", spo.seed);
  c_post->add_option("--n-samples", spo.n_samples)->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Metrics CSV of an ensemble");
  c_eval->add_option("--ensemble", ev.ensemble)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--spec", ev.spec, "Config whose [domain_losses] overrides the default loss")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out)->required();
  c_eval->add_option("--averaging", ev.averaging, "logits | predictions");
  c_eval->add_flag("--pareto", ev.pareto, "Also write the per-member Pareto CSV");
  c_eval->add_option("--method", ev.method, "Method label for the CSV rows");
  c_eval->add_option("--seed", ev.seed, "Seed label for the CSV rows");

  TransferArgs tr;
  auto* c_tr = app.add_subcommand("transfer-prior", "Transfer a prior to another architecture");
  c_tr->add_option("--source", tr.source)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--target-arch", tr.target_arch)->required();
  c_tr->add_option("--method", tr.method, "mmd | m1 | m1m2 | m1-swag")->required();
  c_tr->add_option("--probe", tr.probe)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out)->required();
  c_tr->add_option("--config", tr.config)->check(CLI::ExistingFile);
  c_tr->add_flag("--init-from-source", tr.init_from_source);
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);

  LagrangianArgs lg;
  auto* c_lg = app.add_subcommand("baseline-lagrangian", "Supervised training with a phi penalty");
  c_lg->add_option("--data", lg.data)->required()->check(CLI::ExistingFile);
  c_lg->add_option("--unlabeled", lg.unlabeled)->check(CLI::ExistingFile);
  c_lg->add_option("--lambda", lg.lambda);
  c_lg->add_option("--config", lg.config)->check(CLI::ExistingFile);
  c_lg->add_option("--ensemble", lg.ensemble)->check(CLI::PositiveNumber);
  c_lg->add_option("--out", lg.out)->required();
  c_lg->add_option("--seed", lg.seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (jobs > 0) omp_set_num_threads(jobs);

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen, out);
    if (c_train->parsed()) return cmd_train_prior(tp, out);
    if (c_sp->parsed()) return cmd_sample_prior(sp, out);
    if (c_post->parsed()) return cmd_sample_posterior(spo, out);
    if (c_eval->parsed()) return cmd_evaluate(ev, out, err);
    if (c_tr->parsed()) return cmd_transfer(tr, out);
    if (c_lg->parsed()) return cmd_lagrangian(lg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace bnnp
