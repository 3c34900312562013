#include "bnnp/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>

#include "bnnp/data_io.hpp"
#include "bnnp/errors.hpp"
#include "bnnp/rng.hpp"

namespace bnnp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string strip_quotes(std::string_view v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InvalidConfig(where + ": '" + text + "' is not a valid number");
  return value;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text) {
  ConfigFile file;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidConfig("line " + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw InvalidConfig("line " + std::to_string(line_no) + ": empty section name");
      file.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InvalidConfig("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw InvalidConfig("line " + std::to_string(line_no) + ": key outside any section");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw InvalidConfig("line " + std::to_string(line_no) + ": empty key");
    auto& entries = file.sections_[section];
    if (entries.contains(key))
      throw InvalidConfig("line " + std::to_string(line_no) + ": duplicate key " + section + "." + key);
    entries[key] = Entry{strip_quotes(trim(line.substr(eq + 1))), line_no};
  }
  return file;
}

ConfigFile ConfigFile::load(const std::string& path) {
  ConfigFile f = parse(read_file(path));
  f.origin_ = path;
  return f;
}

bool ConfigFile::has_section(const std::string& section) const { return sections_.contains(section); }

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.contains(key);
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return nullptr;
  const auto e = it->second.find(key);
  if (e == it->second.end()) return nullptr;
  e->second.used = true;
  return &e->second;
}

std::optional<std::string> ConfigFile::get_string(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> ConfigFile::get_double(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return parse_number<double>(e->value, origin_ + ":" + std::to_string(e->line) + " " + section + "." + key);
}

std::optional<std::int64_t> ConfigFile::get_int(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return parse_number<std::int64_t>(e->value, origin_ + ":" + std::to_string(e->line) + " " + section + "." + key);
}

std::optional<std::uint64_t> ConfigFile::get_uint(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return parse_number<std::uint64_t>(e->value, origin_ + ":" + std::to_string(e->line) + " " + section + "." + key);
}

std::optional<bool> ConfigFile::get_bool(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  throw InvalidConfig(origin_ + ":" + std::to_string(e->line) + " " + section + "." + key + ": '" + e->value +
                      "' is not a boolean");
}

void ConfigFile::check_all_used() const {
  for (const auto& [section, entries] : sections_)
    for (const auto& [key, entry] : entries)
      if (!entry.used)
        throw InvalidConfig(origin_ + ":" + std::to_string(entry.line) + " unknown key " + section + "." + key);
}

std::string to_string(PriorMethod m) { return m == PriorMethod::vi ? "vi" : "swag"; }

PriorMethod parse_prior_method(std::string_view s) {
  if (s == "vi") return PriorMethod::vi;
  if (s == "swag") return PriorMethod::swag;
  throw InvalidConfig("unknown prior method '" + std::string(s) + "'");
}

ArchSpec default_arch(Task task, Index input_dim) {
  ArchSpec a;
  a.activation = Activation::relu;
  const int in = static_cast<int>(input_dim);
  switch (task) {
    case Task::pendulum: a.layer_sizes = {in, 8, 4}; a.head = OutputHead::identity; break;
    case Task::decoy: a.layer_sizes = {in, 8, 10}; a.head = OutputHead::softmax; break;
    case Task::fairness: a.layer_sizes = {in, 16, 1}; a.head = OutputHead::sigmoid; break;
    case Task::clinical: a.layer_sizes = {in, 32, 1}; a.head = OutputHead::sigmoid; break;
  }
  return a;
}

void RunConfig::validate() const {
  if (arch) arch->validate();
  prior.validate();
  if (prior_method == PriorMethod::swag) swag.validate();
  sgld.validate();
  lagrangian.validate();
  if (ensemble_size < 1) throw InvalidConfig("baseline.ensemble_size must be positive");
}

DomainLossSpec resolve_loss_spec(const RunConfig& cfg, const Dataset& d) {
  DomainLossSpec spec = default_spec(d);
  if (cfg.phi_kind) spec.kind = *cfg.phi_kind;
  if (cfg.background_mode) spec.background_mode = *cfg.background_mode;
  if (cfg.group_index) spec.group_index = *cfg.group_index;
  return spec;
}

RunConfig parse_run_config(const ConfigFile& f, const std::string& base_dir) {
  RunConfig c;
  auto str = [&](const char* s, const char* k, std::string& out) {
    if (auto v = f.get_string(s, k)) out = *v;
  };
  auto dbl = [&](const char* s, const char* k, double& out) {
    if (auto v = f.get_double(s, k)) out = *v;
  };
  auto integer = [&](const char* s, const char* k, auto& out) {
    if (auto v = f.get_int(s, k)) out = static_cast<std::decay_t<decltype(out)>>(*v);
  };
  auto boolean = [&](const char* s, const char* k, bool& out) {
    if (auto v = f.get_bool(s, k)) out = *v;
  };

  if (auto v = f.get_string("run", "task")) c.task = parse_task(*v);
  if (auto v = f.get_uint("run", "seed")) c.seed = *v;
  str("run", "output_dir", c.output_dir);
  auto path = [&](const char* k, std::string& out) {
    if (auto v = f.get_string("run", k)) {
      std::filesystem::path p(*v);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      if (!std::filesystem::exists(p)) throw InvalidConfig("run." + std::string(k) + ": no such file " + p.string());
      out = p.string();
    }
  };
  path("train", c.train_path);
  path("val", c.val_path);
  path("test", c.test_path);
  path("unlabeled", c.unlabeled_path);

  if (f.has_section("nn_core")) {
    ArchSpec a;
    if (auto v = f.get_string("nn_core", "layers")) a.layer_sizes = parse_layer_sizes(*v);
    else throw InvalidConfig("nn_core.layers is required when [nn_core] is present");
    if (auto v = f.get_string("nn_core", "activation")) a.activation = parse_activation(*v);
    if (auto v = f.get_string("nn_core", "head")) a.head = parse_output_head(*v);
    c.arch = a;
  }

  auto& d = c.data;
  d.task = c.task;
  dbl("datasets", "pendulum_l1", d.pendulum.l1);
  dbl("datasets", "pendulum_l2", d.pendulum.l2);
  dbl("datasets", "pendulum_m1", d.pendulum.m1);
  dbl("datasets", "pendulum_m2", d.pendulum.m2);
  dbl("datasets", "pendulum_c1", d.pendulum.c1);
  dbl("datasets", "pendulum_c2", d.pendulum.c2);
  dbl("datasets", "pendulum_g", d.pendulum.g);
  dbl("datasets", "pendulum_dt", d.pendulum.dt);
  integer("datasets", "pendulum_steps_per_sample", d.pendulum.steps_per_sample);
  integer("datasets", "pendulum_train_trajectories", d.pendulum_train_trajectories);
  integer("datasets", "pendulum_eval_trajectories", d.pendulum_eval_trajectories);
  integer("datasets", "pendulum_traj_len", d.pendulum_traj_len);
  integer("datasets", "decoy_train", d.decoy_train);
  integer("datasets", "decoy_val", d.decoy_val);
  integer("datasets", "decoy_test", d.decoy_test);
  if (auto v = f.get_string("datasets", "decoy_source")) {
    if (*v == "synthetic") d.decoy.source = DecoyConfig::Source::synthetic_glyphs;
    else if (*v == "idx") d.decoy.source = DecoyConfig::Source::idx_files;
    else throw InvalidConfig("datasets.decoy_source must be synthetic or idx");
  }
  str("datasets", "decoy_train_images", d.decoy.train_images);
  str("datasets", "decoy_train_labels", d.decoy.train_labels);
  str("datasets", "decoy_test_images", d.decoy.test_images);
  str("datasets", "decoy_test_labels", d.decoy.test_labels);
  integer("datasets", "fairness_n_samples", d.fairness.n_samples);
  integer("datasets", "fairness_feature_dim", d.fairness.feature_dim);
  dbl("datasets", "fairness_group_gap", d.fairness.group_gap);
  dbl("datasets", "fairness_group_feature_shift", d.fairness.group_feature_shift);
  integer("datasets", "clinical_n_samples", d.clinical.n_samples);
  dbl("datasets", "clinical_label_noise", d.clinical.label_noise);
  dbl("datasets", "clinical_lactate_threshold", d.clinical.lactate_threshold);
  dbl("datasets", "clinical_bicarbonate_threshold", d.clinical.bicarbonate_threshold);
  dbl("datasets", "clinical_creatinine_quantile", d.clinical.creatinine_quantile);
  dbl("datasets", "clinical_bun_quantile", d.clinical.bun_quantile);
  dbl("datasets", "clinical_urine_quantile", d.clinical.urine_quantile);

  if (auto v = f.get_string("domain_losses", "kind")) c.phi_kind = parse_phi_kind(*v);
  if (auto v = f.get_string("domain_losses", "background_mode")) c.background_mode = parse_background_mode(*v);
  if (auto v = f.get_int("domain_losses", "group_index")) c.group_index = static_cast<int>(*v);

  if (auto v = f.get_string("prior_learning", "method")) c.prior_method = parse_prior_method(*v);
  auto& p = c.prior;
  dbl("prior_learning", "tau", p.tau);
  dbl("prior_learning", "beta", p.beta);
  integer("prior_learning", "rank", p.rank);
  dbl("prior_learning", "jitter_sigma", p.jitter_sigma);
  dbl("prior_learning", "base_prior_variance", p.base_prior_variance);
  integer("prior_learning", "mc_samples", p.mc_samples);
  dbl("prior_learning", "learning_rate", p.learning_rate);
  integer("prior_learning", "epochs", p.epochs);
  integer("prior_learning", "batch_size", p.batch_size);
  dbl("prior_learning", "init_scale", p.init_scale);
  if (auto v = f.get_string("prior_learning", "family")) p.family = parse_family(*v);
  integer("prior_learning", "swag_components", c.swag.components);
  integer("prior_learning", "swag_warmup_epochs", c.swag.warmup_epochs);
  integer("prior_learning", "swag_snapshot_interval_epochs", c.swag.snapshot_interval_epochs);
  integer("prior_learning", "swag_snapshots_per_component", c.swag.snapshots_per_component);
  dbl("prior_learning", "swag_learning_rate", c.swag.learning_rate);
  integer("prior_learning", "swag_batch_size", c.swag.batch_size);

  auto& s = c.sgld;
  dbl("posterior_sampling", "step_size", s.step_size);
  integer("posterior_sampling", "epochs", s.epochs);
  integer("posterior_sampling", "batch_size", s.batch_size);
  integer("posterior_sampling", "n_samples", s.n_samples);
  integer("posterior_sampling", "burnin_epochs", s.burnin_epochs);
  integer("posterior_sampling", "thin_epochs", s.thin_epochs);
  dbl("posterior_sampling", "prior_weight", s.prior_weight);
  dbl("posterior_sampling", "noise_variance", s.noise_variance);
  integer("posterior_sampling", "dataset_size", s.dataset_size);
  boolean("posterior_sampling", "inject_noise", s.inject_noise);

  auto& t = c.transfer;
  if (auto v = f.get_string("prior_transfer", "method")) t.method = parse_transfer_method(*v);
  integer("prior_transfer", "n_function_samples", t.n_function_samples);
  integer("prior_transfer", "probe_set_size", t.probe_set_size);
  if (auto v = f.get_string("prior_transfer", "kernel_bandwidth"))
    t.kernel_bandwidth = *v == "median" ? 0.0 : parse_number<double>(*v, "prior_transfer.kernel_bandwidth");
  dbl("prior_transfer", "learning_rate", t.learning_rate);
  integer("prior_transfer", "epochs", t.epochs);
  if (auto v = f.get_string("prior_transfer", "target_arch")) t.target_arch.layer_sizes = parse_layer_sizes(*v);
  integer("prior_transfer", "target_rank", t.target_rank);
  dbl("prior_transfer", "target_jitter", t.target_jitter);
  dbl("prior_transfer", "init_scale", t.init_scale);
  boolean("prior_transfer", "init_from_source", t.init_from_source);
  dbl("prior_transfer", "swag_learning_rate", t.swag_learning_rate);
  integer("prior_transfer", "swag_batch_size", t.swag_batch_size);
  integer("prior_transfer", "snapshot_interval_epochs", t.snapshot_interval_epochs);
  integer("prior_transfer", "snapshots", t.snapshots);

  auto& l = c.lagrangian;
  dbl("baseline", "lambda", l.lambda);
  dbl("baseline", "learning_rate", l.learning_rate);
  integer("baseline", "epochs", l.epochs);
  integer("baseline", "batch_size", l.batch_size);
  if (auto v = f.get_string("baseline", "regression_loss")) {
    if (*v == "l2") l.regression_loss = RegressionLoss::l2;
    else if (*v == "l1") l.regression_loss = RegressionLoss::l1;
    else throw InvalidConfig("baseline.regression_loss must be l1 or l2");
  }
  integer("baseline", "ensemble_size", c.ensemble_size);

  f.check_all_used();

  // One root seed; every consumer gets its own derived stream.
  p.seed = derive_seed(c.seed, "prior_learning");
  c.swag.seed = derive_seed(c.seed, "prior_learning/swag");
  s.seed = derive_seed(c.seed, "posterior_sampling");
  t.seed = derive_seed(c.seed, "prior_transfer");
  l.seed = derive_seed(c.seed, "baseline");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const ConfigFile f = ConfigFile::load(path);
  return parse_run_config(f, std::filesystem::path(path).parent_path().string());
}

}  // namespace bnnp
