#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnnp/datasets.hpp"
#include "bnnp/domain_losses.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/posterior.hpp"
#include "bnnp/prior_learning.hpp"
#include "bnnp/transfer.hpp"

namespace bnnp {

// Flat "key = value" text grouped under "[section]" headers; '#' and ';'
// start comments. Every key must be read exactly once through the typed
// getters, and check_all_used() rejects the leftovers.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::string& path);

  bool has_section(const std::string& section) const;
  bool has(const std::string& section, const std::string& key) const;

  std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
  std::optional<double> get_double(const std::string& section, const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& section, const std::string& key) const;
  std::optional<std::uint64_t> get_uint(const std::string& section, const std::string& key) const;
  std::optional<bool> get_bool(const std::string& section, const std::string& key) const;

  // Throws InvalidConfig naming the first key that no getter consumed.
  void check_all_used() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };
  const Entry* find(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string origin_ = "<config>";
};

enum class PriorMethod { vi, swag };

std::string to_string(PriorMethod m);
PriorMethod parse_prior_method(std::string_view s);

// Natural architecture of each task: two-layer ReLU networks.
ArchSpec default_arch(Task task, Index input_dim);

struct RunConfig {
  Task task = Task::pendulum;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  // Dataset files; empty entries fall back to the generator output layout.
  std::string train_path;
  std::string val_path;
  std::string test_path;
  std::string unlabeled_path;  // defaults to train_path

  DataGenConfig data;
  std::optional<ArchSpec> arch;             // default_arch(task, ...) when unset
  // Overrides of default_spec(dataset); the rest always comes from the data.
  std::optional<PhiKind> phi_kind;
  std::optional<BackgroundMode> background_mode;
  std::optional<int> group_index;
  PriorMethod prior_method = PriorMethod::vi;
  PriorTrainConfig prior;
  SwagPriorConfig swag;
  SgldConfig sgld;
  TransferConfig transfer;
  LagrangianConfig lagrangian;
  int ensemble_size = 1;  // baseline-lagrangian seeds

  void validate() const;
};

DomainLossSpec resolve_loss_spec(const RunConfig& cfg, const Dataset& d);

// Closed-world parse; relative dataset paths resolve against `base_dir`
// and must exist.
RunConfig parse_run_config(const ConfigFile& file, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

}  // namespace bnnp
