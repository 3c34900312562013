#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bnnp/datasets.hpp"
#include "bnnp/ensemble.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/pendulum.hpp"

namespace bnnp {

enum class PhiKind { background, group_fairness, clinical, energy_damping };

// How the background loss turns a vector output into input gradients.
enum class BackgroundMode {
  log_prob_sum,          // ||m .* grad_x sum_c log p_c||^2 (softmax heads)
  log_softmax_jacobian,  // sum_c ||m .* grad_x log p_c||^2 (softmax heads)
  logit_jacobian,        // sum_c ||m .* grad_x h_c||^2
};

std::string to_string(PhiKind k);
PhiKind parse_phi_kind(std::string_view s);
std::string to_string(BackgroundMode m);
BackgroundMode parse_background_mode(std::string_view s);

// Rule region in standardised feature units:
// (lactate > t AND bicarbonate < t) OR (creatinine > t AND bun > t AND urine < t).
struct ClinicalRegion {
  int lactate_index = kLactate;
  int bicarbonate_index = kBicarbonate;
  int creatinine_index = kCreatinine;
  int bun_index = kBun;
  int urine_index = kUrine;
  double lactate = 0.0;
  double bicarbonate = 0.0;
  double creatinine = 0.0;
  double bun = 0.0;
  double urine = 0.0;

  void validate(int feature_dim) const;
  bool contains(VectorRef x) const;

  static ClinicalRegion from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct DomainLossSpec {
  PhiKind kind = PhiKind::background;
  BackgroundMode background_mode = BackgroundMode::log_prob_sum;
  // Fixed background mask; rows of a dataset with per-row masks use those instead.
  std::vector<int> background_mask;
  int group_index = kFairnessGroupColumn;
  ClinicalRegion region;
  PendulumConfig pendulum;

  void validate(const ArchSpec& arch) const;
  nlohmann::json to_json() const;
  static DomainLossSpec from_json(const nlohmann::json& j);
};

// The task's natural loss, with auxiliary data taken from the dataset metadata.
DomainLossSpec default_spec(const Dataset& d);

struct PhiValue {
  double value = 0.0;
  ParamVector grad;  // empty when the gradient was not requested
};

PhiValue phi_background(const Mlp& net, const ParamVector& w, VectorRef x, const std::vector<int>& mask,
                        BackgroundMode mode, bool want_grad);

// `groups[i]` is 1 for group a and 0 for group b. Needs a single sigmoid output.
PhiValue phi_group_fairness_batch(const Mlp& net, const ParamVector& w, const RowMatrix& X,
                                  const std::vector<int>& groups, bool want_grad);

PhiValue phi_clinical(const Mlp& net, const ParamVector& w, VectorRef x, const ClinicalRegion& region,
                      bool want_grad);

PhiValue phi_energy_damping(const Mlp& net, const ParamVector& w, VectorRef x, const PendulumConfig& config,
                            bool want_grad);

enum class Reduction {
  mean,         // (1/B) sum_i phi_i; fairness: the batch-level value
  sum_squares,  // sum_i phi_i^2; fairness: B * phi^2
};

// Evaluates one spec on rows of a dataset for one network.
class DomainLoss {
 public:
  DomainLoss(DomainLossSpec spec, ArchSpec arch);

  const DomainLossSpec& spec() const noexcept { return spec_; }
  const Mlp& net() const noexcept { return net_; }

  // Reduced value over `rows`; when grad is non-null the gradient of the
  // reduced value is added into *grad. Fairness batches lacking a group throw
  // DegenerateBatch.
  double evaluate(const ParamVector& w, const Dataset& data, std::span<const Index> rows, Reduction reduction,
                  ParamVector* grad) const;
  double evaluate_all(const ParamVector& w, const Dataset& data, Reduction reduction, ParamVector* grad) const;

  // Mean phi and mean gradient over a batch.
  PhiValue batch_mean(const ParamVector& w, const Dataset& data, std::span<const Index> rows) const;

  // Per-row phi values (not defined for fairness, which is batch-level).
  Vector per_example(const ParamVector& w, const Dataset& data, std::span<const Index> rows) const;

  // Mean phi of the ensemble's averaged predictor over all rows.
  double ensemble_value(const Ensemble& e, const Dataset& data) const;

 private:
  std::vector<int> row_mask(const Dataset& data, Index row) const;
  PhiValue row_phi(const ParamVector& w, const Dataset& data, Index row, bool want_grad) const;

  DomainLossSpec spec_;
  Mlp net_;
};

}  // namespace bnnp
