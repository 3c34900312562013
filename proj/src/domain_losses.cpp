#include "bnnp/domain_losses.hpp"

#include <algorithm>
#include <cmath>

#include "bnnp/errors.hpp"
#include "bnnp/kernels.hpp"

namespace bnnp {

using nlohmann::json;

std::string to_string(PhiKind k) {
  switch (k) {
    case PhiKind::background: return "background";
    case PhiKind::group_fairness: return "group_fairness";
    case PhiKind::clinical: return "clinical";
    case PhiKind::energy_damping: return "energy_damping";
  }
  return "unknown";
}

PhiKind parse_phi_kind(std::string_view s) {
  if (s == "background") return PhiKind::background;
  if (s == "group_fairness") return PhiKind::group_fairness;
  if (s == "clinical") return PhiKind::clinical;
  if (s == "energy_damping") return PhiKind::energy_damping;
  throw InvalidConfig("unknown phi kind '" + std::string(s) + "'");
}

std::string to_string(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::log_prob_sum: return "log_prob_sum";
    case BackgroundMode::log_softmax_jacobian: return "log_softmax_jacobian";
    case BackgroundMode::logit_jacobian: return "logit_jacobian";
  }
  return "unknown";
}

BackgroundMode parse_background_mode(std::string_view s) {
  if (s == "log_prob_sum") return BackgroundMode::log_prob_sum;
  if (s == "log_softmax_jacobian") return BackgroundMode::log_softmax_jacobian;
  if (s == "logit_jacobian") return BackgroundMode::logit_jacobian;
  throw InvalidConfig("unknown background mode '" + std::string(s) + "'");
}

// ---- ClinicalRegion ----

void ClinicalRegion::validate(int feature_dim) const {
  const std::vector<int> idx = {lactate_index, bicarbonate_index, creatinine_index, bun_index, urine_index};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= feature_dim) throw InvalidConfig("clinical region index out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (idx[i] == idx[j]) throw InvalidConfig("clinical region indices must be distinct");
  }
  for (double t : {lactate, bicarbonate, creatinine, bun, urine})
    if (!std::isfinite(t)) throw InvalidConfig("clinical thresholds must be finite");
}

bool ClinicalRegion::contains(VectorRef x) const {
  const bool rule_a = x[lactate_index] > lactate && x[bicarbonate_index] < bicarbonate;
  const bool rule_b = x[creatinine_index] > creatinine && x[bun_index] > bun && x[urine_index] < urine;
  return rule_a || rule_b;
}

ClinicalRegion ClinicalRegion::from_json(const json& j) {
  ClinicalRegion r;
  r.lactate_index = j.at("lactate_index").get<int>();
  r.bicarbonate_index = j.at("bicarbonate_index").get<int>();
  r.creatinine_index = j.at("creatinine_index").get<int>();
  r.bun_index = j.at("bun_index").get<int>();
  r.urine_index = j.at("urine_index").get<int>();
  r.lactate = j.at("lactate").get<double>();
  r.bicarbonate = j.at("bicarbonate").get<double>();
  r.creatinine = j.at("creatinine").get<double>();
  r.bun = j.at("bun").get<double>();
  r.urine = j.at("urine").get<double>();
  return r;
}

json ClinicalRegion::to_json() const {
  return {{"lactate_index", lactate_index}, {"bicarbonate_index", bicarbonate_index},
          {"creatinine_index", creatinine_index}, {"bun_index", bun_index},
          {"urine_index", urine_index}, {"lactate", lactate}, {"bicarbonate", bicarbonate},
          {"creatinine", creatinine}, {"bun", bun}, {"urine", urine}};
}

// ---- DomainLossSpec ----

void DomainLossSpec::validate(const ArchSpec& arch) const {
  arch.validate();
  switch (kind) {
    case PhiKind::background:
      for (int j : background_mask)
        if (j < 0 || j >= arch.input_dim()) throw InvalidMask("background mask index out of range");
      break;
    case PhiKind::group_fairness:
      if (group_index < 0 || group_index >= arch.input_dim()) throw InvalidConfig("group index out of range");
      if (arch.output_dim() != 1) throw InvalidShape("group fairness needs a single-output network");
      break;
    case PhiKind::clinical:
      region.validate(arch.input_dim());
      if (arch.output_dim() != 1) throw InvalidShape("clinical loss needs a single-output network");
      break;
    case PhiKind::energy_damping:
      pendulum.validate();
      if (arch.input_dim() != 4 || arch.output_dim() != 4)
        throw InvalidShape("energy loss needs a 4-input 4-output network");
      break;
  }
}

json DomainLossSpec::to_json() const {
  json j = {{"kind", bnnp::to_string(kind)}};
  switch (kind) {
    case PhiKind::background:
      j["background_mode"] = bnnp::to_string(background_mode);
      j["background_mask"] = background_mask;
      break;
    case PhiKind::group_fairness: j["group_index"] = group_index; break;
    case PhiKind::clinical: j["region"] = region.to_json(); break;
    case PhiKind::energy_damping: j["pendulum"] = bnnp::to_json(pendulum); break;
  }
  return j;
}

DomainLossSpec DomainLossSpec::from_json(const json& j) {
  DomainLossSpec s;
  s.kind = parse_phi_kind(j.at("kind").get<std::string>());
  switch (s.kind) {
    case PhiKind::background:
      s.background_mode = parse_background_mode(j.value("background_mode", std::string("log_prob_sum")));
      s.background_mask = j.value("background_mask", std::vector<int>{});
      break;
    case PhiKind::group_fairness: s.group_index = j.at("group_index").get<int>(); break;
    case PhiKind::clinical: s.region = ClinicalRegion::from_json(j.at("region")); break;
    case PhiKind::energy_damping: s.pendulum = pendulum_config_from_json(j.at("pendulum")); break;
  }
  return s;
}

DomainLossSpec default_spec(const Dataset& d) {
  DomainLossSpec s;
  try {
    switch (d.task) {
      case Task::pendulum:
        s.kind = PhiKind::energy_damping;
        s.pendulum = pendulum_config_from_json(d.meta.at("pendulum"));
        break;
      case Task::decoy: s.kind = PhiKind::background; break;
      case Task::fairness:
        s.kind = PhiKind::group_fairness;
        s.group_index = d.meta.value("group_index", kFairnessGroupColumn);
        break;
      case Task::clinical:
        s.kind = PhiKind::clinical;
        s.region = ClinicalRegion::from_json(d.meta.at("region_std"));
        break;
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("dataset metadata lacks domain-loss data: ") + e.what());
  }
  return s;
}

// ---- individual losses ----

namespace {

bool uses_softmax(const Mlp& net, BackgroundMode mode) {
  return net.arch().head == OutputHead::softmax && mode != BackgroundMode::logit_jacobian;
}

// Background value from outputs h and their input Jacobian J.
double background_from_jacobian(const Vector& h, const Matrix& J, const Vector& m, OutputHead head,
                                BackgroundMode mode) {
  const bool soft = head == OutputHead::softmax && mode != BackgroundMode::logit_jacobian;
  if (soft && mode == BackgroundMode::log_prob_sum) {
    OutputFunctional f{OutputFunctional::Kind::log_prob_sum, 0};
    return m.cwiseProduct(J.transpose() * f.gradient(h)).squaredNorm();
  }
  double v = 0.0;
  for (Index c = 0; c < h.size(); ++c) {
    OutputFunctional f{soft ? OutputFunctional::Kind::log_softmax_component : OutputFunctional::Kind::component,
                       static_cast<int>(c)};
    v += m.cwiseProduct(J.transpose() * f.gradient(h)).squaredNorm();
  }
  return v;
}

double clinical_from_output(const Vector& h, VectorRef x, const ClinicalRegion& region) {
  if (!region.contains(x)) return 0.0;
  return std::max(0.0, 1.0 - sigmoid(h[0]));
}

double energy_from_output(const Vector& h, VectorRef x, const PendulumConfig& c) {
  const double gap = pendulum_energy(PendulumState::from_vector(h), c) - pendulum_energy(PendulumState::from_vector(x), c);
  return gap > 0.0 ? gap : 0.0;
}

}  // namespace

PhiValue phi_background(const Mlp& net, const ParamVector& w, VectorRef x, const std::vector<int>& mask,
                        BackgroundMode mode, bool want_grad) {
  const Vector m = net.mask_vector(mask);
  PhiValue out;
  if (want_grad) out.grad = ParamVector::Zero(net.param_count());
  if (mask.empty()) {
    if (w.size() != net.param_count()) throw InvalidShape("parameter vector length mismatch");
    if (x.size() != net.input_dim()) throw InvalidShape("input length mismatch");
    return out;
  }
  ParamVector* g = want_grad ? &out.grad : nullptr;
  if (uses_softmax(net, mode) && mode == BackgroundMode::log_prob_sum) {
    out.value = net.input_grad_penalty(w, x, m, {OutputFunctional::Kind::log_prob_sum, 0}, g);
    return out;
  }
  const auto kind = uses_softmax(net, mode) ? OutputFunctional::Kind::log_softmax_component
                                            : OutputFunctional::Kind::component;
  for (int c = 0; c < net.output_dim(); ++c) out.value += net.input_grad_penalty(w, x, m, {kind, c}, g);
  return out;
}

PhiValue phi_group_fairness_batch(const Mlp& net, const ParamVector& w, const RowMatrix& X,
                                  const std::vector<int>& groups, bool want_grad) {
  if (net.output_dim() != 1) throw InvalidShape("group fairness needs a single-output network");
  if (static_cast<Index>(groups.size()) != X.rows()) throw InvalidShape("group labels differ from batch rows");
  Index na = 0;
  for (int g : groups) na += g == 1 ? 1 : 0;
  const Index nb = X.rows() - na;
  if (na == 0 || nb == 0) throw DegenerateBatch("batch lacks one of the two groups");
  const Index n = net.param_count();
  ParamVector grad_a = ParamVector::Zero(want_grad ? n : 0), grad_b = grad_a;
  auto group_mean = [&](int which, Index count, ParamVector* grad) {
    const double s = kernels::sum_rows(X.rows(), n, grad, [&](Index i, Vector* buf) {
      if (groups[static_cast<std::size_t>(i)] != which) return 0.0;
      const Vector x = X.row(i).transpose();
      const double p = sigmoid(net.forward(w, x)[0]);
      if (buf) {
        Vector up(1);
        up[0] = p * (1.0 - p);
        net.accumulate_grad_params(w, x, up, 1.0, *buf);
      }
      return p;
    });
    const double inv = 1.0 / static_cast<double>(count);
    if (grad) *grad *= inv;
    return s * inv;
  };
  const double pa = group_mean(1, na, want_grad ? &grad_a : nullptr);
  const double pb = group_mean(0, nb, want_grad ? &grad_b : nullptr);
  PhiValue out;
  out.value = (pa - pb) * (pa - pb);
  if (want_grad) out.grad = 2.0 * (pa - pb) * (grad_a - grad_b);
  return out;
}

PhiValue phi_clinical(const Mlp& net, const ParamVector& w, VectorRef x, const ClinicalRegion& region,
                      bool want_grad) {
  if (net.output_dim() != 1) throw InvalidShape("clinical loss needs a single-output network");
  PhiValue out;
  if (want_grad) out.grad = ParamVector::Zero(net.param_count());
  const Vector h = net.forward(w, x);
  if (!region.contains(x)) return out;
  const double p = sigmoid(h[0]);
  out.value = std::max(0.0, 1.0 - p);
  if (want_grad && out.value > 0.0) {
    Vector up(1);
    up[0] = -p * (1.0 - p);
    net.accumulate_grad_params(w, x, up, 1.0, out.grad);
  }
  return out;
}

PhiValue phi_energy_damping(const Mlp& net, const ParamVector& w, VectorRef x, const PendulumConfig& config,
                            bool want_grad) {
  if (net.output_dim() != 4 || net.input_dim() != 4) throw InvalidShape("energy loss needs a 4-input 4-output network");
  PhiValue out;
  if (want_grad) out.grad = ParamVector::Zero(net.param_count());
  const Vector h = net.forward(w, x);
  const PendulumState pred = PendulumState::from_vector(h);
  const double gap = pendulum_energy(pred, config) - pendulum_energy(PendulumState::from_vector(x), config);
  if (!(gap > 0.0)) return out;
  out.value = gap;
  if (want_grad) net.accumulate_grad_params(w, x, pendulum_energy_grad(pred, config), 1.0, out.grad);
  return out;
}

// ---- DomainLoss ----

DomainLoss::DomainLoss(DomainLossSpec spec, ArchSpec arch) : spec_(std::move(spec)), net_(std::move(arch)) {
  spec_.validate(net_.arch());
}

std::vector<int> DomainLoss::row_mask(const Dataset& data, Index row) const {
  if (!data.masks.empty()) {
    if (data.masks.cols() != net_.input_dim()) throw InvalidMask("dataset mask width differs from input dim");
    return data.masks.row_indices(row);
  }
  return spec_.background_mask;
}

PhiValue DomainLoss::row_phi(const ParamVector& w, const Dataset& data, Index row, bool want_grad) const {
  const Vector x = data.features.row(row).transpose();
  switch (spec_.kind) {
    case PhiKind::background:
      return phi_background(net_, w, x, row_mask(data, row), spec_.background_mode, want_grad);
    case PhiKind::clinical: return phi_clinical(net_, w, x, spec_.region, want_grad);
    case PhiKind::energy_damping: return phi_energy_damping(net_, w, x, spec_.pendulum, want_grad);
    case PhiKind::group_fairness: break;
  }
  throw InvalidConfig("group fairness has no per-example value");
}

double DomainLoss::evaluate(const ParamVector& w, const Dataset& data, std::span<const Index> rows,
                            Reduction reduction, ParamVector* grad) const {
  if (rows.empty()) throw InvalidShape("empty batch");
  if (data.features.cols() != net_.input_dim()) throw InvalidShape("dataset width differs from network input");
  if (grad && grad->size() != net_.param_count()) throw InvalidShape("gradient buffer has wrong length");
  const double B = static_cast<double>(rows.size());
  if (spec_.kind == PhiKind::group_fairness) {
    RowMatrix X(static_cast<Index>(rows.size()), data.features.cols());
    std::vector<int> groups(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      X.row(static_cast<Index>(i)) = data.features.row(rows[i]);
      groups[i] = data.features(rows[i], spec_.group_index) >= 0.5 ? 1 : 0;
    }
    const PhiValue v = phi_group_fairness_batch(net_, w, X, groups, grad != nullptr);
    if (reduction == Reduction::mean) {
      if (grad) *grad += v.grad;
      return v.value;
    }
    if (grad) *grad += (2.0 * B * v.value) * v.grad;
    return B * v.value * v.value;
  }
  const bool squares = reduction == Reduction::sum_squares;
  const double total =
      kernels::sum_rows(static_cast<Index>(rows.size()), net_.param_count(), grad, [&](Index i, Vector* buf) {
        const PhiValue v = row_phi(w, data, rows[static_cast<std::size_t>(i)], buf != nullptr);
        if (buf && v.value != 0.0) *buf += (squares ? 2.0 * v.value : 1.0 / B) * v.grad;
        return squares ? v.value * v.value : v.value / B;
      });
  return total;
}

double DomainLoss::evaluate_all(const ParamVector& w, const Dataset& data, Reduction reduction,
                                ParamVector* grad) const {
  std::vector<Index> rows(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return evaluate(w, data, rows, reduction, grad);
}

PhiValue DomainLoss::batch_mean(const ParamVector& w, const Dataset& data, std::span<const Index> rows) const {
  PhiValue out;
  out.grad = ParamVector::Zero(net_.param_count());
  out.value = evaluate(w, data, rows, Reduction::mean, &out.grad);
  return out;
}

Vector DomainLoss::per_example(const ParamVector& w, const Dataset& data, std::span<const Index> rows) const {
  if (spec_.kind == PhiKind::group_fairness) throw InvalidConfig("group fairness has no per-example value");
  Vector v(static_cast<Index>(rows.size()));
  kernels::for_each_index(v.size(), [&](Index i) {
    v[i] = row_phi(w, data, rows[static_cast<std::size_t>(i)], false).value;
  });
  return v;
}

double DomainLoss::ensemble_value(const Ensemble& e, const Dataset& data) const {
  e.validate();
  if (!(e.arch == net_.arch())) throw InvalidShape("ensemble architecture differs from the loss network");
  if (data.size() == 0) throw InvalidShape("empty evaluation set");
  if (e.members.size() == 1) return evaluate_all(e.members.front(), data, Reduction::mean, nullptr);
  const Index n = data.size();
  if (spec_.kind == PhiKind::group_fairness) {
    double sa = 0.0, sb = 0.0;
    Index na = 0, nb = 0;
    for (Index i = 0; i < n; ++i) {
      const double p = ensemble_predict(e, data.features.row(i).transpose())[0];
      if (data.features(i, spec_.group_index) >= 0.5) {
        sa += p;
        ++na;
      } else {
        sb += p;
        ++nb;
      }
    }
    if (na == 0 || nb == 0) throw DegenerateBatch("evaluation set lacks one of the two groups");
    const double gap = sa / static_cast<double>(na) - sb / static_cast<double>(nb);
    return gap * gap;
  }
  const bool need_jacobian = spec_.kind == PhiKind::background;
  return kernels::sum_rows(n, 0, nullptr, [&](Index i, Vector*) {
           const Vector x = data.features.row(i).transpose();
           const EffectiveOutput o = ensemble_effective_output(e, x, need_jacobian);
           switch (spec_.kind) {
             case PhiKind::background: {
               const std::vector<int> mask = row_mask(data, i);
               if (mask.empty()) return 0.0;
               return background_from_jacobian(o.logits, o.jacobian, net_.mask_vector(mask), net_.arch().head,
                                               spec_.background_mode);
             }
             case PhiKind::clinical: return clinical_from_output(o.logits, x, spec_.region);
             case PhiKind::energy_damping: return energy_from_output(o.logits, x, spec_.pendulum);
             case PhiKind::group_fairness: break;
           }
           return 0.0;
         }) /
         static_cast<double>(n);
}

}  // namespace bnnp
