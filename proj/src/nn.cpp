#include "bnnp/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "bnnp/errors.hpp"

namespace bnnp {
namespace {

double act(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? z : 0.0;
  // softplus, overflow-safe
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double act_d1(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  return sigmoid(z);
}

double act_d2(Activation a, double z) {
  if (a == Activation::relu) return 0.0;
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

Vector act_vec(Activation a, const Vector& z) {
  return z.unaryExpr([a](double v) { return act(a, v); });
}
Vector act_d1_vec(Activation a, const Vector& z) {
  return z.unaryExpr([a](double v) { return act_d1(a, v); });
}
Vector act_d2_vec(Activation a, const Vector& z) {
  return z.unaryExpr([a](double v) { return act_d2(a, v); });
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Vector softmax(const Vector& v) {
  Vector e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

int argmax_first(const Vector& v) {
  int best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

Vector apply_head(OutputHead head, const Vector& logits) {
  switch (head) {
    case OutputHead::identity: return logits;
    case OutputHead::sigmoid: return logits.unaryExpr([](double z) { return sigmoid(z); });
    case OutputHead::softmax: return softmax(logits);
  }
  return logits;
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "softplus"; }

std::string to_string(OutputHead h) {
  switch (h) {
    case OutputHead::identity: return "identity";
    case OutputHead::sigmoid: return "sigmoid";
    case OutputHead::softmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  throw InvalidConfig("unknown activation '" + std::string(s) + "'");
}

OutputHead parse_output_head(std::string_view s) {
  if (s == "identity") return OutputHead::identity;
  if (s == "sigmoid") return OutputHead::sigmoid;
  if (s == "softmax" || s == "softmax-logits") return OutputHead::softmax;
  throw InvalidConfig("unknown output head '" + std::string(s) + "'");
}

void ArchSpec::validate() const {
  if (layer_sizes.size() < 2) throw InvalidShape("architecture needs at least input and output sizes");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidShape("layer sizes must be positive");
}

Index ArchSpec::param_count() const {
  Index n = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
    n += static_cast<Index>(layer_sizes[i] + 1) * layer_sizes[i + 1];
  return n;
}

std::vector<int> parse_layer_sizes(std::string_view text) {
  std::vector<int> sizes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    auto part = text.substr(pos, end - pos);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    int v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size() || part.empty())
      throw InvalidConfig("bad layer size list '" + std::string(text) + "'");
    sizes.push_back(v);
    pos = end + 1;
  }
  return sizes;
}

std::string format_layer_sizes(const std::vector<int>& sizes) {
  std::ostringstream os;
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? "," : "") << sizes[i];
  return os.str();
}

Vector OutputFunctional::gradient(const Vector& h) const {
  switch (kind) {
    case Kind::component: {
      Vector g = Vector::Zero(h.size());
      g[component] = 1.0;
      return g;
    }
    case Kind::log_softmax_component: {
      Vector g = -softmax(h);
      g[component] += 1.0;
      return g;
    }
    case Kind::log_prob_sum: {
      const double c = static_cast<double>(h.size());
      return Vector::Ones(h.size()) - c * softmax(h);
    }
  }
  return Vector::Zero(h.size());
}

Vector OutputFunctional::hessian_times(const Vector& h, const Vector& v) const {
  if (kind == Kind::component) return Vector::Zero(h.size());
  // Hessian of -logsumexp is -(diag(p) - p p^T).
  const Vector p = softmax(h);
  Vector hv = -(p.cwiseProduct(v) - p * p.dot(v));
  if (kind == Kind::log_prob_sum) hv *= static_cast<double>(h.size());
  return hv;
}

Mlp::Mlp(ArchSpec arch) : arch_(std::move(arch)) {
  arch_.validate();
  Index off = 0;
  for (int l = 0; l < arch_.num_layers(); ++l) {
    weight_offset_.push_back(off);
    off += static_cast<Index>(arch_.layer_sizes[l]) * arch_.layer_sizes[l + 1];
    bias_offset_.push_back(off);
    off += arch_.layer_sizes[l + 1];
  }
  param_count_ = off;
}

Index Mlp::flat_index(const ParamCoord& c) const {
  if (c.layer < 0 || c.layer >= arch_.num_layers()) throw InvalidShape("layer out of range");
  const int fan_in = arch_.layer_sizes[c.layer];
  const int fan_out = arch_.layer_sizes[c.layer + 1];
  if (c.row < 0 || c.row >= fan_out) throw InvalidShape("row out of range");
  if (c.bias) return bias_offset_[c.layer] + c.row;
  if (c.col < 0 || c.col >= fan_in) throw InvalidShape("column out of range");
  return weight_offset_[c.layer] + static_cast<Index>(c.row) * fan_in + c.col;
}

ParamCoord Mlp::coord(Index flat) const {
  if (flat < 0 || flat >= param_count_) throw InvalidShape("flat index out of range");
  for (int l = arch_.num_layers() - 1; l >= 0; --l) {
    if (flat < weight_offset_[l]) continue;
    const int fan_in = arch_.layer_sizes[l];
    if (flat >= bias_offset_[l]) return {l, static_cast<int>(flat - bias_offset_[l]), 0, true};
    const Index local = flat - weight_offset_[l];
    return {l, static_cast<int>(local / fan_in), static_cast<int>(local % fan_in), false};
  }
  throw InvalidShape("flat index out of range");
}

std::vector<LayerParams> Mlp::unflatten(const ParamVector& w) const {
  check_params(w);
  std::vector<LayerParams> layers;
  for (int l = 0; l < arch_.num_layers(); ++l) {
    const int fan_out = arch_.layer_sizes[l + 1];
    layers.push_back({weight(w, l), w.segment(bias_offset_[l], fan_out)});
  }
  return layers;
}

ParamVector Mlp::flatten(const std::vector<LayerParams>& layers) const {
  if (static_cast<int>(layers.size()) != arch_.num_layers()) throw InvalidShape("layer count mismatch");
  ParamVector w(param_count_);
  for (int l = 0; l < arch_.num_layers(); ++l) {
    const int fan_in = arch_.layer_sizes[l];
    const int fan_out = arch_.layer_sizes[l + 1];
    const auto& p = layers[l];
    if (p.weight.rows() != fan_out || p.weight.cols() != fan_in || p.bias.size() != fan_out)
      throw InvalidShape("layer parameter shape mismatch");
    Eigen::Map<RowMatrix>(w.data() + weight_offset_[l], fan_out, fan_in) = p.weight;
    w.segment(bias_offset_[l], fan_out) = p.bias;
  }
  return w;
}

ParamVector Mlp::init_he(Rng& rng) const {
  ParamVector w = ParamVector::Zero(param_count_);
  for (int l = 0; l < arch_.num_layers(); ++l) {
    const double sd = std::sqrt(2.0 / arch_.layer_sizes[l]);
    for (Index i = weight_offset_[l]; i < bias_offset_[l]; ++i) w[i] = sd * rng.normal();
  }
  return w;
}

void Mlp::check_params(const ParamVector& w) const {
  if (w.size() != param_count_)
    throw InvalidShape("parameter vector has " + std::to_string(w.size()) + " entries, architecture needs " +
                       std::to_string(param_count_));
}

void Mlp::check_input(VectorRef x) const {
  if (x.size() != arch_.input_dim())
    throw InvalidShape("input has " + std::to_string(x.size()) + " entries, expected " +
                       std::to_string(arch_.input_dim()));
}

Eigen::Map<const RowMatrix> Mlp::weight(const ParamVector& w, int layer) const {
  return Eigen::Map<const RowMatrix>(w.data() + weight_offset_[layer], arch_.layer_sizes[layer + 1],
                                     arch_.layer_sizes[layer]);
}

Mlp::Trace Mlp::run(const ParamVector& w, VectorRef x) const {
  check_params(w);
  check_input(x);
  const int L = arch_.num_layers();
  Trace t;
  t.a.reserve(L);
  t.z.reserve(L);
  t.a.emplace_back(x);
  for (int l = 0; l < L; ++l) {
    t.z.push_back(weight(w, l) * t.a[l] + w.segment(bias_offset_[l], arch_.layer_sizes[l + 1]));
    if (l + 1 < L) t.a.push_back(act_vec(arch_.activation, t.z[l]));
  }
  return t;
}

Vector Mlp::forward(const ParamVector& w, VectorRef x) const { return run(w, x).z.back(); }

ParamVector Mlp::grad_params(const ParamVector& w, VectorRef x, VectorRef upstream) const {
  ParamVector g = ParamVector::Zero(param_count_);
  accumulate_grad_params(w, x, upstream, 1.0, g);
  return g;
}

void Mlp::accumulate_grad_params(const ParamVector& w, VectorRef x, VectorRef upstream, double scale,
                                 ParamVector& out) const {
  if (upstream.size() != arch_.output_dim()) throw InvalidShape("upstream length differs from output dim");
  if (out.size() != param_count_) throw InvalidShape("gradient buffer has wrong length");
  const Trace t = run(w, x);
  Vector delta = scale * upstream;
  for (int l = arch_.num_layers() - 1; l >= 0; --l) {
    const int fan_in = arch_.layer_sizes[l];
    const int fan_out = arch_.layer_sizes[l + 1];
    Eigen::Map<RowMatrix>(out.data() + weight_offset_[l], fan_out, fan_in).noalias() +=
        delta * t.a[l].transpose();
    out.segment(bias_offset_[l], fan_out) += delta;
    if (l > 0)
      delta = act_d1_vec(arch_.activation, t.z[l - 1]).cwiseProduct(weight(w, l).transpose() * delta);
  }
}

Matrix Mlp::input_jacobian(const ParamVector& w, VectorRef x) const {
  const Trace t = run(w, x);
  Matrix J = weight(w, 0);
  for (int l = 1; l < arch_.num_layers(); ++l)
    J = weight(w, l) * (act_d1_vec(arch_.activation, t.z[l - 1]).asDiagonal() * J);
  return J;
}

Vector Mlp::mask_vector(const std::vector<int>& mask) const {
  Vector m = Vector::Zero(arch_.input_dim());
  for (int j : mask) {
    if (j < 0 || j >= arch_.input_dim())
      throw InvalidMask("mask index " + std::to_string(j) + " outside input dimension " +
                        std::to_string(arch_.input_dim()));
    m[j] = 1.0;
  }
  return m;
}

double Mlp::input_grad_penalty(const ParamVector& w, VectorRef x, VectorRef mask_weights,
                               const OutputFunctional& f, ParamVector* grad) const {
  if (mask_weights.size() != arch_.input_dim()) throw InvalidMask("mask length differs from input dim");
  if (grad && grad->size() != param_count_) throw InvalidShape("gradient buffer has wrong length");
  const Trace tr = run(w, x);
  const int L = arch_.num_layers();
  const Activation a = arch_.activation;
  const Vector& h = tr.z.back();

  // First backward pass: g[l] = dF/dz[l], t[l] = W_{l+1}^T g[l+1].
  std::vector<Vector> g(L), t(L);
  g[L - 1] = f.gradient(h);
  for (int l = L - 1; l >= 1; --l) {
    t[l - 1] = weight(w, l).transpose() * g[l];
    g[l - 1] = act_d1_vec(a, tr.z[l - 1]).cwiseProduct(t[l - 1]);
  }
  const Vector s = weight(w, 0).transpose() * g[0];
  const Vector ms = mask_weights.cwiseProduct(s);
  const double value = ms.squaredNorm();
  if (!grad) return value;

  // Reverse pass through the backward pass (adjoints of s, g, t), then through
  // the forward pass with the accumulated pre-activation adjoints.
  auto add_weight_grad = [&](int l, const Vector& rows, const Vector& cols) {
    Eigen::Map<RowMatrix>(grad->data() + weight_offset_[l], arch_.layer_sizes[l + 1], arch_.layer_sizes[l])
        .noalias() += rows * cols.transpose();
  };
  const Vector s_bar = 2.0 * mask_weights.cwiseProduct(ms);
  add_weight_grad(0, g[0], s_bar);
  std::vector<Vector> z_bar(L);
  for (int l = 0; l < L; ++l) z_bar[l] = Vector::Zero(arch_.layer_sizes[l + 1]);
  Vector g_bar = weight(w, 0) * s_bar;
  for (int l = 0; l + 1 < L; ++l) {
    z_bar[l] += g_bar.cwiseProduct(act_d2_vec(a, tr.z[l])).cwiseProduct(t[l]);
    const Vector t_bar = g_bar.cwiseProduct(act_d1_vec(a, tr.z[l]));
    add_weight_grad(l + 1, g[l + 1], t_bar);
    g_bar = weight(w, l + 1) * t_bar;
  }
  z_bar[L - 1] += f.hessian_times(h, g_bar);
  for (int l = L - 1; l >= 0; --l) {
    add_weight_grad(l, z_bar[l], tr.a[l]);
    grad->segment(bias_offset_[l], arch_.layer_sizes[l + 1]) += z_bar[l];
    if (l > 0) z_bar[l - 1] += act_d1_vec(a, tr.z[l - 1]).cwiseProduct(weight(w, l).transpose() * z_bar[l]);
  }
  return value;
}

MaskedGradNorm Mlp::masked_input_grad_norm(const ParamVector& w, VectorRef x,
                                           const std::vector<int>& mask) const {
  const Vector m = mask_vector(mask);
  MaskedGradNorm out{0.0, ParamVector::Zero(param_count_)};
  if (mask.empty()) {
    check_params(w);
    check_input(x);
    return out;
  }
  for (int c = 0; c < arch_.output_dim(); ++c) {
    OutputFunctional f{OutputFunctional::Kind::component, c};
    out.value += input_grad_penalty(w, x, m, f, &out.grad);
  }
  return out;
}

}  // namespace bnnp
