#include "bnnp/ensemble.hpp"

#include <cmath>

#include "bnnp/errors.hpp"

namespace bnnp {

std::string to_string(Averaging a) { return a == Averaging::logits ? "logits" : "predictions"; }

Averaging parse_averaging(std::string_view s) {
  if (s == "logits") return Averaging::logits;
  if (s == "predictions") return Averaging::predictions;
  throw InvalidConfig("unknown averaging mode '" + std::string(s) + "'");
}

void Ensemble::validate() const {
  arch.validate();
  if (members.empty()) throw InvalidConfig("ensemble has no members");
  for (const auto& m : members)
    if (m.size() != arch.param_count()) throw InvalidShape("ensemble member does not match its architecture");
}

Vector ensemble_predict(const Ensemble& e, VectorRef x) {
  e.validate();
  const Mlp net(e.arch);
  const double k = static_cast<double>(e.members.size());
  Vector acc = Vector::Zero(net.output_dim());
  if (e.averaging == Averaging::logits) {
    for (const auto& w : e.members) acc += net.forward(w, x);
    return apply_head(e.arch.head, acc / k);
  }
  for (const auto& w : e.members) acc += apply_head(e.arch.head, net.forward(w, x));
  return acc / k;
}

EffectiveOutput ensemble_effective_output(const Ensemble& e, VectorRef x, bool with_jacobian) {
  e.validate();
  const Mlp net(e.arch);
  EffectiveOutput out;
  if (e.members.size() == 1) {
    out.logits = net.forward(e.members.front(), x);
    if (with_jacobian) out.jacobian = net.input_jacobian(e.members.front(), x);
    return out;
  }
  const double k = static_cast<double>(e.members.size());
  const Index c = net.output_dim();
  const Index d = net.input_dim();
  Vector acc = Vector::Zero(c);
  Matrix jac = Matrix::Zero(c, d);
  const bool logits = e.averaging == Averaging::logits || e.arch.head == OutputHead::identity;
  for (const auto& w : e.members) {
    const Vector h = net.forward(w, x);
    const Matrix J = with_jacobian ? net.input_jacobian(w, x) : Matrix();
    if (logits) {
      acc += h;
      if (with_jacobian) jac += J;
    } else if (e.arch.head == OutputHead::softmax) {
      const Vector p = softmax(h);
      acc += p;
      if (with_jacobian) jac += (Matrix(p.asDiagonal()) - p * p.transpose()) * J;
    } else {
      const Vector p = apply_head(OutputHead::sigmoid, h);
      acc += p;
      if (with_jacobian) jac += p.cwiseProduct((1.0 - p.array()).matrix()).asDiagonal() * J;
    }
  }
  acc /= k;
  if (with_jacobian) jac /= k;
  if (logits) {
    out.logits = acc;
    if (with_jacobian) out.jacobian = jac;
  } else if (e.arch.head == OutputHead::softmax) {
    // log of the averaged probabilities is a valid logit vector for them.
    out.logits = acc.array().log().matrix();
    if (with_jacobian) out.jacobian = acc.cwiseInverse().asDiagonal() * jac;
  } else {
    out.logits = (acc.array().log() - (1.0 - acc.array()).log()).matrix();
    if (with_jacobian)
      out.jacobian = acc.cwiseProduct((1.0 - acc.array()).matrix()).cwiseInverse().asDiagonal() * jac;
  }
  return out;
}

}  // namespace bnnp
