#pragma once

#include <cmath>

#include "bnnp/errors.hpp"
#include "bnnp/types.hpp"

namespace bnnp {

// Adam over one flat vector. `ascend` flips the update direction so callers
// can maximise an objective without negating its gradient.
class Adam {
 public:
  explicit Adam(Index dim, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Vector::Zero(dim)), v_(Vector::Zero(dim)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& x, const Vector& grad, double lr, bool ascend = false) {
    if (grad.size() != x.size() || x.size() != m_.size()) throw InvalidShape("Adam state length mismatch");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double sign = ascend ? 1.0 : -1.0;
    x.array() += sign * lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  long steps() const noexcept { return t_; }

 private:
  Vector m_;
  Vector v_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

}  // namespace bnnp
