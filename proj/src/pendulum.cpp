#include "bnnp/pendulum.hpp"

#include <cmath>

#include "bnnp/errors.hpp"

namespace bnnp {

void PendulumConfig::validate() const {
  if (!(l1 > 0 && l2 > 0 && m1 > 0 && m2 > 0 && dt > 0))
    throw InvalidConfig("pendulum lengths, masses and dt must be positive");
  if (c1 < 0 || c2 < 0) throw InvalidConfig("friction coefficients must be non-negative");
  if (steps_per_sample < 1) throw InvalidConfig("steps_per_sample must be at least 1");
}

PendulumState PendulumState::from_vector(VectorRef v) {
  if (v.size() != 4) throw InvalidShape("pendulum state needs 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

Vector PendulumState::to_vector() const {
  Vector v(4);
  v << theta1, omega1, theta2, omega2;
  return v;
}

double pendulum_energy(const PendulumState& s, const PendulumConfig& c) {
  const double kinetic = 0.5 * c.m1 * c.l1 * c.l1 * s.omega1 * s.omega1 +
                         0.5 * c.m2 *
                             (c.l1 * c.l1 * s.omega1 * s.omega1 + c.l2 * c.l2 * s.omega2 * s.omega2 +
                              2.0 * c.l1 * c.l2 * s.omega1 * s.omega2 * std::cos(s.theta1 - s.theta2));
  const double potential = -(c.m1 + c.m2) * c.g * c.l1 * std::cos(s.theta1) - c.m2 * c.g * c.l2 * std::cos(s.theta2);
  return kinetic + potential;
}

Vector pendulum_energy_grad(const PendulumState& s, const PendulumConfig& c) {
  const double d = s.theta1 - s.theta2;
  const double cross = c.m2 * c.l1 * c.l2;
  Vector g(4);
  g[0] = -cross * s.omega1 * s.omega2 * std::sin(d) + (c.m1 + c.m2) * c.g * c.l1 * std::sin(s.theta1);
  g[1] = (c.m1 + c.m2) * c.l1 * c.l1 * s.omega1 + cross * s.omega2 * std::cos(d);
  g[2] = cross * s.omega1 * s.omega2 * std::sin(d) + c.m2 * c.g * c.l2 * std::sin(s.theta2);
  g[3] = c.m2 * c.l2 * c.l2 * s.omega2 + cross * s.omega1 * std::cos(d);
  return g;
}

PendulumState pendulum_derivative(const PendulumState& s, const PendulumConfig& c) {
  const double d = s.theta1 - s.theta2;
  const double cd = std::cos(d);
  const double sd = std::sin(d);
  // Mass matrix and right-hand side of M * alpha = f from the Lagrangian.
  const double a11 = (c.m1 + c.m2) * c.l1 * c.l1;
  const double a12 = c.m2 * c.l1 * c.l2 * cd;
  const double a22 = c.m2 * c.l2 * c.l2;
  const double f1 = -c.m2 * c.l1 * c.l2 * sd * s.omega2 * s.omega2 - (c.m1 + c.m2) * c.g * c.l1 * std::sin(s.theta1) -
                    c.c1 * s.omega1;
  const double f2 = c.m2 * c.l1 * c.l2 * sd * s.omega1 * s.omega1 - c.m2 * c.g * c.l2 * std::sin(s.theta2) -
                    c.c2 * s.omega2;
  const double det = a11 * a22 - a12 * a12;
  const double alpha1 = (a22 * f1 - a12 * f2) / det;
  const double alpha2 = (a11 * f2 - a12 * f1) / det;
  if (!std::isfinite(alpha1) || !std::isfinite(alpha2))
    throw NumericalFailure("non-finite pendulum acceleration");
  return {s.omega1, alpha1, s.omega2, alpha2};
}

PendulumState pendulum_step(const PendulumState& s, const PendulumConfig& c) { return pendulum_step(s, c, c.dt); }

PendulumState pendulum_step(const PendulumState& s, const PendulumConfig& c, double dt) {
  auto axpy = [](const PendulumState& x, double h, const PendulumState& k) {
    return PendulumState{x.theta1 + h * k.theta1, x.omega1 + h * k.omega1, x.theta2 + h * k.theta2,
                         x.omega2 + h * k.omega2};
  };
  const PendulumState k1 = pendulum_derivative(s, c);
  const PendulumState k2 = pendulum_derivative(axpy(s, 0.5 * dt, k1), c);
  const PendulumState k3 = pendulum_derivative(axpy(s, 0.5 * dt, k2), c);
  const PendulumState k4 = pendulum_derivative(axpy(s, dt, k3), c);
  const double w = dt / 6.0;
  return {s.theta1 + w * (k1.theta1 + 2 * k2.theta1 + 2 * k3.theta1 + k4.theta1),
          s.omega1 + w * (k1.omega1 + 2 * k2.omega1 + 2 * k3.omega1 + k4.omega1),
          s.theta2 + w * (k1.theta2 + 2 * k2.theta2 + 2 * k3.theta2 + k4.theta2),
          s.omega2 + w * (k1.omega2 + 2 * k2.omega2 + 2 * k3.omega2 + k4.omega2)};
}

}  // namespace bnnp
