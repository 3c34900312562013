#pragma once

#include <array>

#include "bnnp/types.hpp"

namespace bnnp {

// Point-mass double pendulum on massless rods with viscous damping torques
// -c1*omega1 and -c2*omega2 at the two joints. Angles from the downward vertical.
struct PendulumConfig {
  double l1 = 1.0;
  double l2 = 1.0;
  double m1 = 1.0;
  double m2 = 5.0;
  double c1 = 0.001;
  double c2 = 0.001;
  double g = 9.81;
  double dt = 0.001;
  int steps_per_sample = 50;

  void validate() const;
};

// (theta1, omega1, theta2, omega2) in rad and rad/s.
struct PendulumState {
  double theta1 = 0.0;
  double omega1 = 0.0;
  double theta2 = 0.0;
  double omega2 = 0.0;

  static PendulumState from_vector(VectorRef v);
  Vector to_vector() const;
  bool operator==(const PendulumState&) const = default;
};

// Total mechanical energy in joules.
double pendulum_energy(const PendulumState& s, const PendulumConfig& c);
// dE / d(theta1, omega1, theta2, omega2)
Vector pendulum_energy_grad(const PendulumState& s, const PendulumConfig& c);

// Time derivative of the state.
PendulumState pendulum_derivative(const PendulumState& s, const PendulumConfig& c);

// One classical RK4 step of c.dt; angles are not wrapped.
PendulumState pendulum_step(const PendulumState& s, const PendulumConfig& c);
PendulumState pendulum_step(const PendulumState& s, const PendulumConfig& c, double dt);

}  // namespace bnnp
