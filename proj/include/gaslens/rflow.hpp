// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaslens::rflow {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Velocity field v(t, x).
template <typename Scalar>
using Field = std::function<Vector<Scalar>(Scalar, const Vector<Scalar>&)>;

/// Conditional field u(t, x | y1).
template <typename Scalar>
using ConditionalField =
    std::function<Vector<Scalar>(Scalar, const Vector<Scalar>&, const Vector<Scalar>&)>;

template <typename Scalar>
struct FlowState {
  Vector<Scalar> x;
  Scalar t = 0;
};

template <typename Scalar>
using Trajectory = std::vector<FlowState<Scalar>>;

class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(const std::string& where, int step)
      : std::runtime_error(where + ": non-finite state at step " + std::to_string(step)),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// (1 - sigma) x0 + sigma eps.
template <typename Derived0, typename Derived1>
auto forward_perturb(const Eigen::MatrixBase<Derived0>& x0, typename Derived0::Scalar sigma,
                     const Eigen::MatrixBase<Derived1>& eps) {
  using Scalar = typename Derived0::Scalar;
  if (x0.size() != eps.size()) throw std::invalid_argument("forward_perturb: dim mismatch");
  if (!(sigma >= Scalar(0) && sigma <= Scalar(1))) {
    throw std::invalid_argument("forward_perturb: sigma outside [0,1]");
  }
  return Vector<Scalar>((Scalar(1) - sigma) * x0 + sigma * eps);
}

/// Inversion dynamics
///   dY/dt = -v(1 - t, Y) + gamma (u(t, Y | y1) + v(1 - t, Y)),
/// with `velocity` the generative field indexed by generation time (0 = noise).
template <typename Scalar>
struct InversionConfig {
  Scalar gamma = Scalar(1);
  int steps = 1;
  Field<Scalar> velocity;
  ConditionalField<Scalar> conditional;
  Vector<Scalar> anchor;  // y1
  /// Stop at t = 1 - 1/steps, where a straight-line conditional field
  /// (y1 - y) / (1 - t) would be evaluated next to its singularity.
  bool clip_endpoint = true;
};

template <typename Scalar>
void validate(const InversionConfig<Scalar>& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("inversion needs steps >= 1");
  if (!(cfg.gamma >= Scalar(0) && cfg.gamma <= Scalar(1))) {
    throw std::invalid_argument("gamma outside [0,1]");
  }
  if (!cfg.velocity || !cfg.conditional) throw std::invalid_argument("missing field handle");
}

/// Explicit Euler from t = 0 with step 1/steps. Returns every state including
/// both endpoints (steps + 1 states, or steps when clip_endpoint is set).
template <typename Scalar>
Trajectory<Scalar> invert(const Vector<Scalar>& x0, const InversionConfig<Scalar>& cfg) {
  validate(cfg);
  const Scalar dt = Scalar(1) / Scalar(cfg.steps);
  const int last = cfg.clip_endpoint ? cfg.steps - 1 : cfg.steps;
  Trajectory<Scalar> out;
  out.reserve(static_cast<std::size_t>(last) + 1);
  out.push_back({x0, Scalar(0)});
  Vector<Scalar> y = x0;
  for (int n = 0; n < last; ++n) {
    const Scalar t = Scalar(n) * dt;
    const Vector<Scalar> v = cfg.velocity(Scalar(1) - t, y);
    const Vector<Scalar> u = cfg.conditional(t, y, cfg.anchor);
    y += dt * (-v + cfg.gamma * (u + v));
    if (!y.allFinite()) throw NonFiniteState("invert", n + 1);
    out.push_back({y, Scalar(n + 1) * dt});
  }
  return out;
}

/// Explicit Euler for dX/dt = field(t, X) from t = 1 down to t = 0.
template <typename Scalar>
Vector<Scalar> denoise(const Vector<Scalar>& x_noise, const Field<Scalar>& field, int steps) {
  if (steps < 1) throw std::invalid_argument("denoise needs steps >= 1");
  const Scalar dt = Scalar(1) / Scalar(steps);
  Vector<Scalar> x = x_noise;
  for (int n = 0; n < steps; ++n) {
    const Scalar t = Scalar(1) - Scalar(n) * dt;
    x -= dt * field(t, x);
    if (!x.allFinite()) throw NonFiniteState("denoise", n + 1);
  }
  return x;
}

/// Forward-time field for denoising, w(t, x) = -v(1 - t, x).
template <typename Scalar>
Field<Scalar> denoising_field(const Field<Scalar>& velocity) {
  return [velocity](Scalar t, const Vector<Scalar>& x) -> Vector<Scalar> {
    return -velocity(Scalar(1) - t, x);
  };
}

/// ||x0 - denoise(invert(x0))|| / ||x0||, denoising with the configured
/// velocity over `steps` steps.
template <typename Scalar>
Scalar reconstruction_error(const Vector<Scalar>& x0, const InversionConfig<Scalar>& cfg,
                            int steps) {
  InversionConfig<Scalar> run = cfg;
  run.steps = steps;
  const auto trajectory = invert(x0, run);
  const auto rebuilt = denoise<Scalar>(trajectory.back().x, denoising_field(cfg.velocity), steps);
  const Scalar norm = x0.norm();
  const Scalar diff = (x0 - rebuilt).norm();
  return norm > Scalar(0) ? diff / norm : diff;
}

// ---------------------------------------------------------------------------
// Analytic fixtures

/// u(t, y | y1) = (y1 - y) / (1 - t).
template <typename Scalar>
ConditionalField<Scalar> straight_line_conditional() {
  return [](Scalar t, const Vector<Scalar>& y, const Vector<Scalar>& y1) -> Vector<Scalar> {
    return (y1 - y) / (Scalar(1) - t);
  };
}

/// Constant generative velocity x0 - y1 of the straight path between y1 (noise)
/// and x0 (clean).
template <typename Scalar>
Field<Scalar> straight_line_velocity(const Vector<Scalar>& x0, const Vector<Scalar>& y1) {
  const Vector<Scalar> direction = x0 - y1;
  return [direction](Scalar, const Vector<Scalar>&) -> Vector<Scalar> { return direction; };
}

/// v(t, y) = a y.
template <typename Scalar>
Field<Scalar> linear_velocity(Scalar a) {
  return [a](Scalar, const Vector<Scalar>& y) -> Vector<Scalar> { return a * y; };
}

template <typename Scalar>
Field<Scalar> zero_velocity() {
  return [](Scalar, const Vector<Scalar>& y) -> Vector<Scalar> {
    return Vector<Scalar>::Zero(y.size());
  };
}

template <typename Scalar>
ConditionalField<Scalar> zero_conditional() {
  return [](Scalar, const Vector<Scalar>& y, const Vector<Scalar>&) -> Vector<Scalar> {
    return Vector<Scalar>::Zero(y.size());
  };
}

}  // namespace gaslens::rflow
