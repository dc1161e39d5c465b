#pragma once
// Fixed-step RK4 integration of the process model, with and without derivative disturbances.

#include <cmath>
#include <random>

#include "dlac/process.hpp"

namespace dlac {

/// One classical RK4 step of dy/dt = rhs(y). `Vec` needs +, scalar * and an allFinite-style
/// check supplied by `finite`.
template <typename Vec, typename Rhs, typename Finite>
Vec rk4_advance(const Vec& y, double h, Rhs&& rhs, Finite&& finite) {
  const Vec k1 = rhs(y);
  if (!finite(k1)) throw IntegrationError("non-finite derivative", 1);
  const Vec y2 = y + (0.5 * h) * k1;
  const Vec k2 = rhs(y2);
  if (!finite(k2)) throw IntegrationError("non-finite derivative", 2);
  const Vec y3 = y + (0.5 * h) * k2;
  const Vec k3 = rhs(y3);
  if (!finite(k3)) throw IntegrationError("non-finite derivative", 3);
  const Vec y4 = y + h * k3;
  const Vec k4 = rhs(y4);
  if (!finite(k4)) throw IntegrationError("non-finite derivative", 4);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <typename Vec, typename Rhs>
Vec rk4_advance(const Vec& y, double h, Rhs&& rhs) {
  return rk4_advance(y, h, std::forward<Rhs>(rhs), [](const Vec& v) {
    if constexpr (std::is_arithmetic_v<Vec>)
      return std::isfinite(v);
    else
      return v.allFinite();
  });
}

struct IntegratorOptions {
  int substeps = 5;
};

namespace detail {

inline ProcessState integrate_held(const ProcessState& s, const HeatInputs& a, double dt,
                                   const ProcessParams& p, const IntegratorOptions& opt,
                                   const StateVector* disturbance) {
  if (!(dt >= 0.0)) throw IntegrationError("time step must be non-negative", 0);
  if (dt == 0.0) return s;
  const int n = std::max(1, opt.substeps);
  const double h = dt / n;
  auto rhs = [&](const StateVector& y) -> StateVector {
    StateVector f = derivatives(ProcessState(y), a, p).v;
    if (disturbance) f += *disturbance;
    return f;
  };
  StateVector y = s.v;
  for (int i = 0; i < n; ++i) {
    try {
      y = rk4_advance(y, h, rhs);
    } catch (const EvaluationError& e) {
      throw IntegrationError(std::string("model evaluation failed: ") + e.what(), 0);
    }
    if (!y.allFinite()) throw IntegrationError("non-finite state after step", 4);
  }
  return project_feasible(ProcessState(y));
}

}  // namespace detail

/// Advance the process by dt hours with the heat input held constant.
inline ProcessState rk4_step(const ProcessState& s, const HeatInputs& a, double dt,
                             const ProcessParams& p, const IntegratorOptions& opt = {}) {
  return detail::integrate_held(s, a, dt, p, opt, nullptr);
}

/// Per-state disturbance on the derivatives: N(0, sigma^2) truncated to [-bound, bound].
struct DisturbanceSpec {
  StateVector sigma = StateVector::Zero();
  StateVector bound = StateVector::Constant(1.0);

  bool is_zero() const { return (sigma.array() == 0.0).all(); }

  void validate() const {
    if ((sigma.array() < 0.0).any()) throw ConfigError("disturbance sigma must be >= 0");
    if ((bound.array() <= 0.0).any()) throw ConfigError("disturbance bound must be > 0");
  }

  /// Training-phase disturbance.
  static DisturbanceSpec sigma_w1() {
    DisturbanceSpec d;
    d.sigma << 0.01, 0.01, 0.5, 0.01, 0.01, 0.5, 0.01, 0.01, 0.5;
    d.bound.setConstant(5.0);
    return d;
  }
  /// Robustness-evaluation disturbance.
  static DisturbanceSpec sigma_w2() {
    DisturbanceSpec d;
    d.sigma << 1.0, 1.0, 50.0, 1.0, 1.0, 50.0, 1.0, 1.0, 50.0;
    d.bound.setConstant(500.0);
    return d;
  }
  static DisturbanceSpec none() { return {}; }
};

/// Rejection sampler for a zero-mean normal truncated to [-bound, bound].
inline double sample_truncated_normal(double sigma, double bound, Rng& rng) {
  if (sigma == 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    const double w = normal(rng);
    if (std::abs(w) <= bound) return w;
  }
}

inline StateVector sample_disturbance(const DisturbanceSpec& d, Rng& rng) {
  StateVector w;
  for (int i = 0; i < kNumStates; ++i) w(i) = sample_truncated_normal(d.sigma(i), d.bound(i), rng);
  return w;
}

/// Standard deviation of N(0, sigma^2) truncated symmetrically to [-bound, bound].
inline double truncated_normal_stddev(double sigma, double bound) {
  if (sigma == 0.0) return 0.0;
  const double beta = bound / sigma;
  const double pdf = std::exp(-0.5 * beta * beta) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(beta / std::sqrt(2.0));
  return sigma * std::sqrt(1.0 - 2.0 * beta * pdf / mass);
}

/// rk4_step with one disturbance draw per control interval added to every stage derivative.
inline ProcessState stochastic_step(const ProcessState& s, const HeatInputs& a, double dt,
                                    const ProcessParams& p, const DisturbanceSpec& d, Rng& rng,
                                    const IntegratorOptions& opt = {}) {
  if (d.is_zero()) return rk4_step(s, a, dt, p, opt);
  const StateVector w = sample_disturbance(d, rng);
  return detail::integrate_held(s, a, dt, p, opt, &w);
}

}  // namespace dlac
