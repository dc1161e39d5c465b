#pragma once
// Steady-state solving and construction of the reference set of (state, input) equilibria.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dlac/integrator.hpp"

namespace dlac {

/// An equilibrium of the process and the constant input that holds it.
struct ReferencePair {
  ProcessState state;
  HeatInputs input;
};

using ReferenceSet = std::vector<ReferencePair>;

/// Componentwise weights that make residuals of mass-fraction and temperature rows comparable:
/// 1 for mass fractions, `temperature_scale` for temperatures.
inline StateVector residual_scale(double temperature_scale = 1.0) {
  StateVector w;
  for (int i = 0; i < kNumStates; ++i) w(i) = is_temperature(i) ? temperature_scale : 1.0;
  return w;
}

/// Forward-difference Jacobian of the model right-hand side with respect to the state.
inline Eigen::Matrix<double, 9, 9> state_jacobian(const ProcessState& s, const HeatInputs& a,
                                                  const ProcessParams& p) {
  Eigen::Matrix<double, 9, 9> J;
  const StateVector f0 = derivatives(s, a, p).v;
  for (int j = 0; j < kNumStates; ++j) {
    ProcessState sp = s;
    const double h = 1e-7 * std::max(1.0, std::abs(s[j]));
    sp[j] += h;
    J.col(j) = (derivatives(sp, a, p).v - f0) / h;
  }
  return J;
}

/// Largest real part among the eigenvalues of the state Jacobian (negative => locally stable).
inline double spectral_abscissa(const ProcessState& s, const HeatInputs& a,
                                const ProcessParams& p) {
  Eigen::EigenSolver<Eigen::Matrix<double, 9, 9>> es(state_jacobian(s, a, p), false);
  return es.eigenvalues().real().maxCoeff();
}

struct SteadyStateOptions {
  double tolerance = 1e-8;   // on ||derivatives||_inf
  int max_newton_iterations = 50;
  double fallback_dt = 0.005;        // h
  double fallback_horizon = 500.0;   // h
  double fallback_switch = 1e-5;     // residual at which integration hands back to Newton
};

struct SteadyStateResult {
  ProcessState state;
  double residual = 0.0;
  int newton_iterations = 0;
  bool used_fallback = false;
};

namespace detail {

inline double residual_norm(const ProcessState& s, const HeatInputs& a, const ProcessParams& p) {
  return derivatives(s, a, p).v.lpNorm<Eigen::Infinity>();
}

/// Damped Newton iteration; returns false if it stalls or leaves the physical domain.
inline bool newton(ProcessState& s, const HeatInputs& a, const ProcessParams& p,
                   const SteadyStateOptions& opt, int& iterations, double& best) {
  double res = residual_norm(s, a, p);
  best = std::min(best, res);
  for (iterations = 0; iterations < opt.max_newton_iterations; ++iterations) {
    if (res < opt.tolerance) return true;
    const StateVector f = derivatives(s, a, p).v;
    const Eigen::Matrix<double, 9, 9> J = state_jacobian(s, a, p);
    const StateVector step = J.partialPivLu().solve(-f);
    if (!step.allFinite()) return false;
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      ProcessState trial(s.v + t * step);
      if (!trial.is_valid()) continue;
      double trial_res;
      try {
        trial_res = residual_norm(trial, a, p);
      } catch (const EvaluationError&) {
        continue;
      }
      if (trial_res < res || (k == 29 && trial_res < 10 * res)) {
        s = trial;
        res = trial_res;
        accepted = true;
        break;
      }
    }
    best = std::min(best, res);
    if (!accepted) return res < opt.tolerance;
  }
  return res < opt.tolerance;
}

}  // namespace detail

/// Newton iteration with a finite-difference Jacobian; if it fails, integrate the open-loop
/// process towards its attractor and polish with Newton.
inline SteadyStateResult solve_steady_state(const HeatInputs& a, const ProcessParams& p,
                                            const ProcessState& guess,
                                            const SteadyStateOptions& opt = {}) {
  if (!guess.is_valid()) throw SolverError("invalid initial guess", INFINITY);
  SteadyStateResult out;
  double best = INFINITY;
  ProcessState s = guess;
  int iters = 0;
  if (detail::newton(s, a, p, opt, iters, best)) {
    out.state = s;
    out.residual = detail::residual_norm(s, a, p);
    out.newton_iterations = iters;
    return out;
  }
  out.used_fallback = true;
  s = guess;
  const int max_steps = static_cast<int>(std::ceil(opt.fallback_horizon / opt.fallback_dt));
  for (int k = 0; k < max_steps; ++k) {
    s = rk4_step(s, a, opt.fallback_dt, p);
    if (k % 20 == 0) {
      const double res = detail::residual_norm(s, a, p);
      best = std::min(best, res);
      if (res < opt.fallback_switch) break;
    }
  }
  if (detail::newton(s, a, p, opt, iters, best)) {
    out.state = s;
    out.residual = detail::residual_norm(s, a, p);
    out.newton_iterations = iters;
    return out;
  }
  throw SolverError("steady-state solve did not converge", best);
}

/// Open-loop equilibrium reached from `start` under input `a`: Newton from the start, accepted
/// only if locally stable; otherwise integrate from the start and polish.
inline SteadyStateResult open_loop_equilibrium(const HeatInputs& a, const ProcessParams& p,
                                               const ProcessState& start,
                                               const SteadyStateOptions& opt = {}) {
  try {
    auto r = solve_steady_state(a, p, start, opt);
    if (spectral_abscissa(r.state, a, p) < 0.0) return r;
  } catch (const SolverError&) {
  }
  SteadyStateOptions forced = opt;
  forced.max_newton_iterations = 0;
  auto r = solve_steady_state(a, p, start, forced);
  return r;
}

/// Tensor grid of heat inputs, `points` levels per input between `low` and `high`.
struct InputGrid {
  HeatInputs low;
  HeatInputs high;
  int points = 11;

  std::vector<HeatInputs> enumerate() const {
    std::vector<HeatInputs> out;
    if (points < 1) return out;
    auto level = [&](int c, int k) {
      return points == 1 ? low[c] : low[c] + (high[c] - low[c]) * k / (points - 1);
    };
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j)
        for (int k = 0; k < points; ++k) out.emplace_back(level(0, i), level(1, j), level(2, k));
    return out;
  }

  /// The grid used for the benchmark reference set: a box around the nominal operating input.
  static InputGrid benchmark() {
    const HeatInputs nominal(2.9e6, 1.0e6, 1.717e6);
    return {HeatInputs(0.92 * nominal.q), HeatInputs(1.20 * nominal.q), 11};
  }
  /// A single-point grid.
  static InputGrid single(const HeatInputs& a) { return {a, a, 1}; }
};

/// Nominal operating state of the benchmark; open-loop simulations start here.
inline ProcessState nominal_state() {
  return {0.1763, 0.6731, 480.3165, 0.1965, 0.6536, 472.7863, 0.0651, 0.6703, 474.8877};
}

struct ReferenceSetOptions {
  SteadyStateOptions solver;
  double duplicate_tolerance = 1e-9;  // relative, per component
  InputBounds bounds;
};

/// One steady pair per converged grid point, duplicates removed.
inline ReferenceSet generate_reference_set(const ProcessParams& p, const InputGrid& grid,
                                           const ProcessState& start = nominal_state(),
                                           const ReferenceSetOptions& opt = {}) {
  ReferenceSet out;
  for (const HeatInputs& a : grid.enumerate()) {
    if (!opt.bounds.contains(a)) throw ConfigError("grid input outside admissible bounds");
    SteadyStateResult r;
    try {
      r = open_loop_equilibrium(a, p, start, opt.solver);
    } catch (const Error&) {
      continue;
    }
    if (!r.state.is_valid()) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const ReferencePair& q) {
      const StateVector scale = q.state.v.cwiseAbs().cwiseMax(1e-12);
      return ((q.state.v - r.state.v).cwiseAbs().array() <= opt.duplicate_tolerance * scale.array())
                 .all() &&
             ((q.input.q - a.q).cwiseAbs().array() <=
              opt.duplicate_tolerance * q.input.q.cwiseAbs().array().max(1.0))
                 .all();
    });
    if (!duplicate) out.push_back({r.state, a});
  }
  if (out.empty()) throw ConfigError("reference-set generation produced no steady states");
  return out;
}

/// Indices of `set` ordered by ascending x_A1 (stable for ties).
inline std::vector<std::size_t> order_by_xa1(const ReferenceSet& set) {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set[a].state[kXA1] < set[b].state[kXA1];
  });
  return idx;
}

struct SelectedReferences {
  ReferencePair high;    // maximum x_A1
  ReferencePair middle;  // median x_A1 (lower-middle for even sizes)
  ReferencePair low;     // minimum x_A1

  std::array<ReferencePair, 3> as_array() const { return {high, middle, low}; }
};

inline SelectedReferences select_references(const ReferenceSet& set) {
  if (set.empty()) throw ConfigError("cannot select references from an empty set");
  const auto idx = order_by_xa1(set);
  return {set[idx.back()], set[idx[(idx.size() - 1) / 2]], set[idx.front()]};
}

/// `count` references spread uniformly by index over the set sorted by x_A1.
inline std::vector<ReferencePair> uniform_references(const ReferenceSet& set, int count = 11) {
  if (set.empty()) throw ConfigError("empty reference set");
  const auto idx = order_by_xa1(set);
  std::vector<ReferencePair> out;
  for (int j = 0; j < count; ++j) {
    const double pos = count == 1 ? 0.0 : double(j) * double(idx.size() - 1) / (count - 1);
    out.push_back(set[idx[static_cast<std::size_t>(std::llround(pos))]]);
  }
  return out;
}

}  // namespace dlac
