#pragma once
// Empirical stability checks and tracking metrics for trained controllers.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "dlac/mdp.hpp"
#include "dlac/trainer.hpp"

namespace dlac {

/// Per-caller stream derived from a base seed and a stream index.
inline Rng derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------------------------
// Tracking metrics

struct EvaluationProtocol {
  std::vector<ReferencePair> references;
  int n_steps = 500;
  DisturbanceSpec disturbance = DisturbanceSpec::sigma_w1();
  std::uint64_t seed = 12345;
  std::optional<ProcessState> initial;       // fixed start state; otherwise a draw from the box
  ProcessState box_center = nominal_state();
  double window_fraction = 0.2;              // trailing part of the horizon treated as steady
};

struct TrackingRow {
  std::size_t reference = 0;
  StateVector mean_abs_error = StateVector::Zero();  // physical units, over the window
  double temperature_error = 0.0;                    // max over the three temperatures (K)
  double fraction_error = 0.0;                       // max over the six mass fractions
  double accumulated_cost = 0.0;
};

struct TrackingReport {
  std::vector<TrackingRow> rows;
  double max_temperature_error = 0.0;
  double max_fraction_error = 0.0;
  double mean_accumulated_cost = 0.0;
};

/// Number of trailing samples in a window covering `fraction` of `n`.
inline int window_length(int n, double fraction) {
  return std::clamp(static_cast<int>(std::lround(fraction * n)), 1, std::max(1, n));
}

/// Mean absolute deviation from `ref` of states[n-m+1 .. n], m = window_length(n).
inline StateVector window_abs_error(const std::vector<ProcessState>& states, const ProcessState& ref,
                                    double fraction) {
  const int n = static_cast<int>(states.size()) - 1;
  if (n < 1) return (states.front().v - ref.v).cwiseAbs();
  const int m = window_length(n, fraction);
  StateVector e = StateVector::Zero();
  for (int k = n - m + 1; k <= n; ++k) e += (states[k].v - ref.v).cwiseAbs();
  return e / m;
}

/// Simulate each reference from its own seeded stream and report steady-state tracking errors.
inline TrackingReport steady_state_errors(const Plant& plant, Controller& controller,
                                          const EvaluationProtocol& protocol) {
  if (protocol.references.empty()) throw ConfigError("no references to evaluate");
  TrackingReport rep;
  double cost_sum = 0.0;
  for (std::size_t j = 0; j < protocol.references.size(); ++j) {
    const ReferencePair& ref = protocol.references[j];
    Rng rng = derived_rng(protocol.seed, j);
    const ProcessState start = protocol.initial ? *protocol.initial : sample_initial_state(protocol.box_center, rng);
    const Episode ep = rollout(plant, controller, start, ReferenceSchedule(ref), protocol.n_steps,
                               protocol.disturbance, rng, {.record_transitions = false});
    TrackingRow row;
    row.reference = j;
    row.mean_abs_error = window_abs_error(ep.states, ref.state, protocol.window_fraction);
    for (int i = 0; i < kNumStates; ++i) {
      double& slot = is_temperature(i) ? row.temperature_error : row.fraction_error;
      slot = std::max(slot, row.mean_abs_error(i));
    }
    row.accumulated_cost = ep.accumulated_cost();
    cost_sum += row.accumulated_cost;
    rep.max_temperature_error = std::max(rep.max_temperature_error, row.temperature_error);
    rep.max_fraction_error = std::max(rep.max_fraction_error, row.fraction_error);
    rep.rows.push_back(row);
  }
  rep.mean_accumulated_cost = cost_sum / rep.rows.size();
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Lyapunov conditions

/// L_i evaluated on a local observation; may draw from rng (single-sample estimate).
using LyapunovFunction = std::function<double(int subsystem, const Eigen::VectorXd& obs, Rng& rng)>;

/// L_i(s) = Q_i(s, a) with a one fresh sample from pi_i(.|s).
inline LyapunovFunction critic_lyapunov(std::vector<const GaussianPolicy*> policies,
                                        std::vector<const CriticNet*> critics) {
  if (policies.size() != critics.size()) throw ConfigError("one critic per policy is required");
  return [policies = std::move(policies), critics = std::move(critics)](int i, const Eigen::VectorXd& obs,
                                                                        Rng& rng) {
    const GaussianPolicy& pi = *policies.at(i);
    const auto eps = GaussianPolicy::draw_noise(pi.action_dim(), 1, rng);
    return lyapunov_value(obs, pi, *critics.at(i), eps)(0);
  };
}

/// Lyapunov values and stage costs of every subsystem at one visited state.
struct BoundSample {
  std::vector<double> lyapunov;
  std::vector<double> cost;
};

struct BoundFit {
  double alpha1 = 0.0;  // pooled min L/C
  double alpha2 = 0.0;  // pooled max L/C
  std::vector<std::optional<double>> alpha1_sub, alpha2_sub;
  std::size_t used = 0;
};

/// Ratio bounds alpha1 <= L/C <= alpha2 over samples whose cost exceeds eps_c. The pooled ratio
/// uses L = sum L_i and C = sum C_i.
inline BoundFit lyapunov_bound_fit(const std::vector<BoundSample>& samples, double eps_c = 1e-8) {
  if (samples.empty()) throw DiagnosticError("no samples for the bound fit");
  const std::size_t nu = samples.front().cost.size();
  BoundFit fit;
  fit.alpha1 = INFINITY;
  fit.alpha2 = -INFINITY;
  fit.alpha1_sub.assign(nu, std::nullopt);
  fit.alpha2_sub.assign(nu, std::nullopt);
  for (const auto& s : samples) {
    if (s.cost.size() != nu || s.lyapunov.size() != nu) throw ShapeError("bound fit: inconsistent sample sizes");
    double L = 0.0, C = 0.0;
    for (std::size_t i = 0; i < nu; ++i) {
      L += s.lyapunov[i];
      C += s.cost[i];
      if (s.cost[i] > eps_c) {
        const double r = s.lyapunov[i] / s.cost[i];
        fit.alpha1_sub[i] = std::min(fit.alpha1_sub[i].value_or(INFINITY), r);
        fit.alpha2_sub[i] = std::max(fit.alpha2_sub[i].value_or(-INFINITY), r);
      }
    }
    if (C > eps_c) {
      fit.alpha1 = std::min(fit.alpha1, L / C);
      fit.alpha2 = std::max(fit.alpha2, L / C);
      ++fit.used;
    }
  }
  if (fit.used == 0) throw DiagnosticError("every sample has cost below the ratio threshold");
  return fit;
}

struct LyapunovCheckOptions {
  int n_rollouts = 20;
  int horizon = 500;
  double alpha3 = 0.5;
  DisturbanceSpec disturbance = DisturbanceSpec::sigma_w1();
  double burn_in_fraction = 0.0;  // leading fraction of each rollout excluded from the average
  bool collect_samples = true;    // keep (L, C) pairs for the bound fit
};

struct LyapunovReport {
  double estimate = 0.0;  // mean[L(s') - L(s) + alpha3 C(s)], L = sum_i L_i
  double standard_error = 0.0;
  std::vector<double> per_subsystem;
  std::optional<BoundFit> bounds;
  std::vector<BoundSample> samples;
  long n_terms = 0;

  bool decrease_satisfied() const { return estimate + 2.0 * standard_error <= 0.0; }
};

/// Monte-Carlo estimate of the expected energy decrease along closed-loop rollouts from random
/// initial states. The standard error is taken across rollouts.
inline LyapunovReport lyapunov_decrease_check(const Plant& plant, Controller& controller, const LyapunovFunction& L,
                                              const ReferencePair& ref, const ProcessState& box_center,
                                              const LyapunovCheckOptions& opt, Rng& rng) {
  if (opt.n_rollouts < 1) throw ConfigError("lyapunov check needs at least one rollout");
  if (opt.horizon < 1) throw ConfigError("lyapunov check needs a positive horizon");
  const int nu = plant.layout.size();
  const StateVector nr = plant.normalizer.normalize(ref.state);
  const int skip = static_cast<int>(std::floor(opt.burn_in_fraction * opt.horizon));
  if (skip >= opt.horizon) throw ConfigError("burn-in covers the whole horizon");

  LyapunovReport rep;
  rep.per_subsystem.assign(nu, 0.0);
  std::vector<double> rollout_means;
  std::vector<double> step_terms;
  for (int r = 0; r < opt.n_rollouts; ++r) {
    const ProcessState start = sample_initial_state(box_center, rng);
    const Episode ep = rollout(plant, controller, start, ReferenceSchedule(ref), opt.horizon, opt.disturbance, rng,
                               {.record_transitions = false});
    // One Lyapunov draw per visited state so consecutive differences telescope.
    std::vector<std::vector<double>> lv(ep.states.size(), std::vector<double>(nu));
    for (std::size_t k = 0; k < ep.states.size(); ++k) {
      const StateVector n = plant.normalizer.normalize(ep.states[k]);
      for (int i = 0; i < nu; ++i) lv[k][i] = L(i, plant.observation(i, n, nr), rng);
      if (opt.collect_samples) rep.samples.push_back({lv[k], ep.costs[k]});
    }
    std::vector<double> sub(nu, 0.0);
    const int count = opt.horizon - skip;
    for (int k = skip; k < opt.horizon; ++k) {
      double term = 0.0;
      for (int i = 0; i < nu; ++i) {
        const double t = lv[k + 1][i] - lv[k][i] + opt.alpha3 * ep.costs[k][i];
        sub[i] += t;
        term += t;
      }
      step_terms.push_back(term);
    }
    double total = 0.0;
    for (int i = 0; i < nu; ++i) {
      sub[i] /= count;
      rep.per_subsystem[i] += sub[i] / opt.n_rollouts;
      total += sub[i];
    }
    rollout_means.push_back(total);
  }
  rep.estimate = 0.0;
  for (double v : rep.per_subsystem) rep.estimate += v;
  rep.n_terms = static_cast<long>(step_terms.size());

  auto sample_se = [](const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double m = 0.0;
    for (double v : x) m += v;
    m /= x.size();
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / (x.size() - 1) / x.size());
  };
  rep.standard_error = rollout_means.size() >= 2 ? sample_se(rollout_means) : sample_se(step_terms);
  if (opt.collect_samples) {
    try {
      rep.bounds = lyapunov_bound_fit(rep.samples);
    } catch (const DiagnosticError&) {
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------

/// Potential scale reduction factor of equal-length scalar chains.
inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw DiagnosticError("gelman_rubin needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 2) throw DiagnosticError("gelman_rubin needs chains of length >= 2");
  for (const auto& c : chains)
    if (c.size() != n) throw DiagnosticError("gelman_rubin chains must have equal length");
  const double m = static_cast<double>(chains.size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    double mu = 0.0;
    for (double x : c) mu += x;
    mu /= n;
    double v = 0.0;
    for (double x : c) v += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(v / (n - 1));
  }
  double grand = 0.0, W = 0.0;
  for (std::size_t j = 0; j < means.size(); ++j) {
    grand += means[j];
    W += vars[j];
  }
  grand /= m;
  W /= m;
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= static_cast<double>(n) / (m - 1.0);
  if (!(W > 0.0)) throw DiagnosticError("gelman_rubin: zero within-chain variance");
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

}  // namespace dlac
