#pragma once
// MDP view of the process: subsystem partition, normalization, stage costs and rollouts.

#include <Eigen/Core>

#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dlac/integrator.hpp"
#include "dlac/steady_state.hpp"

namespace dlac {

/// Partition of the state and input indices into subsystems.
class SubsystemLayout {
 public:
  SubsystemLayout(std::vector<std::vector<int>> states, std::vector<std::vector<int>> actions)
      : states_(std::move(states)), actions_(std::move(actions)) {
    validate();
  }

  /// One subsystem per vessel: (x_Ai, x_Bi, T_i) actuated by Q_i.
  static SubsystemLayout per_vessel() {
    return SubsystemLayout({{0, 1, 2}, {3, 4, 5}, {6, 7, 8}}, {{0}, {1}, {2}});
  }
  /// A single controller owning everything.
  static SubsystemLayout centralized() {
    return SubsystemLayout({{0, 1, 2, 3, 4, 5, 6, 7, 8}}, {{0, 1, 2}});
  }

  int size() const { return static_cast<int>(states_.size()); }
  const std::vector<int>& states(int i) const { return states_.at(i); }
  const std::vector<int>& actions(int i) const { return actions_.at(i); }
  int state_dim(int i) const { return static_cast<int>(states_.at(i).size()); }
  int action_dim(int i) const { return static_cast<int>(actions_.at(i).size()); }
  /// Local observation: normalized local state followed by its deviation from the reference.
  int observation_dim(int i) const { return 2 * state_dim(i); }

 private:
  static void check_partition(const std::vector<std::vector<int>>& lists, int n, const char* what) {
    std::vector<int> seen(n, 0);
    for (const auto& l : lists) {
      if (l.empty()) throw ConfigError(std::string("empty ") + what + " index list");
      for (int k : l) {
        if (k < 0 || k >= n) throw ConfigError(std::string(what) + " index out of range");
        ++seen[k];
      }
    }
    for (int c : seen)
      if (c != 1) throw ConfigError(std::string(what) + " index lists must partition 0.." + std::to_string(n - 1));
  }
  void validate() const {
    if (states_.empty() || states_.size() != actions_.size())
      throw ConfigError("state and action partitions must have the same nonzero size");
    check_partition(states_, kNumStates, "state");
    check_partition(actions_, kNumInputs, "action");
  }

  std::vector<std::vector<int>> states_;
  std::vector<std::vector<int>> actions_;
};

/// Per-state affine map: normalized = (x - offset) / scale. Mass fractions map [0,1] -> [-1,1];
/// temperatures are standardized with reference-set statistics.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(const StateVector& offset, const StateVector& scale) : offset_(offset), scale_(scale) {
    if ((scale.array() <= 0.0).any() || !scale.allFinite())
      throw ConfigError("normalizer scales must be positive");
    fitted_ = true;
  }

  static Normalizer fit(const ReferenceSet& set) {
    if (set.empty()) throw ConfigError("cannot fit normalizer on an empty reference set");
    StateVector offset, scale;
    for (int i = 0; i < kNumStates; ++i) {
      if (!is_temperature(i)) {
        offset(i) = 0.5;
        scale(i) = 0.5;
        continue;
      }
      double mean = 0.0;
      for (const auto& r : set) mean += r.state[i];
      mean /= set.size();
      double var = 0.0;
      for (const auto& r : set) var += (r.state[i] - mean) * (r.state[i] - mean);
      var /= set.size();
      offset(i) = mean;
      scale(i) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return Normalizer(offset, scale);
  }

  bool fitted() const { return fitted_; }
  const StateVector& offset() const { return offset_; }
  const StateVector& scale() const { return scale_; }

  StateVector normalize(const ProcessState& s) const {
    require();
    return ((s.v - offset_).array() / scale_.array()).matrix();
  }
  ProcessState denormalize(const StateVector& n) const {
    require();
    return ProcessState((n.array() * scale_.array()).matrix() + offset_);
  }

 private:
  void require() const {
    if (!fitted_) throw ConfigError("normalizer used before fitting");
  }
  StateVector offset_ = StateVector::Zero();
  StateVector scale_ = StateVector::Ones();
  bool fitted_ = false;
};

/// Maps heat inputs affinely between [low, high] and [-1, 1].
struct ActionScaler {
  InputBounds bounds;

  InputVector normalize(const HeatInputs& a) const {
    return ((2.0 * (a.q - bounds.low.q)).array() / (bounds.high.q - bounds.low.q).array() - 1.0)
        .matrix();
  }
  HeatInputs denormalize(const InputVector& n) const {
    const InputVector clipped = n.cwiseMax(-1.0).cwiseMin(1.0);
    return HeatInputs(bounds.low.q + ((clipped.array() + 1.0) * 0.5 *
                                      (bounds.high.q - bounds.low.q).array())
                                         .matrix());
  }
};

/// Squared Euclidean distance between a normalized local state and its reference.
inline double stage_cost(std::span<const double> local, std::span<const double> reference) {
  if (local.size() != reference.size()) throw ShapeError("stage_cost: dimension mismatch");
  double c = 0.0;
  for (std::size_t j = 0; j < local.size(); ++j) c += (local[j] - reference[j]) * (local[j] - reference[j]);
  return c;
}

/// Everything that defines the controlled process as an MDP.
struct Plant {
  ProcessParams params;
  IntegratorOptions integrator;
  double dt = 0.005;  // h
  InputBounds bounds;
  SubsystemLayout layout = SubsystemLayout::per_vessel();
  Normalizer normalizer;

  ActionScaler scaler() const { return {bounds}; }

  /// Local stage costs C_i of a physical state against a reference state.
  std::vector<double> subsystem_costs(const ProcessState& s, const ProcessState& ref) const {
    const StateVector n = normalizer.normalize(s), nr = normalizer.normalize(ref);
    std::vector<double> out(layout.size());
    for (int i = 0; i < layout.size(); ++i) {
      double c = 0.0;
      for (int k : layout.states(i)) c += (n(k) - nr(k)) * (n(k) - nr(k));
      out[i] = c;
    }
    return out;
  }
  double total_cost(const ProcessState& s, const ProcessState& ref) const {
    return (normalizer.normalize(s) - normalizer.normalize(ref)).squaredNorm();
  }

  /// Observation of subsystem i: [n_i, n_i - n_ref_i] in normalized coordinates.
  Eigen::VectorXd observation(int i, const StateVector& normalized,
                              const StateVector& normalized_ref) const {
    const auto& idx = layout.states(i);
    const int d = static_cast<int>(idx.size());
    Eigen::VectorXd o(2 * d);
    for (int j = 0; j < d; ++j) {
      o(j) = normalized(idx[j]);
      o(d + j) = normalized(idx[j]) - normalized_ref(idx[j]);
    }
    return o;
  }
};

/// Uniform draw from the box [0.8 s0, 1.2 s0], then projected onto the feasible set.
inline ProcessState sample_initial_state(const ProcessState& s0, Rng& rng) {
  ProcessState s;
  for (int j = 0; j < kNumStates; ++j) {
    const double a = 0.8 * s0[j], b = 1.2 * s0[j];
    std::uniform_real_distribution<double> u(std::min(a, b), std::max(a, b));
    s[j] = u(rng);
  }
  return project_feasible(s);
}

/// A controller maps the current plant state and the active reference to heat inputs.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual HeatInputs act(const ProcessState& s, const ReferencePair& ref, Rng& rng) = 0;
};

/// Reference active at each step: a list of references held for `dwell_steps` each; the last
/// one is held indefinitely.
struct ReferenceSchedule {
  std::vector<ReferencePair> refs;
  int dwell_steps = 0;

  ReferenceSchedule() = default;
  explicit ReferenceSchedule(ReferencePair single) : refs{std::move(single)}, dwell_steps(0) {}
  ReferenceSchedule(std::vector<ReferencePair> list, int dwell) : refs(std::move(list)), dwell_steps(dwell) {}

  const ReferencePair& at(int step) const {
    if (refs.empty()) throw ConfigError("empty reference schedule");
    if (dwell_steps <= 0) return refs.front();
    const std::size_t k = std::min<std::size_t>(step / dwell_steps, refs.size() - 1);
    return refs[k];
  }
  int index_at(int step) const {
    if (dwell_steps <= 0) return 0;
    return std::min<int>(step / dwell_steps, static_cast<int>(refs.size()) - 1);
  }
};

/// One per-subsystem sample; observations and action are normalized, the cost is the local stage
/// cost of the state reached after applying the action.
struct Transition {
  Eigen::VectorXd obs;
  Eigen::VectorXd action;
  double cost = 0.0;
  Eigen::VectorXd next_obs;
};

struct Episode {
  std::vector<ProcessState> states;                  // n_steps + 1
  std::vector<HeatInputs> actions;                   // n_steps
  std::vector<std::vector<double>> costs;            // n_steps + 1 rows of nu local costs at states[k]
  std::vector<std::vector<Transition>> transitions;  // [subsystem][step]
  std::vector<int> reference_index;                  // n_steps + 1

  double accumulated_cost() const {
    double c = 0.0;
    for (std::size_t k = 1; k < costs.size(); ++k)
      for (double x : costs[k]) c += x;
    return c;
  }
};

struct RolloutOptions {
  bool record_transitions = true;
};

inline Episode rollout(const Plant& plant, Controller& controller, const ProcessState& initial,
                       const ReferenceSchedule& schedule, int n_steps,
                       const DisturbanceSpec& disturbance, Rng& rng,
                       const RolloutOptions& opt = {}) {
  const int nu = plant.layout.size();
  const ActionScaler scaler = plant.scaler();
  Episode ep;
  ep.states.reserve(n_steps + 1);
  ep.actions.reserve(n_steps);
  ep.transitions.assign(opt.record_transitions ? nu : 0, {});
  ep.states.push_back(initial);

  auto observe = [&](const ProcessState& s, const ReferencePair& ref, std::vector<Eigen::VectorXd>& obs) {
    const StateVector n = plant.normalizer.normalize(s), nr = plant.normalizer.normalize(ref.state);
    obs.resize(nu);
    for (int i = 0; i < nu; ++i) obs[i] = plant.observation(i, n, nr);
  };

  ep.costs.push_back(plant.subsystem_costs(initial, schedule.at(0).state));
  ep.reference_index.push_back(schedule.index_at(0));
  std::vector<Eigen::VectorXd> obs, next_obs;
  ProcessState s = initial;
  for (int k = 0; k < n_steps; ++k) {
    const ReferencePair& ref = schedule.at(k);
    const HeatInputs a = plant.bounds.clamp(controller.act(s, ref, rng));
    ProcessState next;
    try {
      next = stochastic_step(s, a, plant.dt, plant.params, disturbance, rng, plant.integrator);
    } catch (const Error& e) {
      throw IntegrationError(std::string(e.what()) + " at rollout step " + std::to_string(k), 0);
    }
    const std::vector<double> c = plant.subsystem_costs(next, ref.state);
    if (opt.record_transitions) {
      observe(s, ref, obs);
      observe(next, ref, next_obs);
      const InputVector an = scaler.normalize(a);
      for (int i = 0; i < nu; ++i) {
        const auto& ai = plant.layout.actions(i);
        Eigen::VectorXd local(ai.size());
        for (std::size_t j = 0; j < ai.size(); ++j) local(j) = an(ai[j]);
        ep.transitions[i].push_back({obs[i], local, c[i], next_obs[i]});
      }
    }
    ep.actions.push_back(a);
    ep.states.push_back(next);
    ep.costs.push_back(schedule.index_at(k + 1) == schedule.index_at(k)
                           ? c
                           : plant.subsystem_costs(next, schedule.at(k + 1).state));
    ep.reference_index.push_back(schedule.index_at(k + 1));
    s = next;
  }
  return ep;
}

}  // namespace dlac
