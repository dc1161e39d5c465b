#pragma once
// Outer training loop: episode sampling, update triggers and periodic evaluation.

#include <functional>
#include <string>
#include <vector>

#include "dlac/diagnostics.hpp"
#include "dlac/trainer.hpp"

namespace dlac {

/// The plant, its references and the disturbance used while collecting episodes.
struct TrainingSetup {
  Plant plant;
  ReferenceSet references;
  ProcessState box_center = nominal_state();
  DisturbanceSpec disturbance = DisturbanceSpec::sigma_w1();
};

struct TrainLogRow {
  int episode = 0;
  double mean_cost = 0.0;  // deterministic-policy mean accumulated cost over the evaluation references
  double max_temperature_error = 0.0;
  double max_fraction_error = 0.0;
  std::vector<double> critic_loss, entropy, exp_beta, exp_lambda, message;  // per subsystem
};

struct TrainResult {
  std::vector<Learner> learners;
  std::vector<TrainLogRow> log;
};

inline std::vector<const GaussianPolicy*> policy_views(const std::vector<Learner>& ls) {
  std::vector<const GaussianPolicy*> out;
  for (const auto& l : ls) out.push_back(&l.policy);
  return out;
}
inline std::vector<const CriticNet*> critic_views(const std::vector<Learner>& ls) {
  std::vector<const CriticNet*> out;
  for (const auto& l : ls) out.push_back(&l.critic);
  return out;
}

/// Fresh learners, one per subsystem, each with its own seed stream.
inline std::vector<Learner> make_learners(const Plant& plant, const TrainConfig& cfg) {
  std::vector<Learner> out;
  for (int i = 0; i < plant.layout.size(); ++i) {
    Rng seeder = derived_rng(cfg.seed, 1000 + i);
    out.emplace_back(plant.layout.observation_dim(i), plant.layout.action_dim(i), cfg, seeder());
  }
  return out;
}

/// Evaluation protocol used for the training log.
inline EvaluationProtocol training_evaluation(const TrainConfig& cfg, const TrainingSetup& setup) {
  EvaluationProtocol p;
  p.references = uniform_references(setup.references, cfg.eval_references);
  p.n_steps = cfg.n_steps;
  p.disturbance = setup.disturbance;
  p.seed = cfg.eval_seed;
  p.box_center = setup.box_center;
  return p;
}

inline TrackingReport evaluate_learners(const std::vector<Learner>& learners, const Plant& plant,
                                        const EvaluationProtocol& protocol) {
  DecentralizedController ctl(plant, policy_views(learners), false);
  return steady_state_errors(plant, ctl, protocol);
}

/// Sample one training episode towards a uniformly drawn reference and append its transitions.
inline Episode collect_episode(std::vector<Learner>& learners, const TrainConfig& cfg, const TrainingSetup& setup,
                               Rng& env_rng) {
  std::uniform_int_distribution<std::size_t> pick(0, setup.references.size() - 1);
  const ReferencePair& ref = setup.references[pick(env_rng)];
  const ProcessState start = sample_initial_state(setup.box_center, env_rng);
  DecentralizedController ctl(setup.plant, policy_views(learners), true);
  Episode ep = rollout(setup.plant, ctl, start, ReferenceSchedule(ref), cfg.n_steps, setup.disturbance, env_rng);
  for (std::size_t i = 0; i < learners.size(); ++i)
    for (auto& t : ep.transitions[i]) learners[i].buffer.push(std::move(t));
  return ep;
}

using TrainObserver = std::function<void(const TrainLogRow&)>;

/// Algorithm 1. A log row is written for the untrained policies at episode 0 and after each
/// triggered block of update rounds.
inline TrainResult train(const TrainConfig& cfg, const TrainingSetup& setup, const TrainObserver& on_log = {}) {
  cfg.validate();
  setup.disturbance.validate();
  if (setup.references.empty()) throw ConfigError("training needs a nonempty reference set");
  Plant plant = setup.plant;
  plant.dt = cfg.dt;

  TrainResult res;
  res.learners = make_learners(plant, cfg);
  if (cfg.n_eps_max == 0) return res;

  TrainingSetup run = setup;
  run.plant = plant;
  const int nu = plant.layout.size();
  const EvaluationProtocol protocol = training_evaluation(cfg, run);
  Rng env_rng = derived_rng(cfg.seed, 0);

  auto log_row = [&](int episode, const std::vector<RoundMetrics>& rounds) {
    const TrackingReport rep = evaluate_learners(res.learners, plant, protocol);
    TrainLogRow row;
    row.episode = episode;
    row.mean_cost = rep.mean_accumulated_cost;
    row.max_temperature_error = rep.max_temperature_error;
    row.max_fraction_error = rep.max_fraction_error;
    row.critic_loss.assign(nu, 0.0);
    row.entropy.assign(nu, 0.0);
    row.message.assign(nu, 0.0);
    for (int i = 0; i < nu; ++i) {
      row.exp_beta.push_back(res.learners[i].lagrange.entropy_multiplier());
      row.exp_lambda.push_back(res.learners[i].lagrange.lyapunov_multiplier());
      for (const auto& m : rounds) {
        row.critic_loss[i] += m.critic_loss[i] / rounds.size();
        row.entropy[i] += m.entropy[i] / rounds.size();
        row.message[i] += m.message[i] / rounds.size();
      }
    }
    res.log.push_back(row);
    if (on_log) on_log(row);
  };

  log_row(0, {});
  for (int episode = 1; episode <= cfg.n_eps_max; ++episode) {
    try {
      collect_episode(res.learners, cfg, run, env_rng);
      if (!cfg.triggers_update(episode)) continue;
      std::vector<RoundMetrics> rounds;
      if (cfg.workers > 1 && nu > 1) {
        rounds = update_rounds_distributed(res.learners, cfg, cfg.n_update);
      } else {
        rounds.reserve(cfg.n_update);
        for (int r = 0; r < cfg.n_update; ++r) rounds.push_back(update_round(res.learners, cfg));
      }
      log_row(episode, rounds);
    } catch (const Error& e) {
      throw Error("training failed at episode " + std::to_string(episode) + ": " + e.what());
    }
  }
  return res;
}

}  // namespace dlac
