// Command-line front end: simulate | refs | train | evaluate | track | diagnose.

#include <CLI11.hpp>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <memory>
#include <string>
#include <vector>

#include "dlac/dlac.hpp"

namespace fs = std::filesystem;
using namespace dlac;

namespace {

constexpr int kExitError = 1;
constexpr int kExitCheckFailed = 3;

// ---------------------------------------------------------------------------------------------
// Configuration

json grid_json(const InputGrid& g) {
  return {{"low", std::vector<double>(g.low.q.data(), g.low.q.data() + 3)},
          {"high", std::vector<double>(g.high.q.data(), g.high.q.data() + 3)},
          {"points", g.points}};
}

json preset(const std::string& name) {
  TrainConfig train;
  if (name == "desk")
    train = TrainConfig::desk_scale();
  else if (name == "paper")
    train = TrainConfig::paper_scale();
  else
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  json c;
  c["preset"] = name;
  c["seed"] = train.seed;
  c["params"] = ProcessParams{};
  c["references"] = {{"file", ""}, {"grid", grid_json(InputGrid::benchmark())}};
  c["train"] = train;
  c["simulate"] = {{"steps", 500},           {"controller", "open_loop"}, {"reference", "middle"},
                   {"initial", "nominal"},    {"disturbance", "none"}};
  c["evaluate"] = {{"dwell_h", 2.5},
                   {"disturbance", "w1"},
                   {"references", 11},
                   {"initial", "random"},
                   {"seed", 12345},
                   {"trajectories", 100},
                   {"trajectory_reference", "middle"},
                   {"lyapunov_rollouts", 20},
                   {"lyapunov_horizon", 500},
                   {"lyapunov_reference", "middle"}};
  c["track"] = {{"dwell_h", 1.5}, {"disturbance", "w1"}, {"initial", "nominal"}};
  c["diagnose"] = {{"chains", 4},
                   {"chain_steps", 1000},
                   {"burn_in_fraction", 0.2},
                   {"reference", "middle"},
                   {"disturbance", "w1"},
                   {"lyapunov_rollouts", 20},
                   {"lyapunov_horizon", 500},
                   {"rhat_threshold", 1.1}};
  return c;
}

/// Every key of `user` must exist in `base`; objects are checked recursively.
void check_keys(const json& user, const json& base, const std::string& where) {
  if (!user.is_object()) return;
  for (const auto& [k, v] : user.items()) {
    if (!base.contains(k)) throw ConfigError("unknown config key '" + where + k + "'");
    if (v.is_object() && base[k].is_object()) check_keys(v, base[k], where + k + ".");
  }
}

struct Options {
  std::string config_path, preset = "desk", out_dir, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

json resolve_config(const Options& o) {
  json user = json::object();
  if (!o.config_path.empty()) {
    user = read_json(o.config_path);
    if (user.contains("command") && user.contains("config")) user = user["config"];  // a run manifest
  }
  const std::string name = user.value("preset", o.preset);
  json c = preset(name);
  check_keys(user, c, "");
  c.merge_patch(user);
  if (o.seed) c["seed"] = *o.seed;
  if (o.workers) c["train"]["workers"] = *o.workers;
  c["train"]["seed"] = c["seed"];
  return c;
}

DisturbanceSpec disturbance_named(const std::string& s) {
  if (s == "none") return DisturbanceSpec::none();
  if (s == "w1") return DisturbanceSpec::sigma_w1();
  if (s == "w2") return DisturbanceSpec::sigma_w2();
  throw ConfigError("unknown disturbance '" + s + "' (expected none, w1 or w2)");
}

HeatInputs heat_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("heat-input vectors need three entries");
  return HeatInputs(v[0], v[1], v[2]);
}

// ---------------------------------------------------------------------------------------------
// Shared setup

struct World {
  json config;
  ProcessParams params;
  ReferenceSet references;
  Plant plant;
  TrainConfig train;
};

World build_world(const json& config, std::optional<Normalizer> normalizer = std::nullopt) {
  World w;
  w.config = config;
  w.params = from_json_strict(config["params"], ProcessParams{}, "params");
  w.params.validate();
  w.train = from_json_strict(config["train"], TrainConfig{}, "train");
  w.train.validate();
  const json& refs = config["references"];
  const std::string file = refs.value("file", std::string());
  if (!file.empty()) {
    w.references = load_references(file);
  } else {
    const json& g = refs["grid"];
    w.references = generate_reference_set(w.params, InputGrid{heat_from(g["low"]), heat_from(g["high"]), g["points"]});
  }
  w.plant.params = w.params;
  w.plant.dt = w.train.dt;
  w.plant.normalizer = normalizer ? *normalizer : Normalizer::fit(w.references);
  return w;
}

ReferencePair pick_reference(const ReferenceSet& set, const json& which) {
  if (which.is_number_integer()) {
    const auto idx = order_by_xa1(set);
    const long k = which.get<long>();
    if (k < 0 || k >= static_cast<long>(idx.size())) throw ConfigError("reference index out of range");
    return set[idx[k]];
  }
  const auto sel = select_references(set);
  const std::string s = which.get<std::string>();
  if (s == "high") return sel.high;
  if (s == "middle") return sel.middle;
  if (s == "low") return sel.low;
  throw ConfigError("unknown reference selector '" + s + "' (expected high, middle, low or an index)");
}

ProcessState initial_named(const std::string& s, const ReferencePair& ref, Rng& rng) {
  if (s == "nominal") return nominal_state();
  if (s == "reference") return ref.state;
  if (s == "random") return sample_initial_state(nominal_state(), rng);
  throw ConfigError("unknown initial state '" + s + "' (expected nominal, reference or random)");
}

fs::path checkpoint_file(const fs::path& dir, int i) { return dir / ("controller_" + std::to_string(i + 1) + ".ckpt"); }

struct LoadedControllers {
  std::vector<ControllerState> states;
  std::optional<Normalizer> normalizer;

  std::vector<const GaussianPolicy*> policies() const {
    std::vector<const GaussianPolicy*> out;
    for (const auto& s : states) out.push_back(&s.policy);
    return out;
  }
  std::vector<const CriticNet*> critics() const {
    std::vector<const CriticNet*> out;
    for (const auto& s : states) out.push_back(&s.critic);
    return out;
  }
};

LoadedControllers load_controllers(const fs::path& dir, int nu) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  LoadedControllers out;
  for (int i = 0; i < nu; ++i) {
    const Checkpoint ck = load_checkpoint(checkpoint_file(dir, i));
    out.states.push_back(controller_from_checkpoint(ck));
    if (i == 0 && ck.meta.contains("normalizer_offset")) {
      const auto off = ck.meta["normalizer_offset"].get<std::vector<double>>();
      const auto sc = ck.meta["normalizer_scale"].get<std::vector<double>>();
      if (off.size() != kNumStates || sc.size() != kNumStates) throw IoError("checkpoint normalizer has wrong size");
      out.normalizer = Normalizer(Eigen::Map<const StateVector>(off.data()), Eigen::Map<const StateVector>(sc.data()));
    }
  }
  return out;
}

std::optional<Normalizer> peek_normalizer(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return load_controllers(dir, 1).normalizer;
}

/// Output directory handling plus the run manifest.
class Run {
 public:
  Run(const std::string& command, const Options& o, json config) : dir_(output_dir(command, o.out_dir)) {
    fs::create_directories(dir_);
    manifest_.command = command;
    manifest_.config = std::move(config);
    manifest_.seed = manifest_.config["seed"].get<std::uint64_t>();
    manifest_.workers = manifest_.config["train"]["workers"].get<int>();
    manifest_.started_at = utc_timestamp();
  }
  fs::path file(const std::string& name) {
    manifest_.outputs.push_back(name);
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    return p;
  }
  void finish() {
    manifest_.finished_at = utc_timestamp();
    write_json(dir_ / "manifest.json", manifest_.to_json());
    std::cout << "outputs written to " << dir_.string() << "\n";
  }
  const fs::path& dir() const { return dir_; }

 private:
  static fs::path output_dir(const std::string& command, const std::string& flag) {
    if (!flag.empty()) return flag;
    const char* env = std::getenv("DLAC_OUT_DIR");
    return fs::path(env && *env ? env : "dlac_runs") / command;
  }
  fs::path dir_;
  RunManifest manifest_;
};

std::vector<std::string> prefixed(const std::string& prefix, const auto& names) {
  std::vector<std::string> out;
  for (const char* n : names) out.push_back(prefix + n);
  return out;
}

void append(std::vector<double>& row, const auto& eigen_vec) {
  row.insert(row.end(), eigen_vec.data(), eigen_vec.data() + eigen_vec.size());
}

// ---------------------------------------------------------------------------------------------
// Commands

int cmd_simulate(const Options& o) {
  const json config = resolve_config(o);
  const World w = build_world(config, peek_normalizer(o.checkpoint));
  const json& sc = config["simulate"];
  const ReferencePair ref = pick_reference(w.references, sc["reference"]);
  Rng rng = derived_rng(config["seed"].get<std::uint64_t>(), 1);

  std::unique_ptr<Controller> ctl;
  LoadedControllers loaded;
  std::string kind = sc["controller"];
  if (!o.checkpoint.empty()) kind = "checkpoint";
  if (kind == "checkpoint") {
    if (o.checkpoint.empty()) throw ConfigError("controller 'checkpoint' needs --checkpoint");
    loaded = load_controllers(o.checkpoint, w.plant.layout.size());
    ctl = std::make_unique<DecentralizedController>(w.plant, loaded.policies(), false);
  } else if (kind == "open_loop") {
    ctl = std::make_unique<OpenLoopController>();
  } else {
    throw ConfigError("unknown controller '" + kind + "' (expected open_loop or checkpoint)");
  }
  const ProcessState start = initial_named(sc["initial"], ref, rng);
  const int steps = sc["steps"];
  if (steps < 1) throw ConfigError("simulate.steps must be >= 1");
  const Episode ep = rollout(w.plant, *ctl, start, ReferenceSchedule(ref), steps, disturbance_named(sc["disturbance"]),
                             rng, {.record_transitions = false});

  Run run("simulate", o, config);
  write_trajectory(run.file("trajectory.csv"), ep, w.plant.dt);
  std::cout << "simulated " << steps << " steps (" << steps * w.plant.dt << " h), final total cost "
            << format_double(std::accumulate(ep.costs.back().begin(), ep.costs.back().end(), 0.0)) << "\n";
  run.finish();
  return 0;
}

ProcessState tabulated_state(int k) {
  static const std::array<ProcessState, 3> rows = {
      ProcessState{0.3628, 0.5961, 451.6020, 0.3768, 0.5817, 442.6132, 0.1623, 0.7490, 445.0317},
      ProcessState{0.2063, 0.6748, 474.5915, 0.2273, 0.6546, 464.9403, 0.0794, 0.7035, 470.7400},
      ProcessState{0.0496, 0.4003, 533.1381, 0.0686, 0.3943, 525.2897, 0.0155, 0.2858, 531.8112}};
  return rows[k];
}

int cmd_refs(const Options& o) {
  const json config = resolve_config(o);
  const World w = build_world(config);
  Run run("refs", o, config);
  save_references(run.file("reference_set.csv"), w.references);

  const auto sel = select_references(w.references).as_array();
  std::vector<std::string> h{"rank"};
  for (const auto& s : reference_header()) h.push_back(s);
  CsvWriter selected(run.file("selected_references.csv"), h);
  CsvWriter deviation(run.file("tabulated_deviation.csv"), h);
  std::cout << "reference set: " << w.references.size() << " steady states\n"
            << "selected references (descending x_A1) and deviation from the tabulated benchmark states:\n";
  for (int k = 0; k < 3; ++k) {
    std::vector<double> row{double(k + 1)};
    append(row, sel[k].state.v);
    append(row, sel[k].input.q);
    selected.row(row);
    const StateVector d = sel[k].state.v - tabulated_state(k).v;
    std::vector<double> drow{double(k + 1)};
    append(drow, d);
    drow.insert(drow.end(), {0.0, 0.0, 0.0});
    deviation.row(drow);
    std::cout << "  s_ref" << k + 1 << ":";
    for (int i = 0; i < kNumStates; ++i) std::cout << " " << kStateNames[i] << "=" << std::setprecision(6) << sel[k].state[i];
    std::cout << "\n    deviation:";
    for (int i = 0; i < kNumStates; ++i) std::cout << " " << std::showpos << std::setprecision(4) << d(i) << std::noshowpos;
    std::cout << "\n";
  }
  run.finish();
  return 0;
}

int cmd_train(const Options& o) {
  const json config = resolve_config(o);
  const World w = build_world(config);
  TrainingSetup setup;
  setup.plant = w.plant;
  setup.references = w.references;
  Run run("train", o, config);
  CsvWriter log(run.file("train_log.csv"), train_log_header(w.plant.layout.size()));
  const TrainResult res = train(w.train, setup, [&](const TrainLogRow& r) {
    log.row(train_log_values(r));
    std::cout << "episode " << r.episode << ": mean cost " << format_double(r.mean_cost) << "\n" << std::flush;
  });
  const Normalizer& nz = w.plant.normalizer;
  for (std::size_t i = 0; i < res.learners.size(); ++i) {
    Checkpoint ck = learner_checkpoint(res.learners[i], static_cast<int>(i));
    ck.meta["normalizer_offset"] = std::vector<double>(nz.offset().data(), nz.offset().data() + kNumStates);
    ck.meta["normalizer_scale"] = std::vector<double>(nz.scale().data(), nz.scale().data() + kNumStates);
    save_checkpoint(run.file("checkpoints/controller_" + std::to_string(i + 1) + ".ckpt"), ck);
  }
  run.finish();
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  const json config = resolve_config(o);
  const World w = build_world(config, peek_normalizer(o.checkpoint));
  const LoadedControllers loaded = load_controllers(o.checkpoint, w.plant.layout.size());
  DecentralizedController ctl(w.plant, loaded.policies(), false);
  const json& ec = config["evaluate"];
  const DisturbanceSpec dist = disturbance_named(ec["disturbance"]);
  const int steps = static_cast<int>(std::lround(ec["dwell_h"].get<double>() / w.plant.dt));
  const std::uint64_t seed = ec["seed"];
  Run run("evaluate", o, config);

  EvaluationProtocol protocol;
  protocol.references = uniform_references(w.references, ec["references"]);
  protocol.n_steps = steps;
  protocol.disturbance = dist;
  protocol.seed = seed;
  if (ec["initial"] == "nominal") protocol.initial = nominal_state();
  const TrackingReport rep = steady_state_errors(w.plant, ctl, protocol);
  {
    std::vector<std::string> h{"reference"};
    for (const char* n : kStateNames) h.push_back(std::string("abs_err_") + n);
    h.insert(h.end(), {"temperature_error", "fraction_error", "accumulated_cost"});
    CsvWriter out(run.file("tracking_report.csv"), h);
    for (const auto& r : rep.rows) {
      std::vector<double> row{double(r.reference)};
      append(row, r.mean_abs_error);
      row.insert(row.end(), {r.temperature_error, r.fraction_error, r.accumulated_cost});
      out.row(row);
    }
  }

  // Mean and spread over many initial states at one reference.
  const ReferencePair tref = pick_reference(w.references, ec["trajectory_reference"]);
  const int n_traj = ec["trajectories"];
  if (n_traj > 0) {
    std::vector<Eigen::Matrix<double, 10, 1>> sum(steps + 1, Eigen::Matrix<double, 10, 1>::Zero()), sq = sum;
    for (int t = 0; t < n_traj; ++t) {
      Rng rng = derived_rng(seed, 10000 + t);
      const ProcessState start = sample_initial_state(nominal_state(), rng);
      const Episode ep = rollout(w.plant, ctl, start, ReferenceSchedule(tref), steps, dist, rng, {.record_transitions = false});
      for (int k = 0; k <= steps; ++k) {
        Eigen::Matrix<double, 10, 1> x;
        x.head<9>() = ep.states[k].v;
        x(9) = std::accumulate(ep.costs[k].begin(), ep.costs[k].end(), 0.0);
        sum[k] += x;
        sq[k] += x.cwiseProduct(x);
      }
    }
    std::vector<std::string> h{"step", "time_h"};
    for (const auto& n : prefixed("mean_", kStateNames)) h.push_back(n);
    for (const auto& n : prefixed("std_", kStateNames)) h.push_back(n);
    h.insert(h.end(), {"mean_total_cost", "std_total_cost"});
    CsvWriter out(run.file("trajectory_statistics.csv"), h);
    for (int k = 0; k <= steps; ++k) {
      const Eigen::Matrix<double, 10, 1> mean = sum[k] / n_traj;
      const Eigen::Matrix<double, 10, 1> var = (sq[k] / n_traj - mean.cwiseProduct(mean)).cwiseMax(0.0);
      const Eigen::Matrix<double, 10, 1> sd = var.cwiseSqrt();
      std::vector<double> row{double(k), k * w.plant.dt};
      append(row, mean.head<9>().eval());
      append(row, sd.head<9>().eval());
      row.insert(row.end(), {mean(9), sd(9)});
      out.row(row);
    }
  }

  LyapunovCheckOptions lo;
  lo.n_rollouts = ec["lyapunov_rollouts"];
  lo.horizon = ec["lyapunov_horizon"];
  lo.alpha3 = w.train.alpha3;
  lo.disturbance = dist;
  Rng lrng = derived_rng(seed, 20000);
  DecentralizedController stochastic(w.plant, loaded.policies(), true);
  const LyapunovReport lr = lyapunov_decrease_check(w.plant, stochastic, critic_lyapunov(loaded.policies(), loaded.critics()),
                                                    pick_reference(w.references, ec["lyapunov_reference"]),
                                                    nominal_state(), lo, lrng);
  {
    std::vector<std::string> h{"estimate", "standard_error"};
    for (int i = 0; i < w.plant.layout.size(); ++i) h.push_back("contribution_" + std::to_string(i + 1));
    h.insert(h.end(), {"alpha1_hat", "alpha2_hat", "decrease_satisfied"});
    CsvWriter out(run.file("lyapunov_report.csv"), h);
    std::vector<double> row{lr.estimate, lr.standard_error};
    row.insert(row.end(), lr.per_subsystem.begin(), lr.per_subsystem.end());
    row.push_back(lr.bounds ? lr.bounds->alpha1 : NAN);
    row.push_back(lr.bounds ? lr.bounds->alpha2 : NAN);
    row.push_back(lr.decrease_satisfied() ? 1.0 : 0.0);
    out.row(row);
  }
  std::cout << "tracking: max temperature error " << format_double(rep.max_temperature_error) << " K, max mass-fraction error "
            << format_double(rep.max_fraction_error) << ", mean accumulated cost " << format_double(rep.mean_accumulated_cost)
            << "\nlyapunov: estimate " << format_double(lr.estimate) << " +- " << format_double(lr.standard_error)
            << (lr.decrease_satisfied() ? " (decrease condition holds)" : " (decrease condition violated)") << "\n";
  run.finish();
  return 0;
}

int cmd_track(const Options& o) {
  const json config = resolve_config(o);
  const World w = build_world(config, peek_normalizer(o.checkpoint));
  const json& tc = config["track"];
  const auto sel = select_references(w.references);
  const std::vector<ReferencePair> refs{sel.high, sel.middle, sel.low};
  const int dwell = static_cast<int>(std::lround(tc["dwell_h"].get<double>() / w.plant.dt));
  if (dwell < 1) throw ConfigError("track.dwell_h is shorter than one sampling interval");
  const ReferenceSchedule schedule(refs, dwell);
  const int steps = 3 * dwell;
  const DisturbanceSpec dist = disturbance_named(tc["disturbance"]);
  const std::uint64_t seed = config["seed"];

  auto run_with = [&](Controller& ctl) {
    Rng rng = derived_rng(seed, 2);  // common random numbers across controllers
    const ProcessState start = initial_named(tc["initial"], refs.front(), rng);
    return rollout(w.plant, ctl, start, schedule, steps, dist, rng, {.record_transitions = false});
  };
  OpenLoopController open_loop;
  const Episode ol = run_with(open_loop);
  std::optional<Episode> rl;
  LoadedControllers loaded;
  if (!o.checkpoint.empty()) {
    loaded = load_controllers(o.checkpoint, w.plant.layout.size());
    DecentralizedController ctl(w.plant, loaded.policies(), false);
    rl = run_with(ctl);
  }

  Run run("track", o, config);
  std::vector<std::string> h{"step", "time_h", "reference_index"};
  for (const auto& n : prefixed("ref_", kStateNames)) h.push_back(n);
  for (const auto& n : prefixed("openloop_", kStateNames)) h.push_back(n);
  for (const auto& n : prefixed("openloop_", kInputNames)) h.push_back(n);
  h.push_back("openloop_cost");
  if (rl) {
    for (const auto& n : prefixed("dlac_", kStateNames)) h.push_back(n);
    for (const auto& n : prefixed("dlac_", kInputNames)) h.push_back(n);
    h.push_back("dlac_cost");
  }
  CsvWriter out(run.file("tracking.csv"), h);
  double ol_sum = 0.0, rl_sum = 0.0;
  auto input_at = [&](const Episode& e, int k) { return e.actions[std::min<std::size_t>(k, e.actions.size() - 1)].q; };
  auto cost_at = [](const Episode& e, int k) { return std::accumulate(e.costs[k].begin(), e.costs[k].end(), 0.0); };
  for (int k = 0; k <= steps; ++k) {
    std::vector<double> row{double(k), k * w.plant.dt, double(ol.reference_index[k] + 1)};
    append(row, schedule.at(std::min(k, steps - 1)).state.v);
    append(row, ol.states[k].v);
    append(row, input_at(ol, k));
    row.push_back(cost_at(ol, k));
    if (k > 0) ol_sum += cost_at(ol, k);
    if (rl) {
      append(row, rl->states[k].v);
      append(row, input_at(*rl, k));
      row.push_back(cost_at(*rl, k));
      if (k > 0) rl_sum += cost_at(*rl, k);
    }
    out.row(row);
  }
  std::cout << "integrated tracking cost: open loop " << format_double(ol_sum);
  if (rl) std::cout << ", DLAC " << format_double(rl_sum);
  std::cout << "\n";
  run.finish();
  return 0;
}

int cmd_diagnose(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("diagnose needs --checkpoint");
  const json config = resolve_config(o);
  const World w = build_world(config, peek_normalizer(o.checkpoint));
  const LoadedControllers loaded = load_controllers(o.checkpoint, w.plant.layout.size());
  const json& dc = config["diagnose"];
  const ReferencePair ref = pick_reference(w.references, dc["reference"]);
  const DisturbanceSpec dist = disturbance_named(dc["disturbance"]);
  const std::uint64_t seed = config["seed"];
  DecentralizedController ctl(w.plant, loaded.policies(), true);

  const int n_chains = dc["chains"], chain_steps = dc["chain_steps"];
  const int skip = static_cast<int>(std::floor(dc["burn_in_fraction"].get<double>() * chain_steps));
  std::vector<std::vector<double>> chains;
  for (int c = 0; c < n_chains; ++c) {
    Rng rng = derived_rng(seed, 30000 + c);
    const ProcessState start = sample_initial_state(nominal_state(), rng);
    const Episode ep = rollout(w.plant, ctl, start, ReferenceSchedule(ref), chain_steps, dist, rng, {.record_transitions = false});
    std::vector<double> chain;
    for (int k = skip + 1; k <= chain_steps; ++k)
      chain.push_back(std::accumulate(ep.costs[k].begin(), ep.costs[k].end(), 0.0));
    chains.push_back(std::move(chain));
  }
  const double rhat = gelman_rubin(chains);

  LyapunovCheckOptions lo;
  lo.n_rollouts = dc["lyapunov_rollouts"];
  lo.horizon = dc["lyapunov_horizon"];
  lo.alpha3 = w.train.alpha3;
  lo.disturbance = dist;
  Rng lrng = derived_rng(seed, 40000);
  const LyapunovReport lr =
      lyapunov_decrease_check(w.plant, ctl, critic_lyapunov(loaded.policies(), loaded.critics()), ref, nominal_state(), lo, lrng);

  const bool rhat_ok = rhat < dc["rhat_threshold"].get<double>();
  const bool alpha_ok = lr.bounds && lr.bounds->alpha1 > 0.0;
  Run run("diagnose", o, config);
  CsvWriter out(run.file("diagnostics.csv"), {"gelman_rubin", "lyapunov_estimate", "lyapunov_standard_error", "alpha1_hat",
                                              "alpha2_hat", "rhat_ok", "decrease_satisfied", "alpha1_positive"});
  out.row({rhat, lr.estimate, lr.standard_error, lr.bounds ? lr.bounds->alpha1 : NAN, lr.bounds ? lr.bounds->alpha2 : NAN,
           double(rhat_ok), double(lr.decrease_satisfied()), double(alpha_ok)});
  std::cout << "Gelman-Rubin R-hat " << format_double(rhat) << (rhat_ok ? " ok" : " NOT converged") << "\n"
            << "Lyapunov decrease estimate " << format_double(lr.estimate) << " +- " << format_double(lr.standard_error)
            << (lr.decrease_satisfied() ? " ok" : " VIOLATED") << "\n"
            << "alpha1_hat " << (lr.bounds ? format_double(lr.bounds->alpha1) : std::string("undefined"))
            << (alpha_ok ? " ok" : " NOT positive") << "\n";
  run.finish();
  return rhat_ok && lr.decrease_satisfied() && alpha_ok ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Lyapunov actor-critic for the two-reactor/separator benchmark"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON config file (or a run manifest)");
  app.add_option("--preset", o.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("--workers", o.workers, "training threads (1 = reference mode)")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", o.out_dir, "output directory (default $DLAC_OUT_DIR/<command>)");
  app.add_option("--checkpoint", o.checkpoint, "directory holding controller_<i>.ckpt files");

  std::map<std::string, int (*)(const Options&)> commands = {
      {"simulate", cmd_simulate}, {"refs", cmd_refs},   {"train", cmd_train},
      {"evaluate", cmd_evaluate}, {"track", cmd_track}, {"diagnose", cmd_diagnose}};
  const std::map<std::string, std::string> help = {
      {"simulate", "simulate the process under open-loop or checkpointed control"},
      {"refs", "generate the reference set and the selected reference triple"},
      {"train", "train distributed controllers"},
      {"evaluate", "tracking and Lyapunov reports for a checkpoint"},
      {"track", "piecewise reference tracking against the open-loop baseline"},
      {"diagnose", "Gelman-Rubin and Lyapunov checks (exit status 3 on failure)"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));
  app.fallthrough();

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return commands.at(name)(o);
  } catch (const std::exception& e) {
    std::cerr << "dlac " << name << ": error: " << e.what() << "\n";
    return kExitError;
  }
}
