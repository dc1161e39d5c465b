#pragma once
// File formats: numeric CSV, JSON parameter/config files, binary checkpoints and run manifests.

#include <json.hpp>

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dlac/training.hpp"

namespace dlac {

using json = nlohmann::json;

inline constexpr const char* kVersionTag = "dlac-1.0.0";

// ---------------------------------------------------------------------------------------------
// CSV

/// Shortest text that is 17 significant digits (round-trips every double).
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), width_(header.size()) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t j = 0; j < header.size(); ++j) out_ << (j ? "," : "") << header[j];
    out_ << '\n';
  }
  void row(const std::vector<double>& values) {
    if (values.size() != width_) throw ShapeError("csv row has " + std::to_string(values.size()) +
                                                  " values, header has " + std::to_string(width_));
    for (std::size_t j = 0; j < values.size(); ++j) out_ << (j ? "," : "") << format_double(values[j]);
    out_ << '\n';
    if (!out_) throw IoError("csv write failed");
  }

 private:
  std::ofstream out_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw IoError("csv has no column '" + name + "'");
  }
  std::vector<double> column(const std::string& name) const {
    const std::size_t j = column_index(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong number of fields");
    std::vector<double> r;
    for (const auto& c : cells) {
      // strtod rather than stod: subnormal values must parse instead of raising out_of_range.
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size())
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      r.push_back(v);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// JSON documents

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProcessParams, V1, V2, V3, F10, F20, F1, F2, Fr, Fp, x_A10, x_B10,
                                                x_A20, x_B20, T10, T20, k1, k2, E1, E2, r, dH1, dH2, dH_vap1,
                                                dH_vap2, dH_vap3, cp, rho, alpha_A, alpha_B, alpha_C)

NLOHMANN_JSON_SERIALIZE_ENUM(CriticHead, {{CriticHead::Linear, "linear"}, {CriticHead::SquaredNorm, "squared_norm"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, dt, n_steps, buffer_capacity, n_eps_max, batch_size,
                                                n_eps_interval, n_update, n_eps_min, alpha3, entropy_threshold,
                                                lr_actor, lr_critic, lr_multiplier, tau, gamma, seed, hidden,
                                                critic_head, critic_head_width, critic_output_scale,
                                                multiplier_bound, workers, eval_references, eval_seed)

/// Parse `j` into T starting from `base`; keys that T does not know are rejected.
template <typename T>
T from_json_strict(const json& j, const T& base, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  const json known = base;
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError(what + ": unknown key '" + key + "'");
  json merged = known;
  merged.update(j);
  try {
    return merged.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline ProcessParams load_params(const std::filesystem::path& path) {
  ProcessParams p = from_json_strict(read_json(path), ProcessParams{}, path.string());
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------------------------
// Reference sets and trajectories

inline std::vector<std::string> reference_header() {
  std::vector<std::string> h(kStateNames.begin(), kStateNames.end());
  h.insert(h.end(), kInputNames.begin(), kInputNames.end());
  return h;
}

inline void save_references(const std::filesystem::path& path, const ReferenceSet& set) {
  CsvWriter w(path, reference_header());
  for (const auto& r : set) {
    std::vector<double> row(r.state.v.data(), r.state.v.data() + kNumStates);
    row.insert(row.end(), r.input.q.data(), r.input.q.data() + kNumInputs);
    w.row(row);
  }
}

inline ReferenceSet load_references(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header != reference_header()) throw IoError(path.string() + ": unexpected reference-set header");
  ReferenceSet set;
  for (const auto& r : t.rows) {
    ReferencePair p;
    for (int i = 0; i < kNumStates; ++i) p.state[i] = r[i];
    for (int i = 0; i < kNumInputs; ++i) p.input[i] = r[kNumStates + i];
    set.push_back(p);
  }
  if (set.empty()) throw IoError(path.string() + ": no references");
  return set;
}

inline std::vector<std::string> trajectory_header(int nu) {
  std::vector<std::string> h{"step", "time_h"};
  h.insert(h.end(), kStateNames.begin(), kStateNames.end());
  h.insert(h.end(), kInputNames.begin(), kInputNames.end());
  for (int i = 0; i < nu; ++i) h.push_back("cost_" + std::to_string(i + 1));
  h.push_back("total_cost");
  return h;
}

/// Row k of an episode: state k, the input applied from state k (the last row repeats the final
/// input), local costs at state k and their sum.
inline std::vector<double> trajectory_row(const Episode& ep, int k, double dt) {
  std::vector<double> row{double(k), k * dt};
  row.insert(row.end(), ep.states[k].v.data(), ep.states[k].v.data() + kNumStates);
  const HeatInputs& a = ep.actions.empty() ? HeatInputs() : ep.actions[std::min<std::size_t>(k, ep.actions.size() - 1)];
  row.insert(row.end(), a.q.data(), a.q.data() + kNumInputs);
  double total = 0.0;
  for (double c : ep.costs[k]) {
    row.push_back(c);
    total += c;
  }
  row.push_back(total);
  return row;
}

inline void write_trajectory(const std::filesystem::path& path, const Episode& ep, double dt) {
  const int nu = ep.costs.empty() ? 0 : static_cast<int>(ep.costs.front().size());
  CsvWriter w(path, trajectory_header(nu));
  for (std::size_t k = 0; k < ep.states.size(); ++k) w.row(trajectory_row(ep, static_cast<int>(k), dt));
}

// ---------------------------------------------------------------------------------------------
// Checkpoints: "DLACCKP1", u64 manifest length, JSON manifest, row-major float64 LE payload.

inline constexpr char kCheckpointMagic[8] = {'D', 'L', 'A', 'C', 'C', 'K', 'P', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  static Tensor from_matrix(std::string name, const Eigen::MatrixXd& m) {
    Tensor t{std::move(name), {std::size_t(m.rows()), std::size_t(m.cols())}, {}};
    t.data.reserve(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
    return t;
  }
  static Tensor from_vector(std::string name, const Eigen::VectorXd& v) {
    return {std::move(name), {std::size_t(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
  }
  Eigen::MatrixXd matrix() const {
    if (shape.size() != 2) throw ShapeError("tensor '" + name + "' is not a matrix");
    Eigen::MatrixXd m(shape[0], shape[1]);
    for (std::size_t r = 0; r < shape[0]; ++r)
      for (std::size_t c = 0; c < shape[1]; ++c) m(r, c) = data[r * shape[1] + c];
    return m;
  }
  Eigen::VectorXd vector() const {
    if (shape.size() != 1) throw ShapeError("tensor '" + name + "' is not a vector");
    return Eigen::Map<const Eigen::VectorXd>(data.data(), data.size());
  }
};

struct Checkpoint {
  json meta = json::object();
  std::vector<Tensor> tensors;

  const Tensor& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw IoError("checkpoint has no tensor '" + name + "'");
  }
};

namespace detail {
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    const int c = is.get();
    if (c == EOF) throw IoError("checkpoint truncated");
    v |= std::uint64_t(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json manifest{{"format", "dlac-checkpoint"}, {"version", kCheckpointVersion}, {"meta", ck.meta}};
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.data.size()) throw ShapeError("tensor '" + t.name + "' data does not match its shape");
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", count}});
    offset += 8 * count;
  }
  manifest["tensors"] = entries;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 8);
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ck.tensors)
    for (double x : t.data) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError(path.string() + " is not a checkpoint (bad magic)");
  const std::uint64_t len = detail::get_u64(in);
  if (len > (1ull << 30)) throw IoError("checkpoint manifest too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint truncated");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("version", 0) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  Checkpoint ck;
  ck.meta = manifest.value("meta", json::object());
  std::uint64_t expected = 0;
  for (const auto& e : manifest.at("tensors")) {
    Tensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto count = e.at("count").get<std::size_t>();
    if (e.at("offset").get<std::uint64_t>() != expected) throw IoError("checkpoint tensor offsets are not contiguous");
    t.data.resize(count);
    for (auto& x : t.data) x = std::bit_cast<double>(detail::get_u64(in));
    expected += 8 * count;
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

inline void add_mlp(Checkpoint& ck, const std::string& prefix, const Mlp& net) {
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    ck.tensors.push_back(Tensor::from_matrix(prefix + "." + std::to_string(k) + ".W", net.layers()[k].W));
    ck.tensors.push_back(Tensor::from_vector(prefix + "." + std::to_string(k) + ".b", net.layers()[k].b));
  }
}

inline Mlp read_mlp(const Checkpoint& ck, const std::string& prefix, const std::vector<int>& sizes) {
  Mlp net = Mlp::zeros(sizes);
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const Eigen::MatrixXd W = ck.get(prefix + "." + std::to_string(k) + ".W").matrix();
    const Eigen::VectorXd b = ck.get(prefix + "." + std::to_string(k) + ".b").vector();
    auto& l = net.layers()[k];
    if (W.rows() != l.W.rows() || W.cols() != l.W.cols() || b.size() != l.b.size())
      throw ShapeError("checkpoint layer " + prefix + "." + std::to_string(k) + " has the wrong shape");
    l.W = W;
    l.b = b;
  }
  return net;
}

/// One controller: policy, online and target critic, Lagrange state.
inline Checkpoint learner_checkpoint(const Learner& L, int subsystem) {
  Checkpoint ck;
  ck.meta = {{"subsystem", subsystem},
             {"obs_dim", L.policy.obs_dim()},
             {"action_dim", L.policy.action_dim()},
             {"policy_sizes", L.policy.net().sizes()},
             {"critic_sizes", L.critic.online().sizes()},
             {"critic_head", L.critic.head()},
             {"version_tag", kVersionTag}};
  add_mlp(ck, "policy", L.policy.net());
  add_mlp(ck, "critic", L.critic.online());
  add_mlp(ck, "critic_target", L.critic.target());
  Eigen::VectorXd lag(2);
  lag << L.lagrange.beta, L.lagrange.lambda;
  ck.tensors.push_back(Tensor::from_vector("lagrange", lag));
  return ck;
}

/// Networks and multipliers recovered from a controller checkpoint.
struct ControllerState {
  GaussianPolicy policy;
  CriticNet critic;
  LagrangeState lagrange;
};

inline ControllerState controller_from_checkpoint(const Checkpoint& ck) {
  try {
    const int obs_dim = ck.meta.at("obs_dim"), action_dim = ck.meta.at("action_dim");
    const auto psizes = ck.meta.at("policy_sizes").get<std::vector<int>>();
    const auto csizes = ck.meta.at("critic_sizes").get<std::vector<int>>();
    ControllerState s;
    s.policy = GaussianPolicy(read_mlp(ck, "policy", psizes), action_dim);
    s.critic = CriticNet(read_mlp(ck, "critic", csizes), obs_dim, action_dim, ck.meta.at("critic_head").get<CriticHead>());
    s.critic.target() = read_mlp(ck, "critic_target", csizes);
    const Eigen::VectorXd lag = ck.get("lagrange").vector();
    if (lag.size() != 2) throw ShapeError("lagrange tensor must hold two values");
    s.lagrange = {lag(0), lag(1)};
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }
}

/// Copy checkpointed networks and multipliers into an existing learner of the same shape.
inline void restore_learner(Learner& L, const Checkpoint& ck) {
  ControllerState s = controller_from_checkpoint(ck);
  if (!s.policy.net().same_shape(L.policy.net()) || !s.critic.online().same_shape(L.critic.online()))
    throw ShapeError("checkpoint does not match the learner architecture");
  L.policy = std::move(s.policy);
  L.critic = std::move(s.critic);
  L.lagrange = s.lagrange;
}

// ---------------------------------------------------------------------------------------------
// Training log and run manifest

inline std::vector<std::string> train_log_header(int nu) {
  std::vector<std::string> h{"episode", "mean_cost", "max_temperature_error", "max_fraction_error"};
  for (const char* group : {"critic_loss", "entropy", "exp_beta", "exp_lambda", "message"})
    for (int i = 0; i < nu; ++i) h.push_back(std::string(group) + "_" + std::to_string(i + 1));
  return h;
}

inline std::vector<double> train_log_values(const TrainLogRow& r) {
  std::vector<double> v{double(r.episode), r.mean_cost, r.max_temperature_error, r.max_fraction_error};
  for (const auto* g : {&r.critic_loss, &r.entropy, &r.exp_beta, &r.exp_lambda, &r.message})
    v.insert(v.end(), g->begin(), g->end());
  return v;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Record of one CLI invocation. Everything except the timestamps determines the outputs.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  int workers = 1;
  std::string version_tag = kVersionTag;
  std::vector<std::string> outputs;  // paths relative to the output directory
  std::string started_at, finished_at;

  json to_json() const {
    return {{"command", command},         {"config", config},   {"seed", seed},
            {"workers", workers},         {"version_tag", version_tag},
            {"outputs", outputs},         {"started_at", started_at},
            {"finished_at", finished_at}};
  }
  static RunManifest from_json(const json& j) {
    RunManifest m;
    try {
      m.command = j.at("command");
      m.config = j.at("config");
      m.seed = j.at("seed");
      m.workers = j.value("workers", 1);
      m.version_tag = j.value("version_tag", std::string(kVersionTag));
      m.outputs = j.value("outputs", std::vector<std::string>{});
      m.started_at = j.value("started_at", std::string());
      m.finished_at = j.value("finished_at", std::string());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("run manifest: ") + e.what());
    }
    return m;
  }
};

}  // namespace dlac
