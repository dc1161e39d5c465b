#pragma once
// Distributed Lyapunov actor-critic: per-subsystem learners that exchange one scalar per update
// round and act on local observations only.

#include <Eigen/Core>

#include <barrier>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "dlac/mdp.hpp"
#include "dlac/policy.hpp"

namespace dlac {

/// Hyperparameters. Defaults are the full-scale values.
struct TrainConfig {
  double dt = 0.005;
  int n_steps = 500;
  int buffer_capacity = 4000;
  int n_eps_max = 8000;
  int batch_size = 256;
  int n_eps_interval = 50;
  int n_update = 1000;
  int n_eps_min = 400;
  double alpha3 = 0.5;
  double entropy_threshold = -1.0;
  double lr_actor = 1e-4;
  double lr_critic = 1e-4;
  double lr_multiplier = 1e-4;
  double tau = 5e-6;
  double gamma = 0.95;

  std::uint64_t seed = 1;
  std::vector<int> hidden = {64, 64};
  CriticHead critic_head = CriticHead::SquaredNorm;
  int critic_head_width = 16;
  double critic_output_scale = 0.1;  // shrinks the initial critic output layer
  double multiplier_bound = 20.0;  // |beta|, |lambda| clamp
  int workers = 1;                 // 1 = single-threaded reference mode
  int eval_references = 11;
  std::uint64_t eval_seed = 12345;

  static TrainConfig paper_scale() { return {}; }
  /// Reduced run for a single workstation.
  static TrainConfig desk_scale() {
    TrainConfig c;
    c.n_eps_max = 800;
    c.n_steps = 200;
    c.n_eps_min = 100;
    c.n_eps_interval = 25;
    return c;
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    if (!(alpha3 > 0.0)) throw ConfigError("alpha3 must be > 0");
    if (batch_size <= 0 || batch_size > buffer_capacity) throw ConfigError("batch size must be in [1, buffer capacity]");
    if (n_steps <= 0 || n_eps_interval <= 0 || n_update < 0 || n_eps_max < 0 || n_eps_min < 0)
      throw ConfigError("episode counts must be non-negative (steps and interval positive)");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
    if (lr_actor < 0 || lr_critic < 0 || lr_multiplier < 0) throw ConfigError("learning rates must be >= 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_references < 1) throw ConfigError("eval_references must be >= 1");
    if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
    if (!(critic_output_scale > 0.0)) throw ConfigError("critic_output_scale must be > 0");
    if (critic_head_width < 1) throw ConfigError("critic_head_width must be >= 1");
  }

  /// Algorithm 1 trigger: update after episode j when j >= n_eps_min and j % n_eps_interval == 0.
  bool triggers_update(int episode) const {
    return episode >= n_eps_min && episode % n_eps_interval == 0;
  }
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 4000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be > 0");
  }

  void push(Transition t) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(std::move(t));
  }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const { return data_.at(i); }

  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const {
    if (data_.size() < n || data_.empty()) throw Error("replay buffer underflow: " + std::to_string(data_.size()) +
                                                       " < " + std::to_string(n));
    std::uniform_int_distribution<std::size_t> u(0, data_.size() - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = u(rng);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> data_;
};

/// Column-stacked minibatch.
struct Batch {
  Eigen::MatrixXd obs, action, next_obs;
  Eigen::RowVectorXd cost;

  Eigen::Index size() const { return obs.cols(); }

  static Batch from(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
    std::vector<Transition> ts;
    ts.reserve(idx.size());
    for (auto i : idx) ts.push_back(buf.at(i));
    return from(ts);
  }
  static Batch from(const std::vector<Transition>& ts) {
    if (ts.empty()) throw Error("empty batch");
    const Eigen::Index n = ts.size(), od = ts[0].obs.size(), ad = ts[0].action.size();
    Batch b{Eigen::MatrixXd(od, n), Eigen::MatrixXd(ad, n), Eigen::MatrixXd(od, n), Eigen::RowVectorXd(n)};
    for (Eigen::Index j = 0; j < n; ++j) {
      b.obs.col(j) = ts[j].obs;
      b.action.col(j) = ts[j].action;
      b.next_obs.col(j) = ts[j].next_obs;
      b.cost(j) = ts[j].cost;
    }
    return b;
  }
};

/// Exponents of the Lagrange multipliers; the multipliers are exp(beta) and exp(lambda).
struct LagrangeState {
  double beta = 0.0;
  double lambda = 0.0;
  double entropy_multiplier() const { return std::exp(beta); }
  double lyapunov_multiplier() const { return std::exp(lambda); }
};

/// One scalar per controller per exchange round.
class MessageBoard {
 public:
  explicit MessageBoard(int nu) : slots_(nu) {
    if (nu < 1) throw ConfigError("message board needs at least one controller");
  }
  int size() const { return static_cast<int>(slots_.size()); }
  void publish(int i, double m) { slots_.at(i) = m; }
  void reset() { std::fill(slots_.begin(), slots_.end(), std::nullopt); }
  bool complete() const {
    return std::all_of(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); });
  }
  double value(int i) const {
    if (!slots_.at(i)) throw SyncError("no message from controller " + std::to_string(i));
    return *slots_[i];
  }
  double total() const {
    double s = 0.0;
    for (int j = 0; j < size(); ++j) s += value(j);
    return s;
  }

 private:
  std::vector<std::optional<double>> slots_;
};

/// Sum of the messages of every controller except i.
inline double aggregate_messages(const MessageBoard& board, int i) {
  if (!board.complete()) throw SyncError("message board incomplete for this round");
  if (i < 0 || i >= board.size()) throw SyncError("controller index out of range");
  double s = 0.0;
  for (int j = 0; j < board.size(); ++j)
    if (j != i) s += board.value(j);
  return s;
}

// ---------------------------------------------------------------------------------------------
// Losses. Noise matrices are passed explicitly so every loss is a deterministic function.

struct CriticLossResult {
  double loss = 0.0;
  MlpGrad grad;
};

/// 1/2 mean (Q(s,a) - c - gamma * Q_target(s', a'))^2 with a' = f(s'; eps_next); the target is a
/// constant.
inline CriticLossResult critic_loss(const Batch& b, const CriticNet& critic, const GaussianPolicy& policy,
                                    double gamma, const Eigen::MatrixXd& eps_next) {
  if (b.size() == 0) throw Error("critic_loss: empty batch");
  const double n = static_cast<double>(b.size());
  const PolicySample next = policy.sample(b.next_obs, eps_next);
  const Eigen::RowVectorXd target = b.cost + gamma * critic.target_value(b.next_obs, next.action);
  CriticCache cache;
  const Eigen::RowVectorXd q = critic.value(b.obs, b.action, cache);
  const Eigen::RowVectorXd err = q - target;
  CriticLossResult r;
  r.loss = 0.5 * err.squaredNorm() / n;
  r.grad = critic.backward(cache, err / n);
  return r;
}

/// Single-sample Lyapunov value Q(s, f(s; eps)) per column.
inline Eigen::RowVectorXd lyapunov_value(const Eigen::MatrixXd& obs, const GaussianPolicy& policy,
                                         const CriticNet& critic, const Eigen::MatrixXd& eps) {
  return critic.value(obs, policy.sample(obs, eps).action);
}

/// Per-sample energy decrease Q(s', f(s')) - Q(s, a) + alpha3 * c with the online critic.
inline Eigen::RowVectorXd lyapunov_decrease_terms(const Batch& b, const CriticNet& critic,
                                                  const GaussianPolicy& policy, double alpha3,
                                                  const Eigen::MatrixXd& eps_next) {
  const Eigen::RowVectorXd q_next = lyapunov_value(b.next_obs, policy, critic, eps_next);
  return q_next - critic.value(b.obs, b.action) + alpha3 * b.cost;
}

/// The scalar a controller shares: batch mean of the local energy decrease.
inline double compute_message(const Batch& b, const CriticNet& critic, const GaussianPolicy& policy,
                              double alpha3, const Eigen::MatrixXd& eps_next) {
  if (b.size() == 0) throw Error("compute_message: empty batch");
  return lyapunov_decrease_terms(b, critic, policy, alpha3, eps_next).mean();
}

struct ActorLossResult {
  double loss = 0.0;
  MlpGrad grad;
  double mean_log_prob = 0.0;
};

/// mean[ e^beta log pi(f(s; eps)|s) + e^lambda Q(s', f(s'; eps')) ] with the critic frozen.
inline ActorLossResult actor_loss(const Batch& b, const GaussianPolicy& policy, const CriticNet& critic,
                                  const LagrangeState& lagrange, const Eigen::MatrixXd& eps,
                                  const Eigen::MatrixXd& eps_next) {
  if (b.size() == 0) throw Error("actor_loss: empty batch");
  const double n = static_cast<double>(b.size());
  const double wb = lagrange.entropy_multiplier(), wl = lagrange.lyapunov_multiplier();

  PolicyCache pc_now, pc_next;
  const PolicySample now = policy.sample(b.obs, eps, pc_now);
  const PolicySample next = policy.sample(b.next_obs, eps_next, pc_next);
  CriticCache cc;
  const Eigen::RowVectorXd q_next = critic.value(b.next_obs, next.action, cc);

  ActorLossResult r;
  r.mean_log_prob = now.log_prob.mean();
  r.loss = wb * r.mean_log_prob + wl * q_next.mean();

  r.grad = policy.backward(pc_now, Eigen::MatrixXd::Zero(policy.action_dim(), b.size()),
                           Eigen::RowVectorXd::Constant(b.size(), wb / n));
  Eigen::MatrixXd dq_da;
  critic.backward(cc, Eigen::RowVectorXd::Constant(b.size(), wl / n), &dq_da);
  r.grad += policy.backward(pc_next, dq_da, Eigen::RowVectorXd::Zero(b.size()));
  return r;
}

struct MultiplierLossResult {
  double beta_loss = 0.0;
  double lambda_loss = 0.0;
  double d_beta = 0.0;      // gradient of beta_loss w.r.t. beta
  double d_lambda = 0.0;    // gradient of lambda_loss w.r.t. lambda
  double entropy_bracket = 0.0;   // mean[log pi + E]
  double lyapunov_bracket = 0.0;  // mean[m_-i + Q(s',f(s')) - Q(s,a) + alpha3 c]
};

/// beta-loss = -beta mean[log pi + E], lambda-loss = -lambda mean[m_-i + decrease]; both brackets
/// are constants with respect to the multipliers.
inline MultiplierLossResult multiplier_losses(const Batch& b, double m_minus, const GaussianPolicy& policy,
                                              const CriticNet& critic, const LagrangeState& lagrange,
                                              double alpha3, double entropy_threshold,
                                              const Eigen::MatrixXd& eps, const Eigen::MatrixXd& eps_next) {
  MultiplierLossResult r;
  r.entropy_bracket = policy.sample(b.obs, eps).log_prob.mean() + entropy_threshold;
  r.lyapunov_bracket = m_minus + lyapunov_decrease_terms(b, critic, policy, alpha3, eps_next).mean();
  r.d_beta = -r.entropy_bracket;
  r.d_lambda = -r.lyapunov_bracket;
  r.beta_loss = -lagrange.beta * r.entropy_bracket;
  r.lambda_loss = -lagrange.lambda * r.lyapunov_bracket;
  return r;
}

// ---------------------------------------------------------------------------------------------

/// Everything one subsystem controller owns during training.
struct Learner {
  GaussianPolicy policy;
  CriticNet critic;
  Adam actor_opt, critic_opt;
  ScalarAdam beta_opt, lambda_opt;
  LagrangeState lagrange;
  ReplayBuffer buffer;
  std::mt19937_64 rng;

  Learner(int obs_dim, int action_dim, const TrainConfig& cfg, std::uint64_t seed)
      : buffer(cfg.buffer_capacity), rng(seed) {
    std::mt19937_64 init(seed ^ 0x9E3779B97F4A7C15ull);
    policy = GaussianPolicy(obs_dim, action_dim, cfg.hidden, init);
    critic = CriticNet(obs_dim, action_dim, cfg.hidden, cfg.critic_head, cfg.critic_head_width, init);
    critic.online().layers().back().W *= cfg.critic_output_scale;
    critic.target() = critic.online();
    actor_opt = Adam(policy.net(), {cfg.lr_actor});
    critic_opt = Adam(critic.online(), {cfg.lr_critic});
    beta_opt = ScalarAdam({cfg.lr_multiplier});
    lambda_opt = ScalarAdam({cfg.lr_multiplier});
  }
};

/// Per-controller statistics of one update round.
struct RoundMetrics {
  std::vector<double> critic_loss, message, entropy, exp_beta, exp_lambda, lyapunov_bracket;
  explicit RoundMetrics(int nu = 0)
      : critic_loss(nu), message(nu), entropy(nu), exp_beta(nu), exp_lambda(nu), lyapunov_bracket(nu) {}
};

struct UpdateRoundOptions {
  std::optional<int> drop_message_from;  // fault injection: this controller never publishes
};

namespace detail {

inline void critic_phase(Learner& L, const TrainConfig& cfg, MessageBoard& board, int i, Batch& batch,
                         RoundMetrics& m, const UpdateRoundOptions& opt) {
  batch = Batch::from(L.buffer, L.buffer.sample_indices(cfg.batch_size, L.rng));
  const int ad = L.policy.action_dim();
  const auto eps_next = GaussianPolicy::draw_noise(ad, batch.size(), L.rng);
  auto cl = critic_loss(batch, L.critic, L.policy, cfg.gamma, eps_next);
  L.critic_opt.step(L.critic.online(), cl.grad);
  const auto eps_msg = GaussianPolicy::draw_noise(ad, batch.size(), L.rng);
  const double msg = compute_message(batch, L.critic, L.policy, cfg.alpha3, eps_msg);
  m.critic_loss[i] = cl.loss;
  m.message[i] = msg;
  if (!(opt.drop_message_from && *opt.drop_message_from == i)) board.publish(i, msg);
}

inline void actor_phase(Learner& L, const TrainConfig& cfg, const MessageBoard& board, int i,
                        const Batch& batch, RoundMetrics& m) {
  const double m_minus = aggregate_messages(board, i);
  const int ad = L.policy.action_dim();
  const auto eps = GaussianPolicy::draw_noise(ad, batch.size(), L.rng);
  const auto eps_mult = GaussianPolicy::draw_noise(ad, batch.size(), L.rng);
  const auto eps_next = GaussianPolicy::draw_noise(ad, batch.size(), L.rng);

  const auto ml = multiplier_losses(batch, m_minus, L.policy, L.critic, L.lagrange, cfg.alpha3,
                                    cfg.entropy_threshold, eps, eps_mult);
  const double bound = cfg.multiplier_bound;
  L.lagrange.beta = std::clamp(L.beta_opt.step(L.lagrange.beta, ml.d_beta), -bound, bound);
  L.lagrange.lambda = std::clamp(L.lambda_opt.step(L.lagrange.lambda, ml.d_lambda), -bound, bound);

  const auto al = actor_loss(batch, L.policy, L.critic, L.lagrange, eps, eps_next);
  L.actor_opt.step(L.policy.net(), al.grad);
  L.critic.soft_update_target(cfg.tau);

  m.entropy[i] = -al.mean_log_prob;
  m.exp_beta[i] = L.lagrange.entropy_multiplier();
  m.exp_lambda[i] = L.lagrange.lyapunov_multiplier();
  m.lyapunov_bracket[i] = ml.lyapunov_bracket;
}

}  // namespace detail

/// One lockstep round: every learner samples a batch and updates its critic, then publishes its
/// message; after the exchange every learner updates beta, lambda and its actor, then softly
/// updates its target critic.
inline RoundMetrics update_round(std::vector<Learner>& learners, const TrainConfig& cfg,
                                 const UpdateRoundOptions& opt = {}) {
  const int nu = static_cast<int>(learners.size());
  MessageBoard board(nu);
  RoundMetrics m(nu);
  std::vector<Batch> batches(nu);
  for (int i = 0; i < nu; ++i) detail::critic_phase(learners[i], cfg, board, i, batches[i], m, opt);
  for (int i = 0; i < nu; ++i) detail::actor_phase(learners[i], cfg, board, i, batches[i], m);
  return m;
}

/// Runs `rounds` update rounds with one thread per learner; a barrier separates the critic phase
/// (message publication) from the actor phase (message consumption).
inline std::vector<RoundMetrics> update_rounds_distributed(std::vector<Learner>& learners, const TrainConfig& cfg,
                                                           int rounds, const UpdateRoundOptions& opt = {}) {
  const int nu = static_cast<int>(learners.size());
  MessageBoard board(nu);
  std::vector<RoundMetrics> metrics(rounds, RoundMetrics(nu));
  std::vector<Batch> batches(nu);
  std::barrier sync(nu, [&board]() noexcept {});
  std::barrier end_of_round(nu, [&board]() noexcept { board.reset(); });
  std::vector<std::exception_ptr> errors(nu);

  auto worker = [&](int i) {
    try {
      for (int r = 0; r < rounds; ++r) {
        detail::critic_phase(learners[i], cfg, board, i, batches[i], metrics[r], opt);
        sync.arrive_and_wait();
        detail::actor_phase(learners[i], cfg, board, i, batches[i], metrics[r]);
        end_of_round.arrive_and_wait();
      }
    } catch (...) {
      errors[i] = std::current_exception();
      sync.arrive_and_drop();
      end_of_round.arrive_and_drop();
    }
  };
  std::vector<std::thread> threads;
  for (int i = 0; i < nu; ++i) threads.emplace_back(worker, i);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return metrics;
}

// ---------------------------------------------------------------------------------------------
// Execution-time policies.

/// What one deployed controller sees: its own observation vector, nothing else.
class LocalPolicy {
 public:
  explicit LocalPolicy(const GaussianPolicy* policy) : policy_(policy) {}
  /// Normalized action in (-1, 1); sampled when rng is given, tanh(mean) otherwise.
  Eigen::VectorXd act(const Eigen::VectorXd& local_obs, std::mt19937_64* rng) const {
    if (!rng) return policy_->mean_action(local_obs);
    const auto eps = GaussianPolicy::draw_noise(policy_->action_dim(), 1, *rng);
    return policy_->sample(local_obs, eps).action;
  }

 private:
  const GaussianPolicy* policy_;
};

/// Composes independent local policies; each receives only its own subsystem's observation.
class DecentralizedController : public Controller {
 public:
  DecentralizedController(const Plant& plant, std::vector<const GaussianPolicy*> policies, bool stochastic)
      : plant_(&plant), stochastic_(stochastic) {
    if (static_cast<int>(policies.size()) != plant.layout.size())
      throw ConfigError("one policy per subsystem is required");
    for (const auto* p : policies) local_.emplace_back(p);
  }

  HeatInputs act(const ProcessState& s, const ReferencePair& ref, Rng& rng) override {
    const StateVector n = plant_->normalizer.normalize(s), nr = plant_->normalizer.normalize(ref.state);
    InputVector a = InputVector::Zero();
    for (int i = 0; i < plant_->layout.size(); ++i) {
      const Eigen::VectorXd ai = local_[i].act(plant_->observation(i, n, nr), stochastic_ ? &rng : nullptr);
      const auto& idx = plant_->layout.actions(i);
      for (std::size_t j = 0; j < idx.size(); ++j) a(idx[j]) = ai(j);
    }
    return plant_->scaler().denormalize(a);
  }

 private:
  const Plant* plant_;
  std::vector<LocalPolicy> local_;
  bool stochastic_;
};

}  // namespace dlac
