#pragma once
// Squashed-Gaussian actor and Q-critic built on Mlp.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dlac/nn.hpp"

namespace dlac {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);
/// Largest double strictly below one; squashed actions are kept inside (-1, 1).
inline const double kActionLimit = std::nextafter(1.0, 0.0);

namespace detail {
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
/// log(1 - tanh(u)^2) without cancellation.
inline double log_one_minus_tanh2(double u) { return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u)); }
}  // namespace detail

struct PolicyCache {
  MlpCache net;
  Eigen::MatrixXd log_std, std, eps, u, tanh_u;
  Eigen::ArrayXXd log_std_active;  // 1 where the log-std clamp is inactive
};

/// Batched policy output; column j belongs to sample j.
struct PolicySample {
  Eigen::MatrixXd action;       // squashed, in (-1, 1)
  Eigen::RowVectorXd log_prob;  // log density of the squashed action
};

/// Gaussian policy with tanh squashing: the network emits (mean, log std) per action dimension,
/// a = tanh(mean + eps * std).
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, int action_dim, const std::vector<int>& hidden, std::mt19937_64& rng)
      : action_dim_(action_dim), net_(layer_sizes(obs_dim, action_dim, hidden), rng) {}
  GaussianPolicy(Mlp net, int action_dim) : action_dim_(action_dim), net_(std::move(net)) {
    if (net_.output_size() != 2 * action_dim_) throw ShapeError("policy net must output 2 * action_dim");
  }

  int obs_dim() const { return net_.input_size(); }
  int action_dim() const { return action_dim_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  PolicySample sample(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps) const {
    PolicyCache c;
    return sample(obs, eps, c);
  }

  PolicySample sample(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps, PolicyCache& c) const {
    if (eps.rows() != action_dim_ || eps.cols() != obs.cols()) throw ShapeError("policy: noise shape mismatch");
    const Eigen::MatrixXd out = net_.forward(obs, c.net);
    const Eigen::MatrixXd mean = out.topRows(action_dim_);
    const Eigen::MatrixXd raw = out.bottomRows(action_dim_);
    c.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    c.log_std_active = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>();
    c.std = c.log_std.array().exp();
    c.eps = eps;
    c.u = mean + eps.cwiseProduct(c.std);
    c.tanh_u = c.u.array().tanh();

    PolicySample s;
    s.action = c.tanh_u.cwiseMax(-kActionLimit).cwiseMin(kActionLimit);
    s.log_prob.resize(obs.cols());
    for (Eigen::Index j = 0; j < obs.cols(); ++j) {
      double lp = 0.0;
      for (int d = 0; d < action_dim_; ++d)
        lp += -0.5 * eps(d, j) * eps(d, j) - c.log_std(d, j) - kHalfLog2Pi -
              detail::log_one_minus_tanh2(c.u(d, j));
      s.log_prob(j) = lp;
    }
    return s;
  }

  /// Backpropagate upstream gradients with respect to the sampled actions and their log-densities
  /// (noise held fixed) into the network parameters.
  MlpGrad backward(const PolicyCache& c, const Eigen::MatrixXd& d_action,
                   const Eigen::RowVectorXd& d_log_prob, Eigen::MatrixXd* d_obs = nullptr) const {
    const Eigen::Index n = c.u.cols();
    if (d_action.rows() != action_dim_ || d_action.cols() != n || d_log_prob.size() != n)
      throw ShapeError("policy backward: gradient shape mismatch");
    Eigen::MatrixXd d_out(2 * action_dim_, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int d = 0; d < action_dim_; ++d) {
        const double t = c.tanh_u(d, j);
        // d log pi / du = 2 tanh(u) (squash correction); da/du = 1 - tanh(u)^2
        const double g_u = d_action(d, j) * (1.0 - t * t) + d_log_prob(j) * 2.0 * t;
        d_out(d, j) = g_u;
        d_out(action_dim_ + d, j) =
            (g_u * c.std(d, j) * c.eps(d, j) - d_log_prob(j)) * c.log_std_active(d, j);
      }
    }
    return net_.backward(c.net, d_out, d_obs);
  }

  /// tanh(mean) for each observation column.
  Eigen::MatrixXd mean_action(const Eigen::MatrixXd& obs) const {
    const Eigen::MatrixXd out = net_.forward(obs);
    return out.topRows(action_dim_).array().tanh().cwiseMax(-kActionLimit).cwiseMin(kActionLimit);
  }

  /// Mean and clamped log-std (pre-squash) for each observation column.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> distribution(const Eigen::MatrixXd& obs) const {
    const Eigen::MatrixXd out = net_.forward(obs);
    return {out.topRows(action_dim_), out.bottomRows(action_dim_).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax)};
  }

  static Eigen::MatrixXd draw_noise(int action_dim, Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd eps(action_dim, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (int d = 0; d < action_dim; ++d) eps(d, j) = normal(rng);
    return eps;
  }

 private:
  static std::vector<int> layer_sizes(int obs_dim, int action_dim, const std::vector<int>& hidden) {
    std::vector<int> s{obs_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(2 * action_dim);
    return s;
  }

  int action_dim_ = 0;
  Mlp net_;
};

/// Output transform of the critic network.
enum class CriticHead {
  Linear,      // Q = z (network output is a scalar)
  SquaredNorm  // Q = |z|^2 (nonnegative by construction)
};

struct CriticCache {
  MlpCache net;
  Eigen::MatrixXd z;
};

/// Q-network over (observation, action) with a softly updated target copy.
class CriticNet {
 public:
  CriticNet() = default;
  CriticNet(int obs_dim, int action_dim, const std::vector<int>& hidden, CriticHead head,
            int head_width, std::mt19937_64& rng)
      : obs_dim_(obs_dim), action_dim_(action_dim), head_(head),
        online_(layer_sizes(obs_dim + action_dim, hidden, head == CriticHead::Linear ? 1 : head_width), rng),
        target_(online_) {}
  CriticNet(Mlp online, int obs_dim, int action_dim, CriticHead head)
      : obs_dim_(obs_dim), action_dim_(action_dim), head_(head), online_(std::move(online)), target_(online_) {
    if (online_.input_size() != obs_dim + action_dim) throw ShapeError("critic input size mismatch");
    if (head == CriticHead::Linear && online_.output_size() != 1)
      throw ShapeError("linear critic head needs a scalar output");
  }

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }
  CriticHead head() const { return head_; }
  Mlp& online() { return online_; }
  const Mlp& online() const { return online_; }
  Mlp& target() { return target_; }
  const Mlp& target() const { return target_; }

  Eigen::RowVectorXd value(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) const {
    return apply_head(online_.forward(stack(obs, act)));
  }
  Eigen::RowVectorXd target_value(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) const {
    return apply_head(target_.forward(stack(obs, act)));
  }
  Eigen::RowVectorXd value(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act, CriticCache& c) const {
    c.z = online_.forward(stack(obs, act), c.net);
    return apply_head(c.z);
  }

  /// Gradient of sum_j dq(j) * Q_j with respect to the online parameters; optionally the
  /// gradient with respect to the action inputs.
  MlpGrad backward(const CriticCache& c, const Eigen::RowVectorXd& dq, Eigen::MatrixXd* d_action = nullptr) const {
    Eigen::MatrixXd dz;
    if (head_ == CriticHead::Linear) {
      dz = dq;
    } else {
      dz = 2.0 * c.z;
      dz.array().rowwise() *= dq.array();
    }
    if (!d_action) return online_.backward(c.net, dz);
    Eigen::MatrixXd dx;
    MlpGrad g = online_.backward(c.net, dz, &dx);
    *d_action = dx.bottomRows(action_dim_);
    return g;
  }

  void soft_update_target(double tau) { soft_update(target_, online_, tau); }

 private:
  static std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
  }
  Eigen::MatrixXd stack(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) const {
    if (obs.rows() != obs_dim_ || act.rows() != action_dim_ || obs.cols() != act.cols())
      throw ShapeError("critic: input shape mismatch");
    Eigen::MatrixXd x(obs_dim_ + action_dim_, obs.cols());
    x.topRows(obs_dim_) = obs;
    x.bottomRows(action_dim_) = act;
    return x;
  }
  Eigen::RowVectorXd apply_head(const Eigen::MatrixXd& z) const {
    if (head_ == CriticHead::Linear) return z.row(0);
    return z.colwise().squaredNorm();
  }

  int obs_dim_ = 0;
  int action_dim_ = 0;
  CriticHead head_ = CriticHead::SquaredNorm;
  Mlp online_;
  Mlp target_;
};

}  // namespace dlac
