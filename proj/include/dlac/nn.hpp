#pragma once
// Feed-forward networks with hand-written reverse mode, Adam, and soft target updates.

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dlac/errors.hpp"

namespace dlac {

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

/// Activations of one batched forward pass; column j belongs to sample j.
struct MlpCache {
  std::vector<Eigen::MatrixXd> activations;  // [0] = input, [L] = output
  bool valid() const { return !activations.empty(); }
};

/// Parameter-shaped gradient container.
struct MlpGrad {
  std::vector<DenseLayer> layers;

  MlpGrad& operator+=(const MlpGrad& o) {
    if (o.layers.size() != layers.size()) throw ShapeError("gradient shape mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].W += o.layers[k].W;
      layers[k].b += o.layers[k].b;
    }
    return *this;
  }
  double squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.W.squaredNorm() + l.b.squaredNorm();
    return s;
  }
};

/// Multilayer perceptron: tanh on hidden layers, identity on the output layer.
class Mlp {
 public:
  Mlp() = default;

  /// Glorot-uniform weights, zero biases.
  Mlp(std::vector<int> sizes, std::mt19937_64& rng) : sizes_(std::move(sizes)) {
    check_sizes();
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
      const int in = sizes_[k], out = sizes_[k + 1];
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> u(-limit, limit);
      DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
      for (int c = 0; c < in; ++c)
        for (int r = 0; r < out; ++r) l.W(r, c) = u(rng);
      layers_.push_back(std::move(l));
    }
  }

  static Mlp zeros(std::vector<int> sizes) {
    Mlp m;
    m.sizes_ = std::move(sizes);
    m.check_sizes();
    for (std::size_t k = 0; k + 1 < m.sizes_.size(); ++k)
      m.layers_.push_back(
          {Eigen::MatrixXd::Zero(m.sizes_[k + 1], m.sizes_[k]), Eigen::VectorXd::Zero(m.sizes_[k + 1])});
    return m;
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::MatrixXd z = layers_[k].W * a;
      z.colwise() += layers_[k].b;
      a = k + 1 < layers_.size() ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    return a;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache& cache) const {
    check_input(x);
    cache.activations.resize(layers_.size() + 1);
    cache.activations[0] = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Eigen::MatrixXd z = layers_[k].W * cache.activations[k];
      z.colwise() += layers_[k].b;
      if (k + 1 < layers_.size()) z = z.array().tanh();
      cache.activations[k + 1] = std::move(z);
    }
    return cache.activations.back();
  }

  /// Reverse pass for an upstream gradient dY (output x batch). Parameter gradients are summed
  /// over the batch; fold any 1/B into dY. Optionally returns the input gradient.
  MlpGrad backward(const MlpCache& cache, const Eigen::MatrixXd& dy,
                   Eigen::MatrixXd* dx = nullptr) const {
    if (!cache.valid() || cache.activations.size() != layers_.size() + 1)
      throw Error("backward called without a matching forward cache");
    if (dy.rows() != output_size() || dy.cols() != cache.activations.back().cols())
      throw ShapeError("backward: upstream gradient shape mismatch");
    MlpGrad g;
    g.layers.resize(layers_.size());
    Eigen::MatrixXd delta = dy;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      if (k + 1 < layers_.size())
        delta.array() *= 1.0 - cache.activations[k + 1].array().square();
      g.layers[k].W.noalias() = delta * cache.activations[k].transpose();
      g.layers[k].b = delta.rowwise().sum();
      if (k > 0 || dx) {
        Eigen::MatrixXd up = layers_[k].W.transpose() * delta;
        delta = std::move(up);
      }
    }
    if (dx) *dx = std::move(delta);
    return g;
  }

  MlpGrad zero_grad() const {
    MlpGrad g;
    for (const auto& l : layers_)
      g.layers.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()), Eigen::VectorXd::Zero(l.b.size())});
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.W.size() + l.b.size();
    return n;
  }

  /// Parameters as one vector (per layer: W column-major, then b).
  Eigen::VectorXd flat() const {
    Eigen::VectorXd out(parameter_count());
    std::size_t o = 0;
    for (const auto& l : layers_) {
      out.segment(o, l.W.size()) = Eigen::Map<const Eigen::VectorXd>(l.W.data(), l.W.size());
      o += l.W.size();
      out.segment(o, l.b.size()) = l.b;
      o += l.b.size();
    }
    return out;
  }
  void set_flat(const Eigen::VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count()) throw ShapeError("set_flat: size mismatch");
    std::size_t o = 0;
    for (auto& l : layers_) {
      Eigen::Map<Eigen::VectorXd>(l.W.data(), l.W.size()) = p.segment(o, l.W.size());
      o += l.W.size();
      l.b = p.segment(o, l.b.size());
      o += l.b.size();
    }
  }
  static Eigen::VectorXd flat(const MlpGrad& g) {
    std::size_t n = 0;
    for (const auto& l : g.layers) n += l.W.size() + l.b.size();
    Eigen::VectorXd out(n);
    std::size_t o = 0;
    for (const auto& l : g.layers) {
      out.segment(o, l.W.size()) = Eigen::Map<const Eigen::VectorXd>(l.W.data(), l.W.size());
      o += l.W.size();
      out.segment(o, l.b.size()) = l.b;
      o += l.b.size();
    }
    return out;
  }

  bool same_shape(const Mlp& o) const { return sizes_ == o.sizes_; }
  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.W.allFinite() || !l.b.allFinite()) return false;
    return true;
  }
  bool operator==(const Mlp& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k)
      if (layers_[k].W != o.layers_[k].W || layers_[k].b != o.layers_[k].b) return false;
    return true;
  }

 private:
  void check_sizes() const {
    if (sizes_.size() < 2) throw ShapeError("an MLP needs at least an input and an output size");
    for (int s : sizes_)
      if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  void check_input(const Eigen::MatrixXd& x) const {
    if (x.rows() != input_size())
      throw ShapeError("forward: expected input size " + std::to_string(input_size()) + ", got " +
                       std::to_string(x.rows()));
  }

  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

/// target <- (1 - tau) * target + tau * online
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!target.same_shape(online)) throw ShapeError("soft_update: shape mismatch");
  for (std::size_t k = 0; k < target.layers().size(); ++k) {
    auto& t = target.layers()[k];
    const auto& o = online.layers()[k];
    t.W = (1.0 - tau) * t.W + tau * o.W;
    t.b = (1.0 - tau) * t.b + tau * o.b;
  }
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent over the parameters of one network.
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& like, AdamConfig cfg) : cfg_(cfg), m_(like.zero_grad()), v_(like.zero_grad()) {}

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(Mlp& net, const MlpGrad& g) {
    if (g.layers.size() != net.layers().size()) throw ShapeError("Adam: gradient shape mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < g.layers.size(); ++k) {
      update(net.layers()[k].W, g.layers[k].W, m_.layers[k].W, v_.layers[k].W, c1, c2);
      update(net.layers()[k].b, g.layers[k].b, m_.layers[k].b, v_.layers[k].b, c1, c2);
    }
  }

  MlpGrad& first_moment() { return m_; }
  MlpGrad& second_moment() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  template <typename M>
  void update(M& p, const M& g, M& m, M& v, double c1, double c2) const {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }

  AdamConfig cfg_;
  MlpGrad m_, v_;
  long t_ = 0;
};

/// Adam for a single scalar parameter.
class ScalarAdam {
 public:
  ScalarAdam() = default;
  explicit ScalarAdam(AdamConfig cfg) : cfg_(cfg) {}

  double step(double x, double g) {
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g * g;
    const double mh = m_ / (1.0 - std::pow(cfg_.beta1, double(t_)));
    const double vh = v_ / (1.0 - std::pow(cfg_.beta2, double(t_)));
    return x - cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.epsilon);
  }

  double m() const { return m_; }
  double v() const { return v_; }
  long steps() const { return t_; }
  void restore(double m, double v, long t) { m_ = m, v_ = v, t_ = t; }

 private:
  AdamConfig cfg_;
  double m_ = 0.0, v_ = 0.0;
  long t_ = 0;
};

}  // namespace dlac
