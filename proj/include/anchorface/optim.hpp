#pragma once

#include <cmath>
#include <vector>

#include "anchorface/error.hpp"
#include "anchorface/net.hpp"

namespace anchorface {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled: p -= lr * wd * p
};

/// Adam with decoupled weight decay. Moments are kept in double regardless
/// of the parameter scalar type.
template <typename T>
class AdamW {
 public:
  AdamW(const ParameterSet<T>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& t : params.tensors) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }

  void step(ParameterSet<T>& params, const ParameterSet<T>& grads, double lr) {
    if (grads.tensors.size() != params.tensors.size() || params.tensors.size() != m_.size()) {
      detail::fail(ErrorKind::ShapeMismatch, "optimizer state does not match parameters");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      auto& p = params.tensors[k].values;
      const auto& g = grads.tensors[k].values;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double pi = static_cast<double>(p[i]);
        pi -= lr * cfg_.weight_decay * pi;
        pi -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        p[i] = static_cast<T>(pi);
      }
    }
  }

  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Learning rate after dividing by `factor` at each boundary epoch, where
/// boundaries are fractions of the total epoch count.
inline double step_lr(double base, int epoch, int total_epochs, const std::vector<double>& fractions, double factor = 0.1) {
  double lr = base;
  for (double f : fractions) {
    const int boundary = static_cast<int>(std::lround(f * total_epochs));
    if (epoch >= boundary) lr *= factor;
  }
  return lr;
}

}  // namespace anchorface
