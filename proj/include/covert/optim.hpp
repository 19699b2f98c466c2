#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "covert/layers.hpp"

namespace covert {

/// Stochastic gradient descent with heavy-ball momentum.
class Sgd {
 public:
  Sgd(ParamRefs params, double lr, double momentum = 0.9,
      double weight_decay = 0.0);

  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  ParamRefs params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_, weight_decay_;
};

/// Adam moments for one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Call once per optimisation step before the update() calls of that step.
  void tick() { ++t_; }

  template <typename T, typename G>
  void update(std::span<T> values, std::span<const G> grads,
              AdamState& state) const {
    if (state.m.size() != values.size()) {
      state.m.assign(values.size(), 0.0);
      state.v.assign(values.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = static_cast<double>(grads[i]);
      state.m[i] = beta1_ * state.m[i] + (1 - beta1_) * g;
      state.v[i] = beta2_ * state.v[i] + (1 - beta2_) * g * g;
      const double mhat = state.m[i] / bc1;
      const double vhat = state.v[i] / bc2;
      values[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Adam over a registry of tensor parameters.
class AdamParams {
 public:
  AdamParams(ParamRefs params, double lr) : params_(std::move(params)), adam_(lr) {
    states_.resize(params_.size());
  }
  void step() {
    adam_.tick();
    for (std::size_t i = 0; i < params_.size(); ++i)
      adam_.update(params_[i]->value.span(),
                   std::span<const Real>(params_[i]->grad.span()), states_[i]);
  }

 private:
  ParamRefs params_;
  Adam adam_;
  std::vector<AdamState> states_;
};

}  // namespace covert
