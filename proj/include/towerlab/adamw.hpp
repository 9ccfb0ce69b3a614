#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace towerlab {

/// Adam with decoupled weight decay. The decay term is applied to the
/// parameters at the update step and never enters the moment estimates.
class AdamW {
 public:
  struct Params {
    double learning_rate = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  AdamW(std::size_t parameter_count, Params params)
      : params_(params), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

  void step(std::span<double> parameters, std::span<const double> gradients) {
    if (parameters.size() != m_.size() || gradients.size() != m_.size()) {
      throw std::invalid_argument("AdamW: parameter/gradient size mismatch");
    }
    ++t_;
    const double b1c = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double b2c = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    const double lr = params_.learning_rate;
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const double g = gradients[i];
      m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * g;
      v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * g * g;
      const double mhat = m_[i] / b1c;
      const double vhat = v_[i] / b2c;
      parameters[i] -= lr * (mhat / (std::sqrt(vhat) + params_.epsilon) + params_.weight_decay * parameters[i]);
    }
  }

  std::size_t steps() const noexcept { return t_; }
  const Params& params() const noexcept { return params_; }

 private:
  Params params_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace towerlab
