#include "metahpo/adamw.hpp"

#include <cmath>

namespace metahpo {

AdamW::AdamW(ParamList params, AdamWConfig config)
    : params_(trainable(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const Param* p : params_) {
    first_moment_.emplace_back(p->value.rows(), p->value.cols());
    second_moment_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    Matrix& m = first_moment_[k];
    Matrix& v = second_moment_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] = p.value[i] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void AdamW::zero_grad() { zero_grads(params_); }

}  // namespace metahpo
