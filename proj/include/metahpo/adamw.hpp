#pragma once

#include <cstddef>
#include <vector>

#include "metahpo/layers.hpp"

namespace metahpo {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// AdamW with weight decay decoupled from the moment-based step:
//   w <- w - lr * wd * w
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig config);

  void step();
  void zero_grad();

  std::size_t steps() const noexcept { return step_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  ParamList params_;
  AdamWConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  std::size_t step_ = 0;
};

}  // namespace metahpo
