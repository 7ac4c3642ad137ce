#pragma once

#include <span>
#include <vector>

#include "zonalnet/model.hpp"

namespace zonalnet {

// One SGD update with momentum and decoupled-from-nothing classic L2 decay:
//   g' = grad + weight_decay * param
//   v  = momentum * v + g'
//   param -= lr * v
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              double lr, double momentum, double weight_decay);

class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay);

  void step(std::span<const NamedTensor> params);
  static void zero_grad(std::span<const NamedTensor> params);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);

  // Velocity buffers aligned with the parameter order, allocated lazily on
  // the first step. Exposed for checkpointing.
  std::vector<std::vector<float>>& velocities() { return velocities_; }
  const std::vector<std::vector<float>>& velocities() const { return velocities_; }

 private:
  double lr_, momentum_, weight_decay_;
  std::vector<std::vector<float>> velocities_;
};

}  // namespace zonalnet
