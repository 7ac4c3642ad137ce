#include "zonalnet/optimizer.hpp"

#include <stdexcept>
#include <string>

namespace zonalnet {

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              double lr, double momentum, double weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw std::invalid_argument("sgd_step: param/grad/velocity sizes differ");
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("sgd_step: momentum outside [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("sgd_step: negative weight decay");
  const float m = static_cast<float>(momentum);
  const float wd = static_cast<float>(weight_decay);
  const float step = static_cast<float>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i] + wd * param[i];
    velocity[i] = m * velocity[i] + g;
    param[i] -= step * velocity[i];
  }
}

SgdOptimizer::SgdOptimizer(double lr, double momentum, double weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("sgd: momentum outside [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("sgd: negative weight decay");
}

void SgdOptimizer::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
  lr_ = lr;
}

void SgdOptimizer::step(std::span<const NamedTensor> params) {
  if (velocities_.empty()) {
    velocities_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      velocities_[i].assign(static_cast<std::size_t>(params[i].tensor.numel()), 0.0f);
  }
  if (velocities_.size() != params.size())
    throw std::invalid_argument("sgd: optimizer state built for " +
                                std::to_string(velocities_.size()) + " params, got " +
                                std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    sgd_step(t.leaf_values(), t.grad(), velocities_[i], lr_, momentum_, weight_decay_);
  }
}

void SgdOptimizer::zero_grad(std::span<const NamedTensor> params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace zonalnet
