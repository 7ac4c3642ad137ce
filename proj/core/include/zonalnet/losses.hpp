#pragma once

#include <span>

#include "zonalnet/image.hpp"
#include "zonalnet/tensor.hpp"

namespace zonalnet {

// Multi-label binary cross entropy over softmax probabilities, averaged over
// classes, pixels and batch:
//   L = mean_pixels (1/C) * sum_i [ -y_i log p_i - (1 - y_i) log(1 - p_i) ]
// probs is Nx3xSxS (softmax output), targets holds N masks of matching size.
// Probabilities are clamped to [clamp_eps, 1 - clamp_eps] before the logs;
// clamped positions contribute zero gradient.
template <typename T>
TensorT<T> cross_entropy_loss(const TensorT<T>& probs, std::span<const LabelMask> targets,
                              double clamp_eps = 1e-7);

extern template TensorT<float> cross_entropy_loss<float>(const TensorT<float>&,
                                                         std::span<const LabelMask>, double);
extern template TensorT<double> cross_entropy_loss<double>(const TensorT<double>&,
                                                           std::span<const LabelMask>, double);

}  // namespace zonalnet
