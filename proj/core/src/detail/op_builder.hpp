#pragma once

#include <cmath>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>

#include "zonalnet/tensor.hpp"

namespace zonalnet::detail {

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  for (const T v : values)
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
}

template <typename T>
const std::shared_ptr<TensorNodeT<T>>& node_of(const TensorT<T>& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor argument");
  return t.node();
}

// True when the current op must record a tape node (grad mode on and at least
// one input tracked). Ops skip saving backward state otherwise.
template <typename T>
bool tape_needed(std::initializer_list<const TensorNodeT<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* n : inputs)
    if (n != nullptr && n->requires_grad) return true;
  return false;
}

template <typename T>
TensorT<T> make_op_output(const char* op, Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument(std::string(op) + ": output buffer does not fill " +
                                shape_str(shape));
  check_finite<T>(values, op);
  auto node = std::make_shared<TensorNodeT<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  return TensorT<T>(std::move(node));
}

template <typename T>
void attach_tape(const TensorT<T>& out, const char* op,
                 std::vector<std::shared_ptr<TensorNodeT<T>>> inputs,
                 std::function<void(std::span<const T>)> backward) {
  auto tape = std::make_shared<TapeNodeT<T>>();
  tape->op = op;
  tape->inputs = std::move(inputs);
  tape->backward = std::move(backward);
  out.node()->producer = std::move(tape);
  out.node()->requires_grad = true;
}

}  // namespace zonalnet::detail
