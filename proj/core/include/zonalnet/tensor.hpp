#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace zonalnet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TapeNodeT;

// Shared storage behind a tensor handle. Values are immutable once produced by
// an op; only leaves may be mutated in place (optimizer updates). Gradient
// buffers are allocated lazily on first accumulation so idle parameters cost
// nothing.
template <typename T>
struct TensorNodeT {
  Shape shape;
  std::vector<T> values;
  bool requires_grad = false;
  std::vector<T> grad;
  std::shared_ptr<TapeNodeT<T>> producer;

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  std::vector<T>& ensure_grad();
  void accumulate_grad(std::span<const T> g);
};

// One recorded op: the inputs it consumed and a closure that routes the
// output gradient back into them.
template <typename T>
struct TapeNodeT {
  const char* op = "";
  std::vector<std::shared_ptr<TensorNodeT<T>>> inputs;
  std::function<void(std::span<const T> out_grad)> backward;
};

bool grad_enabled() noexcept;
void set_grad_enabled(bool enabled) noexcept;

}  // namespace detail

// Scoped guard that disables tape recording (inference-mode forward passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major N-d tensor with reverse-mode autodiff. Handles share the
// underlying node, so copies are cheap and alias.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<detail::TensorNodeT<T>> node) : node_(std::move(node)) {}

  static TensorT zeros(Shape shape, bool requires_grad = false);
  static TensorT full(Shape shape, T value, bool requires_grad = false);
  static TensorT from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const;
  std::int64_t dim(std::size_t axis) const;
  bool requires_grad() const;

  std::span<const T> values() const;
  // Mutable access to a leaf's storage (optimizer updates). Throws for
  // op-produced tensors, whose values are frozen.
  std::span<T> leaf_values();
  std::span<const T> grad() const;
  void zero_grad();
  T item() const;

  // Runs reverse-mode accumulation from this scalar. Repeated calls keep
  // accumulating until gradients are cleared.
  void backward() const;

  const std::shared_ptr<detail::TensorNodeT<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNodeT<T>> node_;
};

template <typename T>
void backward(const TensorT<T>& loss);

using Tensor = TensorT<float>;

extern template struct detail::TensorNodeT<float>;
extern template struct detail::TensorNodeT<double>;
extern template class TensorT<float>;
extern template class TensorT<double>;
extern template void backward<float>(const TensorT<float>&);
extern template void backward<double>(const TensorT<double>&);

}  // namespace zonalnet
