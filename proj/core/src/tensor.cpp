#include "zonalnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace zonalnet {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("shape: negative dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }
void set_grad_enabled(bool enabled) noexcept { g_grad_enabled = enabled; }

template <typename T>
std::vector<T>& TensorNodeT<T>::ensure_grad() {
  if (grad.empty() && !values.empty()) grad.assign(values.size(), T(0));
  return grad;
}

template <typename T>
void TensorNodeT<T>::accumulate_grad(std::span<const T> g) {
  if (static_cast<std::int64_t>(g.size()) != numel())
    throw std::invalid_argument("accumulate_grad: size mismatch");
  auto& dst = ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template struct TensorNodeT<float>;
template struct TensorNodeT<double>;

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(prev_); }

namespace {

template <typename T>
std::shared_ptr<detail::TensorNodeT<T>> make_leaf(Shape shape, std::vector<T> values,
                                                  bool requires_grad) {
  if (shape.empty())
    throw std::invalid_argument("tensor: shape needs at least one dimension");
  for (const std::int64_t d : shape)
    if (d < 1)
      throw std::invalid_argument("tensor: every dimension must be positive, got " +
                                  shape_str(shape));
  const std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  for (const T v : values)
    if (!std::isfinite(static_cast<double>(v)))
      throw std::invalid_argument("tensor: non-finite value in leaf data");
  auto node = std::make_shared<detail::TensorNodeT<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad && detail::grad_enabled();
  return node;
}

}  // namespace

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
  const std::int64_t n = shape_numel(shape);
  return TensorT(make_leaf<T>(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)),
                              requires_grad));
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value, bool requires_grad) {
  const std::int64_t n = shape_numel(shape);
  return TensorT(make_leaf<T>(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value),
                              requires_grad));
}

template <typename T>
TensorT<T> TensorT<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  return TensorT(make_leaf<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
const Shape& TensorT<T>::shape() const {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  return node_->shape;
}

template <typename T>
std::int64_t TensorT<T>::numel() const {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  return node_->numel();
}

template <typename T>
std::int64_t TensorT<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
  return s[axis];
}

template <typename T>
bool TensorT<T>::requires_grad() const {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  return node_->requires_grad;
}

template <typename T>
std::span<const T> TensorT<T>::values() const {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  return node_->values;
}

template <typename T>
std::span<T> TensorT<T>::leaf_values() {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  if (node_->producer)
    throw std::invalid_argument("tensor: op outputs are immutable, only leaves may be written");
  return node_->values;
}

template <typename T>
std::span<const T> TensorT<T>::grad() const {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  if (!node_->requires_grad)
    throw std::invalid_argument("tensor: grad requested on a tensor without requires_grad");
  return node_->ensure_grad();
}

template <typename T>
void TensorT<T>::zero_grad() {
  if (!node_) throw std::invalid_argument("tensor: undefined handle");
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T TensorT<T>::item() const {
  if (numel() != 1)
    throw std::invalid_argument("tensor: item() needs a single-element tensor, got " +
                                shape_str(shape()));
  return node_->values[0];
}

template <typename T>
void TensorT<T>::backward() const {
  zonalnet::backward(*this);
}

template <typename T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad)
    throw std::logic_error("backward: no gradients were recorded for this graph");

  // Post-order DFS over tensor nodes gives reverse topological order; each
  // producer fires exactly once, after every consumer has deposited its
  // contribution to the node's gradient.
  using Node = detail::TensorNodeT<T>;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    if (node->producer && next_input < node->producer->inputs.size()) {
      Node* child = node->producer->inputs[next_input].get();
      ++next_input;
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Leaf gradients accumulate across calls (until zero_grad); op outputs are
  // scratch and must start clean or a second backward re-propagates stale sums.
  for (Node* node : order)
    if (node->producer) std::fill(node->grad.begin(), node->grad.end(), T(0));

  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->producer) continue;
    node->ensure_grad();
    node->producer->backward(node->grad);
  }
}

template class TensorT<float>;
template class TensorT<double>;
template void backward<float>(const TensorT<float>&);
template void backward<double>(const TensorT<double>&);

}  // namespace zonalnet
