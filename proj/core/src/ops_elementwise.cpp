#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "detail/op_builder.hpp"
#include "zonalnet/ops.hpp"

namespace zonalnet {

namespace {

enum class BroadcastKind { none, b_over_a, a_over_b };

// Either identical shapes, or one side is NxCx1x1 matched against NxCxHxW.
template <typename T>
BroadcastKind broadcast_kind(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() == b.shape()) return BroadcastKind::none;
  auto channel_vector = [](const Shape& big, const Shape& small) {
    return big.size() == 4 && small.size() == 4 && small[0] == big[0] && small[1] == big[1] &&
           small[2] == 1 && small[3] == 1;
  };
  if (channel_vector(a.shape(), b.shape())) return BroadcastKind::b_over_a;
  if (channel_vector(b.shape(), a.shape())) return BroadcastKind::a_over_b;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                              " and " + shape_str(b.shape()));
}

}  // namespace

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
  const auto& x_node = detail::node_of(input, "relu");
  std::vector<T> out(x_node->values.size());
  const T* x = x_node->values.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  TensorT<T> result = detail::make_op_output<T>("relu", input.shape(), std::move(out));
  if (detail::tape_needed<T>({x_node.get()})) {
    auto xp = x_node;
    detail::attach_tape<T>(result, "relu", {x_node}, [xp](std::span<const T> gout) {
      std::vector<T> dx(xp->values.size());
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx[i] = xp->values[i] > T(0) ? gout[i] : T(0);
      xp->accumulate_grad(dx);
    });
  }
  return result;
}

template <typename T>
static TensorT<T> binary_op(const TensorT<T>& a, const TensorT<T>& b, bool is_mul) {
  const char* name = is_mul ? "mul" : "add";
  const auto& a_node = detail::node_of(a, name);
  const auto& b_node = detail::node_of(b, name);
  const BroadcastKind kind = broadcast_kind(a, b, name);

  const TensorT<T>& big = kind == BroadcastKind::a_over_b ? b : a;
  const TensorT<T>& small = kind == BroadcastKind::a_over_b ? a : b;
  const T* bv = big.values().data();
  std::vector<T> out(static_cast<std::size_t>(big.numel()));

  if (kind == BroadcastKind::none) {
    const T* av = a_node->values.data();
    const T* bv2 = b_node->values.data();
    if (is_mul)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv2[i];
    else
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv2[i];
  } else {
    const T* sv = small.values().data();
    const std::int64_t nc = big.dim(0) * big.dim(1);
    const std::int64_t hw = big.dim(2) * big.dim(3);
    for (std::int64_t p = 0; p < nc; ++p) {
      const T s = sv[p];
      const T* src = bv + p * hw;
      T* dst = out.data() + p * hw;
      if (is_mul)
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
      else
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + s;
    }
  }

  TensorT<T> result = detail::make_op_output<T>(name, big.shape(), std::move(out));
  if (detail::tape_needed<T>({a_node.get(), b_node.get()})) {
    auto ap = a_node;
    auto bp = b_node;
    detail::attach_tape<T>(result, name, {a_node, b_node},
                           [ap, bp, kind, is_mul](std::span<const T> gout) {
      auto big_p = kind == BroadcastKind::a_over_b ? bp : ap;
      auto small_p = kind == BroadcastKind::a_over_b ? ap : bp;
      auto grad_for = [&](const std::shared_ptr<detail::TensorNodeT<T>>& self,
                          const std::shared_ptr<detail::TensorNodeT<T>>& other) {
        // d(a+b) = g; d(a*b)/da = g*b, reduced over HxW for the broadcast side
        std::vector<T> d(self->values.size());
        const bool self_small = kind != BroadcastKind::none && self == small_p;
        if (kind == BroadcastKind::none) {
          for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = is_mul ? gout[i] * other->values[i] : gout[i];
        } else {
          const std::int64_t nc = static_cast<std::int64_t>(small_p->values.size());
          const std::int64_t hw = static_cast<std::int64_t>(big_p->values.size()) / nc;
          if (self_small) {
            for (std::int64_t p = 0; p < nc; ++p) {
              double s = 0.0;
              for (std::int64_t i = 0; i < hw; ++i) {
                const std::size_t k = static_cast<std::size_t>(p * hw + i);
                s += static_cast<double>(gout[k]) *
                     (is_mul ? static_cast<double>(big_p->values[k]) : 1.0);
              }
              d[static_cast<std::size_t>(p)] = static_cast<T>(s);
            }
          } else {
            for (std::int64_t p = 0; p < nc; ++p) {
              const T s = small_p->values[static_cast<std::size_t>(p)];
              for (std::int64_t i = 0; i < hw; ++i) {
                const std::size_t k = static_cast<std::size_t>(p * hw + i);
                d[k] = is_mul ? gout[k] * s : gout[k];
              }
            }
          }
        }
        self->accumulate_grad(d);
      };
      if (ap->requires_grad) grad_for(ap, bp);
      if (bp->requires_grad) grad_for(bp, ap);
    });
  }
  return result;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op(a, b, false);
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op(a, b, true);
}

template <typename T>
TensorT<T> softmax_channel(const TensorT<T>& input) {
  const auto& x_node = detail::node_of(input, "softmax_channel");
  if (input.shape().size() != 4)
    throw std::invalid_argument("softmax_channel: input must be NxCxHxW, got " +
                                shape_str(input.shape()));
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (c < 1) throw std::invalid_argument("softmax_channel: need at least one channel");
  const std::int64_t hw = h * w;
  const T* x = x_node->values.data();
  std::vector<T> out(x_node->values.size());
  for (std::int64_t b = 0; b < n; ++b) {
    const std::int64_t base = b * c * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      T mx = x[base + i];
      for (std::int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, x[base + ch * hw + i]);
      double denom = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double e = std::exp(static_cast<double>(x[base + ch * hw + i] - mx));
        out[static_cast<std::size_t>(base + ch * hw + i)] = static_cast<T>(e);
        denom += e;
      }
      for (std::int64_t ch = 0; ch < c; ++ch) {
        auto& v = out[static_cast<std::size_t>(base + ch * hw + i)];
        v = static_cast<T>(static_cast<double>(v) / denom);
      }
    }
  }

  TensorT<T> result = detail::make_op_output<T>("softmax_channel", input.shape(), std::move(out));
  if (detail::tape_needed<T>({x_node.get()})) {
    auto xp = x_node;
    // Save probabilities by value: the closure must not retain the output
    // node, or the tape would own itself.
    std::vector<T> probs(result.values().begin(), result.values().end());
    detail::attach_tape<T>(result, "softmax_channel", {x_node},
                           [xp, probs = std::move(probs), n, c, hw](std::span<const T> gout) {
      std::vector<T> dx(xp->values.size());
      for (std::int64_t b = 0; b < n; ++b) {
        const std::int64_t base = b * c * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          double dot = 0.0;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::size_t k = static_cast<std::size_t>(base + ch * hw + i);
            dot += static_cast<double>(gout[k]) * static_cast<double>(probs[k]);
          }
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::size_t k = static_cast<std::size_t>(base + ch * hw + i);
            dx[k] = static_cast<T>(static_cast<double>(probs[k]) *
                                   (static_cast<double>(gout[k]) - dot));
          }
        }
      }
      xp->accumulate_grad(dx);
    });
  }
  return result;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const auto& a_node = detail::node_of(a, "concat_channels");
  const auto& b_node = detail::node_of(b, "concat_channels");
  if (a.shape().size() != 4 || b.shape().size() != 4)
    throw std::invalid_argument("concat_channels: inputs must be NxCxHxW");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: non-channel dims differ, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::int64_t hw = a.dim(2) * a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * hw));
  const T* av = a_node->values.data();
  const T* bv = b_node->values.data();
  for (std::int64_t s = 0; s < n; ++s) {
    std::copy(av + s * ca * hw, av + (s + 1) * ca * hw, out.data() + s * (ca + cb) * hw);
    std::copy(bv + s * cb * hw, bv + (s + 1) * cb * hw,
              out.data() + s * (ca + cb) * hw + ca * hw);
  }
  TensorT<T> result = detail::make_op_output<T>("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)},
                                                std::move(out));
  if (detail::tape_needed<T>({a_node.get(), b_node.get()})) {
    auto ap = a_node;
    auto bp = b_node;
    detail::attach_tape<T>(result, "concat_channels", {a_node, b_node},
                           [ap, bp, n, ca, cb, hw](std::span<const T> gout) {
      if (ap->requires_grad) {
        std::vector<T> da(ap->values.size());
        for (std::int64_t s = 0; s < n; ++s)
          std::copy(gout.data() + s * (ca + cb) * hw, gout.data() + s * (ca + cb) * hw + ca * hw,
                    da.data() + s * ca * hw);
        ap->accumulate_grad(da);
      }
      if (bp->requires_grad) {
        std::vector<T> db(bp->values.size());
        for (std::int64_t s = 0; s < n; ++s)
          std::copy(gout.data() + s * (ca + cb) * hw + ca * hw,
                    gout.data() + (s + 1) * (ca + cb) * hw, db.data() + s * cb * hw);
        bp->accumulate_grad(db);
      }
    });
  }
  return result;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& input) {
  const auto& x_node = detail::node_of(input, "mean_all");
  if (input.numel() < 1) throw std::invalid_argument("mean_all: empty tensor");
  double sum = 0.0;
  for (const T v : x_node->values) sum += static_cast<double>(v);
  const double m = sum / static_cast<double>(input.numel());
  TensorT<T> result = detail::make_op_output<T>("mean_all", {1}, {static_cast<T>(m)});
  if (detail::tape_needed<T>({x_node.get()})) {
    auto xp = x_node;
    detail::attach_tape<T>(result, "mean_all", {x_node}, [xp](std::span<const T> gout) {
      const T g = static_cast<T>(static_cast<double>(gout[0]) /
                                 static_cast<double>(xp->values.size()));
      std::vector<T> dx(xp->values.size(), g);
      xp->accumulate_grad(dx);
    });
  }
  return result;
}

#define ZONALNET_INSTANTIATE(T)                                                  \
  template TensorT<T> relu<T>(const TensorT<T>&);                                \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);              \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);              \
  template TensorT<T> softmax_channel<T>(const TensorT<T>&);                     \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);  \
  template TensorT<T> mean_all<T>(const TensorT<T>&);

ZONALNET_INSTANTIATE(float)
ZONALNET_INSTANTIATE(double)
#undef ZONALNET_INSTANTIATE

}  // namespace zonalnet
