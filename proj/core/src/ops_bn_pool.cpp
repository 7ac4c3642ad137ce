#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "detail/op_builder.hpp"
#include "zonalnet/ops.hpp"

namespace zonalnet {

namespace {

template <typename T>
void check_bn_args(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                   const BatchNormStateT<T>& state, double momentum, double eps) {
  if (input.shape().size() != 4)
    throw std::invalid_argument("batch_norm2d: input must be NxCxHxW, got " +
                                shape_str(input.shape()));
  const std::int64_t c = input.dim(1);
  if (gamma.shape().size() != 1 || gamma.dim(0) != c || beta.shape().size() != 1 ||
      beta.dim(0) != c)
    throw std::invalid_argument("batch_norm2d: gamma/beta must have shape [" + std::to_string(c) +
                                "]");
  if (!(momentum > 0.0 && momentum <= 1.0))
    throw std::invalid_argument("batch_norm2d: momentum must be in (0, 1]");
  if (!(eps > 0.0)) throw std::invalid_argument("batch_norm2d: eps must be positive");
  if (!state.running_mean.empty() &&
      state.running_mean.size() != static_cast<std::size_t>(c))
    throw std::invalid_argument("batch_norm2d: running statistics sized for " +
                                std::to_string(state.running_mean.size()) + " channels, input has " +
                                std::to_string(c));
}

}  // namespace

template <typename T>
TensorT<T> batch_norm2d(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                        BatchNormStateT<T>& state, BnMode mode, double momentum, double eps) {
  const auto& x_node = detail::node_of(input, "batch_norm2d");
  const auto& g_node = detail::node_of(gamma, "batch_norm2d");
  const auto& b_node = detail::node_of(beta, "batch_norm2d");
  check_bn_args(input, gamma, beta, state, momentum, eps);

  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t hw = h * w;
  const std::int64_t count = n * hw;
  if (state.running_mean.empty()) {
    state.running_mean.assign(static_cast<std::size_t>(c), T(0));
    state.running_var.assign(static_cast<std::size_t>(c), T(1));
  }

  std::vector<T> mean(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
  if (mode == BnMode::train) {
    if (count < 2)
      throw std::invalid_argument("batch_norm2d: train mode needs more than one value per channel");
    const T* x = x_node->values.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
      }
      const double mu = sum / static_cast<double>(count);
      double ssq = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double dlt = static_cast<double>(p[i]) - mu;
          ssq += dlt * dlt;
        }
      }
      const double var = ssq / static_cast<double>(count);  // biased, used to normalize
      mean[static_cast<std::size_t>(ch)] = static_cast<T>(mu);
      invstd[static_cast<std::size_t>(ch)] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double var_unbiased = ssq / static_cast<double>(count - 1);
      auto& rm = state.running_mean[static_cast<std::size_t>(ch)];
      auto& rv = state.running_var[static_cast<std::size_t>(ch)];
      rm = static_cast<T>((1.0 - momentum) * static_cast<double>(rm) + momentum * mu);
      rv = static_cast<T>((1.0 - momentum) * static_cast<double>(rv) + momentum * var_unbiased);
    }
    state.initialized = true;
  } else {
    if (!state.initialized)
      throw std::invalid_argument(
          "batch_norm2d: eval mode before running statistics were initialized");
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[static_cast<std::size_t>(ch)] = state.running_mean[static_cast<std::size_t>(ch)];
      invstd[static_cast<std::size_t>(ch)] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(state.running_var[static_cast<std::size_t>(ch)]) +
                          eps));
    }
  }

  const T* x = x_node->values.data();
  const T* gm = g_node->values.data();
  const T* bt = b_node->values.data();
  std::vector<T> xhat(x_node->values.size());
  std::vector<T> out(x_node->values.size());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (b * c + ch) * hw;
      const T mu = mean[static_cast<std::size_t>(ch)];
      const T is = invstd[static_cast<std::size_t>(ch)];
      const T g = gm[ch], bb = bt[ch];
      for (std::int64_t i = 0; i < hw; ++i) {
        const T xh = (x[base + i] - mu) * is;
        xhat[static_cast<std::size_t>(base + i)] = xh;
        out[static_cast<std::size_t>(base + i)] = g * xh + bb;
      }
    }
  }

  TensorT<T> result = detail::make_op_output<T>("batch_norm2d", input.shape(), std::move(out));

  if (detail::tape_needed<T>({x_node.get(), g_node.get(), b_node.get()})) {
    auto xp = x_node;
    auto gp = g_node;
    auto bp = b_node;
    const bool train = mode == BnMode::train;
    detail::attach_tape<T>(
        result, "batch_norm2d", {x_node, g_node, b_node},
        [xp, gp, bp, xhat = std::move(xhat), invstd = std::move(invstd), n, c, hw,
         train](std::span<const T> gout) {
          std::vector<T> dgamma(static_cast<std::size_t>(c), T(0));
          std::vector<T> dbeta(static_cast<std::size_t>(c), T(0));
          std::vector<T> dx(xp->requires_grad ? xhat.size() : 0);
          const double m = static_cast<double>(n * hw);
          for (std::int64_t ch = 0; ch < c; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
              const std::int64_t base = (b * c + ch) * hw;
              for (std::int64_t i = 0; i < hw; ++i) {
                const double dy = static_cast<double>(gout[static_cast<std::size_t>(base + i)]);
                sum_dy += dy;
                sum_dy_xhat += dy * static_cast<double>(xhat[static_cast<std::size_t>(base + i)]);
              }
            }
            dgamma[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy_xhat);
            dbeta[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy);
            if (xp->requires_grad) {
              const double g_is = static_cast<double>(gp->values[static_cast<std::size_t>(ch)]) *
                                  static_cast<double>(invstd[static_cast<std::size_t>(ch)]);
              const double mean_dy = sum_dy / m;
              const double mean_dy_xhat = sum_dy_xhat / m;
              for (std::int64_t b = 0; b < n; ++b) {
                const std::int64_t base = (b * c + ch) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                  const std::size_t k = static_cast<std::size_t>(base + i);
                  const double dy = static_cast<double>(gout[k]);
                  // Batch statistics depend on x in train mode only.
                  const double v = train ? g_is * (dy - mean_dy -
                                                   static_cast<double>(xhat[k]) * mean_dy_xhat)
                                         : g_is * dy;
                  dx[k] = static_cast<T>(v);
                }
              }
            }
          }
          if (gp->requires_grad) gp->accumulate_grad(dgamma);
          if (bp->requires_grad) bp->accumulate_grad(dbeta);
          if (xp->requires_grad) xp->accumulate_grad(dx);
        });
  }
  return result;
}

template <typename T>
TensorT<T> pool2d(const TensorT<T>& input, PoolKind kind, std::int64_t kernel,
                  std::int64_t stride) {
  const auto& x_node = detail::node_of(input, "pool2d");
  if (input.shape().size() != 4)
    throw std::invalid_argument("pool2d: input must be NxCxHxW, got " + shape_str(input.shape()));
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const T* x = x_node->values.data();

  if (kind == PoolKind::global_avg) {
    const std::int64_t hw = h * w;
    if (hw < 1) throw std::invalid_argument("pool2d: empty spatial extent");
    std::vector<T> out(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n * c; ++i) {
      const T* p = x + i * hw;
      double sum = 0.0;
      for (std::int64_t k = 0; k < hw; ++k) sum += static_cast<double>(p[k]);
      out[static_cast<std::size_t>(i)] = static_cast<T>(sum / static_cast<double>(hw));
    }
    TensorT<T> result = detail::make_op_output<T>("pool2d", {n, c, 1, 1}, std::move(out));
    if (detail::tape_needed<T>({x_node.get()})) {
      auto xp = x_node;
      detail::attach_tape<T>(result, "pool2d", {x_node}, [xp, n, c, hw](std::span<const T> gout) {
        std::vector<T> dx(xp->values.size());
        for (std::int64_t i = 0; i < n * c; ++i) {
          const T g = static_cast<T>(static_cast<double>(gout[static_cast<std::size_t>(i)]) /
                                     static_cast<double>(hw));
          T* p = dx.data() + i * hw;
          for (std::int64_t k = 0; k < hw; ++k) p[k] += g;
        }
        xp->accumulate_grad(dx);
      });
    }
    return result;
  }

  if (kernel < 1 || stride < 1)
    throw std::invalid_argument("pool2d: kernel and stride must be at least 1");
  if (kernel > h || kernel > w)
    throw std::invalid_argument("pool2d: kernel " + std::to_string(kernel) +
                                " exceeds input extent " + std::to_string(std::min(h, w)));
  const std::int64_t ho = (h - kernel) / stride + 1;
  const std::int64_t wo = (w - kernel) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  std::size_t o = 0;
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* plane = x + i * h * w;
    for (std::int64_t oh = 0; oh < ho; ++oh) {
      for (std::int64_t ow = 0; ow < wo; ++ow, ++o) {
        const std::int64_t ih0 = oh * stride, iw0 = ow * stride;
        T best = plane[ih0 * w + iw0];
        std::int64_t best_idx = ih0 * w + iw0;
        for (std::int64_t ki = 0; ki < kernel; ++ki) {
          for (std::int64_t kj = 0; kj < kernel; ++kj) {
            const std::int64_t idx = (ih0 + ki) * w + (iw0 + kj);
            if (plane[idx] > best) {  // strict: ties keep the lowest index
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        argmax[o] = i * h * w + best_idx;
      }
    }
  }
  TensorT<T> result = detail::make_op_output<T>("pool2d", {n, c, ho, wo}, std::move(out));
  if (detail::tape_needed<T>({x_node.get()})) {
    auto xp = x_node;
    detail::attach_tape<T>(result, "pool2d", {x_node},
                           [xp, argmax = std::move(argmax)](std::span<const T> gout) {
      std::vector<T> dx(xp->values.size());
      for (std::size_t k = 0; k < argmax.size(); ++k)
        dx[static_cast<std::size_t>(argmax[k])] += gout[k];
      xp->accumulate_grad(dx);
    });
  }
  return result;
}

#define ZONALNET_INSTANTIATE(T)                                                              \
  template TensorT<T> batch_norm2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                      BatchNormStateT<T>&, BnMode, double, double);          \
  template TensorT<T> pool2d<T>(const TensorT<T>&, PoolKind, std::int64_t, std::int64_t);

ZONALNET_INSTANTIATE(float)
ZONALNET_INSTANTIATE(double)
#undef ZONALNET_INSTANTIATE

}  // namespace zonalnet
