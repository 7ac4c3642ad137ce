#pragma once

#include <cstdint>
#include <vector>

#include "zonalnet/tensor.hpp"

namespace zonalnet {

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dOpts {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t dilation = 1;
};

// input NxCxHxW, weight FxCxKhxKw, optional bias F (pass a default-constructed
// tensor for none). Zero padding; output H' = (H + 2p - d(Kh-1) - 1)/s + 1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  const Conv2dOpts& opts = {});

// ---------------------------------------------------------------------------
// Batch normalization

enum class BnMode { train, eval };

template <typename T>
struct BatchNormStateT {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
};

using BatchNormState = BatchNormStateT<float>;

// Per-channel batch norm over NxCxHxW. Train mode normalizes with batch
// statistics (biased variance) and folds them into the running buffers as
// running = (1 - momentum) * running + momentum * batch, using the unbiased
// variance for the running estimate. Eval mode consumes the running buffers
// and errors if they were never initialized.
template <typename T>
TensorT<T> batch_norm2d(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                        BatchNormStateT<T>& state, BnMode mode, double momentum = 0.1,
                        double eps = 1e-5);

// ---------------------------------------------------------------------------
// Pooling

enum class PoolKind { max, global_avg };

// max: kernel/stride windows without padding, ties route gradient to the
// lowest linear index. global_avg: NxCxHxW -> NxCx1x1, kernel/stride ignored.
template <typename T>
TensorT<T> pool2d(const TensorT<T>& input, PoolKind kind, std::int64_t kernel = 2,
                  std::int64_t stride = 2);

// ---------------------------------------------------------------------------
// Resampling

// Bilinear interpolation with half-pixel centers: src = (dst + 0.5) * in/out
// - 0.5, clamped to the border. Exact identity when sizes match.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& input, std::int64_t out_h, std::int64_t out_w);

template <typename T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, std::int64_t factor);

// ---------------------------------------------------------------------------
// Elementwise and shape ops

template <typename T>
TensorT<T> relu(const TensorT<T>& input);

// add/mul support equal shapes or broadcasting one NxCx1x1 operand over
// NxCxHxW.
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

// Softmax over the channel axis of NxCxHxW, computed with the max-shift trick.
template <typename T>
TensorT<T> softmax_channel(const TensorT<T>& input);

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// Mean over all elements -> scalar (shape {1}).
template <typename T>
TensorT<T> mean_all(const TensorT<T>& input);

#define ZONALNET_EXTERN_OPS(T)                                                                   \
  extern template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                       const Conv2dOpts&);                                       \
  extern template TensorT<T> batch_norm2d<T>(const TensorT<T>&, const TensorT<T>&,              \
                                             const TensorT<T>&, BatchNormStateT<T>&, BnMode,    \
                                             double, double);                                   \
  extern template TensorT<T> pool2d<T>(const TensorT<T>&, PoolKind, std::int64_t, std::int64_t); \
  extern template TensorT<T> bilinear_resize<T>(const TensorT<T>&, std::int64_t, std::int64_t);  \
  extern template TensorT<T> bilinear_upsample<T>(const TensorT<T>&, std::int64_t);              \
  extern template TensorT<T> relu<T>(const TensorT<T>&);                                         \
  extern template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                       \
  extern template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                       \
  extern template TensorT<T> softmax_channel<T>(const TensorT<T>&);                              \
  extern template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);           \
  extern template TensorT<T> mean_all<T>(const TensorT<T>&);

ZONALNET_EXTERN_OPS(float)
ZONALNET_EXTERN_OPS(double)
#undef ZONALNET_EXTERN_OPS

}  // namespace zonalnet
