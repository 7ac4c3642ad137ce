#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "detail/gemm.hpp"
#include "detail/op_builder.hpp"
#include "zonalnet/ops.hpp"
#include "zonalnet/parallel.hpp"

namespace zonalnet {

namespace {

struct ConvDims {
  std::int64_t n, c, h, w;        // input
  std::int64_t f, kh, kw;         // filters
  std::int64_t ho, wo;            // output
  std::int64_t stride, pad, dil;
  std::int64_t k_col;             // c * kh * kw
  std::int64_t n_sp;              // ho * wo
};

std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad,
                          std::int64_t dil) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

// Unpacks one sample into a (c*kh*kw) x (ho*wo) patch matrix, zero padding
// outside the image. Row r = (c*kh + i)*kw + j holds tap (i, j) of channel c.
template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  for (std::int64_t c = 0; c < d.c; ++c) {
    const T* xc = x + c * d.h * d.w;
    for (std::int64_t i = 0; i < d.kh; ++i) {
      for (std::int64_t j = 0; j < d.kw; ++j) {
        T* row = col + ((c * d.kh + i) * d.kw + j) * d.n_sp;
        const std::int64_t off_w = j * d.dil - d.pad;
        // valid wo range: 0 <= wo*stride + off_w < w
        std::int64_t wo_lo = 0;
        if (off_w < 0) wo_lo = (-off_w + d.stride - 1) / d.stride;
        std::int64_t wo_hi = off_w < d.w ? (d.w - 1 - off_w) / d.stride + 1 : 0;
        wo_lo = std::min(wo_lo, d.wo);
        wo_hi = std::clamp<std::int64_t>(wo_hi, wo_lo, d.wo);
        for (std::int64_t ho = 0; ho < d.ho; ++ho) {
          const std::int64_t ih = ho * d.stride + i * d.dil - d.pad;
          T* dst = row + ho * d.wo;
          if (ih < 0 || ih >= d.h) {
            std::fill(dst, dst + d.wo, T(0));
            continue;
          }
          const T* src_row = xc + ih * d.w;
          std::fill(dst, dst + wo_lo, T(0));
          for (std::int64_t wo = wo_lo; wo < wo_hi; ++wo) dst[wo] = src_row[off_w + wo * d.stride];
          std::fill(dst + wo_hi, dst + d.wo, T(0));
        }
      }
    }
  }
}

// Scatter-adds patch-matrix gradients of channels [c0, c1) back onto the
// image gradient. Channels write disjoint planes, so callers may split on c.
template <typename T>
void col2im(const T* col, const ConvDims& d, std::int64_t c0, std::int64_t c1, T* dx) {
  for (std::int64_t c = c0; c < c1; ++c) {
    T* dxc = dx + c * d.h * d.w;
    for (std::int64_t i = 0; i < d.kh; ++i) {
      for (std::int64_t j = 0; j < d.kw; ++j) {
        const T* row = col + ((c * d.kh + i) * d.kw + j) * d.n_sp;
        const std::int64_t off_w = j * d.dil - d.pad;
        for (std::int64_t ho = 0; ho < d.ho; ++ho) {
          const std::int64_t ih = ho * d.stride + i * d.dil - d.pad;
          if (ih < 0 || ih >= d.h) continue;
          const T* src = row + ho * d.wo;
          T* dst_row = dxc + ih * d.w;
          for (std::int64_t wo = 0; wo < d.wo; ++wo) {
            const std::int64_t iw = off_w + wo * d.stride;
            if (iw >= 0 && iw < d.w) dst_row[iw] += src[wo];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  const Conv2dOpts& opts) {
  const auto& x_node = detail::node_of(input, "conv2d");
  const auto& w_node = detail::node_of(weight, "conv2d");
  if (input.shape().size() != 4)
    throw std::invalid_argument("conv2d: input must be NxCxHxW, got " + shape_str(input.shape()));
  if (weight.shape().size() != 4)
    throw std::invalid_argument("conv2d: weight must be FxCxKhxKw, got " +
                                shape_str(weight.shape()));
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0)
    throw std::invalid_argument("conv2d: need stride >= 1, dilation >= 1, padding >= 0");

  ConvDims d;
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.f = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.stride = opts.stride;
  d.pad = opts.padding;
  d.dil = opts.dilation;
  if (weight.dim(1) != d.c)
    throw std::invalid_argument("conv2d: input channels (" + std::to_string(d.c) +
                                ") do not match weight channels (" +
                                std::to_string(weight.dim(1)) + ")");
  d.ho = conv_out_dim(d.h, d.kh, d.stride, d.pad, d.dil);
  d.wo = conv_out_dim(d.w, d.kw, d.stride, d.pad, d.dil);
  if (d.ho < 1 || d.wo < 1)
    throw std::invalid_argument("conv2d: zero-size output for input " + shape_str(input.shape()) +
                                " with kernel " + shape_str(weight.shape()));
  d.k_col = d.c * d.kh * d.kw;
  d.n_sp = d.ho * d.wo;

  detail::TensorNodeT<T>* b_node = nullptr;
  if (bias.defined()) {
    if (bias.shape().size() != 1 || bias.dim(0) != d.f)
      throw std::invalid_argument("conv2d: bias must have shape [" + std::to_string(d.f) +
                                  "], got " + shape_str(bias.shape()));
    b_node = bias.node().get();
  }

  const T* x = x_node->values.data();
  const T* w = w_node->values.data();
  std::vector<T> out(static_cast<std::size_t>(d.n * d.f * d.n_sp));
  std::vector<T> col(static_cast<std::size_t>(d.k_col * d.n_sp));
  for (std::int64_t n = 0; n < d.n; ++n) {
    im2col(x + n * d.c * d.h * d.w, d, col.data());
    T* out_n = out.data() + n * d.f * d.n_sp;
    if (b_node != nullptr) {
      const T* b = b_node->values.data();
      for (std::int64_t f = 0; f < d.f; ++f)
        std::fill(out_n + f * d.n_sp, out_n + (f + 1) * d.n_sp, b[f]);
    }
    parallel::parallel_for(0, d.f, 8, [&](std::int64_t f0, std::int64_t f1) {
      detail::gemm_rows(f0, f1, d.k_col, d.n_sp, w, col.data(), out_n);
    });
  }

  TensorT<T> result = detail::make_op_output<T>(
      "conv2d", {d.n, d.f, d.ho, d.wo}, std::move(out));

  if (detail::tape_needed<T>({x_node.get(), w_node.get(), b_node})) {
    std::vector<std::shared_ptr<detail::TensorNodeT<T>>> inputs{x_node, w_node};
    if (bias.defined()) inputs.push_back(bias.node());
    auto xp = x_node;
    auto wp = w_node;
    auto bp = bias.defined() ? bias.node() : nullptr;
    detail::attach_tape<T>(result, "conv2d", std::move(inputs),
                           [xp, wp, bp, d](std::span<const T> gout) {
      const bool need_dx = xp->requires_grad;
      const bool need_dw = wp->requires_grad;
      const bool need_db = bp != nullptr && bp->requires_grad;
      std::vector<T> col(static_cast<std::size_t>(d.k_col * d.n_sp));
      std::vector<T> dw(need_dw ? static_cast<std::size_t>(d.f * d.k_col) : 0);
      std::vector<T> dx(need_dx ? xp->values.size() : 0);
      std::vector<T> db(need_db ? static_cast<std::size_t>(d.f) : 0);
      std::vector<T> dcol(need_dx ? static_cast<std::size_t>(d.k_col * d.n_sp) : 0);
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* g_n = gout.data() + n * d.f * d.n_sp;
        if (need_dw) {
          im2col(xp->values.data() + n * d.c * d.h * d.w, d, col.data());
          parallel::parallel_for(0, d.f, 8, [&](std::int64_t f0, std::int64_t f1) {
            detail::gemm_bt_rows(f0, f1, d.n_sp, d.k_col, g_n, col.data(), dw.data());
          });
        }
        if (need_db) {
          for (std::int64_t f = 0; f < d.f; ++f) {
            const T* g_f = g_n + f * d.n_sp;
            T s = 0;
            for (std::int64_t j = 0; j < d.n_sp; ++j) s += g_f[j];
            db[static_cast<std::size_t>(f)] += s;
          }
        }
        if (need_dx) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          parallel::parallel_for(0, d.k_col, 16, [&](std::int64_t k0, std::int64_t k1) {
            detail::gemm_at_rows(k0, k1, d.f, d.k_col, d.n_sp, wp->values.data(), g_n,
                                 dcol.data());
          });
          T* dx_n = dx.data() + n * d.c * d.h * d.w;
          parallel::parallel_for(0, d.c, 1, [&](std::int64_t c0, std::int64_t c1) {
            col2im(dcol.data(), d, c0, c1, dx_n);
          });
        }
      }
      if (need_dw) wp->accumulate_grad(dw);
      if (need_db) bp->accumulate_grad(db);
      if (need_dx) xp->accumulate_grad(dx);
    });
  }
  return result;
}

template TensorT<float> conv2d<float>(const TensorT<float>&, const TensorT<float>&,
                                      const TensorT<float>&, const Conv2dOpts&);
template TensorT<double> conv2d<double>(const TensorT<double>&, const TensorT<double>&,
                                        const TensorT<double>&, const Conv2dOpts&);

}  // namespace zonalnet
