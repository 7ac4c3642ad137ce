#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "detail/op_builder.hpp"
#include "zonalnet/ops.hpp"

namespace zonalnet {

namespace {

// Half-pixel source mapping: src = (dst + 0.5) * in/out - 0.5, clamped.
template <typename T>
struct AxisTap {
  std::int64_t lo, hi;
  T frac;
};

template <typename T>
std::vector<AxisTap<T>> make_taps(std::int64_t in, std::int64_t out) {
  std::vector<AxisTap<T>> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
    taps[static_cast<std::size_t>(i)] = {lo, std::min(lo + 1, in - 1),
                                         static_cast<T>(src - static_cast<double>(lo))};
  }
  return taps;
}

}  // namespace

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& input, std::int64_t out_h, std::int64_t out_w) {
  const auto& x_node = detail::node_of(input, "bilinear_resize");
  if (input.shape().size() != 4)
    throw std::invalid_argument("bilinear_resize: input must be NxCxHxW, got " +
                                shape_str(input.shape()));
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: target extent must be positive");
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 1 || w < 1) throw std::invalid_argument("bilinear_resize: empty input plane");

  const auto ty = make_taps<T>(h, out_h);
  const auto tx = make_taps<T>(w, out_w);
  const T* x = x_node->values.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * out_h * out_w));
  std::size_t o = 0;
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* plane = x + p * h * w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const auto& ay = ty[static_cast<std::size_t>(i)];
      const T* r0 = plane + ay.lo * w;
      const T* r1 = plane + ay.hi * w;
      for (std::int64_t j = 0; j < out_w; ++j, ++o) {
        const auto& ax = tx[static_cast<std::size_t>(j)];
        // lerp form keeps constant images bit-exact
        const T top = r0[ax.lo] + ax.frac * (r0[ax.hi] - r0[ax.lo]);
        const T bot = r1[ax.lo] + ax.frac * (r1[ax.hi] - r1[ax.lo]);
        out[o] = top + ay.frac * (bot - top);
      }
    }
  }

  TensorT<T> result =
      detail::make_op_output<T>("bilinear_resize", {n, c, out_h, out_w}, std::move(out));
  if (detail::tape_needed<T>({x_node.get()})) {
    auto xp = x_node;
    detail::attach_tape<T>(result, "bilinear_resize", {x_node},
                           [xp, ty, tx, n, c, h, w, out_h, out_w](std::span<const T> gout) {
      std::vector<T> dx(xp->values.size());
      std::size_t o = 0;
      for (std::int64_t p = 0; p < n * c; ++p) {
        T* plane = dx.data() + p * h * w;
        for (std::int64_t i = 0; i < out_h; ++i) {
          const auto& ay = ty[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < out_w; ++j, ++o) {
            const auto& ax = tx[static_cast<std::size_t>(j)];
            const T g = gout[o];
            const T wy1 = ay.frac, wy0 = T(1) - ay.frac;
            const T wx1 = ax.frac, wx0 = T(1) - ax.frac;
            plane[ay.lo * w + ax.lo] += g * wy0 * wx0;
            plane[ay.lo * w + ax.hi] += g * wy0 * wx1;
            plane[ay.hi * w + ax.lo] += g * wy1 * wx0;
            plane[ay.hi * w + ax.hi] += g * wy1 * wx1;
          }
        }
      }
      xp->accumulate_grad(dx);
    });
  }
  return result;
}

template <typename T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, std::int64_t factor) {
  if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be at least 1");
  detail::node_of(input, "bilinear_upsample");
  if (input.shape().size() != 4)
    throw std::invalid_argument("bilinear_upsample: input must be NxCxHxW, got " +
                                shape_str(input.shape()));
  return bilinear_resize(input, input.dim(2) * factor, input.dim(3) * factor);
}

#define ZONALNET_INSTANTIATE(T)                                                            \
  template TensorT<T> bilinear_resize<T>(const TensorT<T>&, std::int64_t, std::int64_t);  \
  template TensorT<T> bilinear_upsample<T>(const TensorT<T>&, std::int64_t);

ZONALNET_INSTANTIATE(float)
ZONALNET_INSTANTIATE(double)
#undef ZONALNET_INSTANTIATE

}  // namespace zonalnet
