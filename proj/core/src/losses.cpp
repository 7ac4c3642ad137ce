#include "zonalnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "detail/op_builder.hpp"

namespace zonalnet {

template <typename T>
TensorT<T> cross_entropy_loss(const TensorT<T>& probs, std::span<const LabelMask> targets,
                              double clamp_eps) {
  const auto& p_node = detail::node_of(probs, "cross_entropy_loss");
  if (probs.shape().size() != 4)
    throw std::invalid_argument("cross_entropy_loss: probs must be NxCxHxW, got " +
                                shape_str(probs.shape()));
  const std::int64_t n = probs.dim(0), c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  if (c != kNumClasses)
    throw std::invalid_argument("cross_entropy_loss: expected " + std::to_string(kNumClasses) +
                                " channels, got " + std::to_string(c));
  if (static_cast<std::int64_t>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(targets.size()) +
                                " target masks for batch of " + std::to_string(n));
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
    throw std::invalid_argument("cross_entropy_loss: clamp_eps must be in (0, 0.5)");
  for (const LabelMask& m : targets) {
    validate_mask(m, "cross_entropy_loss");
    if (m.height != h || m.width != w)
      throw std::invalid_argument("cross_entropy_loss: target " + std::to_string(m.width) + "x" +
                                  std::to_string(m.height) + " does not match probs " +
                                  std::to_string(w) + "x" + std::to_string(h));
  }

  const std::int64_t hw = h * w;
  const T* p = p_node->values.data();
  double total = 0.0;
  for (std::int64_t b = 0; b < n; ++b) {
    const std::uint8_t* y = targets[static_cast<std::size_t>(b)].labels.data();
    const std::int64_t base = b * c * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double pv = std::clamp(static_cast<double>(p[base + ch * hw + i]), clamp_eps,
                                     1.0 - clamp_eps);
        if (y[i] == ch)
          total -= std::log(pv);
        else
          total -= std::log(1.0 - pv);
      }
    }
  }
  const double denom = static_cast<double>(n * hw * c);
  TensorT<T> result =
      detail::make_op_output<T>("cross_entropy_loss", {1}, {static_cast<T>(total / denom)});

  if (detail::tape_needed<T>({p_node.get()})) {
    auto pp = p_node;
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n * hw));
    for (std::int64_t b = 0; b < n; ++b)
      std::copy(targets[static_cast<std::size_t>(b)].labels.begin(),
                targets[static_cast<std::size_t>(b)].labels.end(),
                labels.begin() + b * hw);
    detail::attach_tape<T>(result, "cross_entropy_loss", {p_node},
                           [pp, labels = std::move(labels), n, c, hw, clamp_eps,
                            denom](std::span<const T> gout) {
      const double g = static_cast<double>(gout[0]) / denom;
      std::vector<T> dp(pp->values.size());
      const T* p = pp->values.data();
      for (std::int64_t b = 0; b < n; ++b) {
        const std::uint8_t* y = labels.data() + b * hw;
        const std::int64_t base = b * c * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::size_t k = static_cast<std::size_t>(base + ch * hw + i);
            const double pv = static_cast<double>(p[k]);
            if (pv < clamp_eps || pv > 1.0 - clamp_eps) continue;  // clamp kills the gradient
            const double d = y[i] == ch ? -1.0 / pv : 1.0 / (1.0 - pv);
            dp[k] = static_cast<T>(g * d);
          }
        }
      }
      pp->accumulate_grad(dp);
    });
  }
  return result;
}

template TensorT<float> cross_entropy_loss<float>(const TensorT<float>&,
                                                  std::span<const LabelMask>, double);
template TensorT<double> cross_entropy_loss<double>(const TensorT<double>&,
                                                    std::span<const LabelMask>, double);

}  // namespace zonalnet
