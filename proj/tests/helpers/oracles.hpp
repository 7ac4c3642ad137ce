#pragma once

// Independent reference implementations used to cross-check the library:
// a naive convolution, a central finite-difference gradient checker, literal
// enumeration of the Wilcoxon null distributions and brute-force Dice
// counting. Everything here favours obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "zonalnet/tensor.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Naive convolution: seven explicit loops, zero padding.

struct ConvSpec {
  std::int64_t n, c, h, w;      // input
  std::int64_t f, kh, kw;       // filters
  std::int64_t stride = 1, padding = 0, dilation = 1;
  bool bias = false;
};

inline std::int64_t conv_out(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p,
                             std::int64_t d) {
  return (in + 2 * p - d * (k - 1) - 1) / s + 1;
}

template <typename T>
std::vector<T> naive_conv2d(const ConvSpec& sp, std::span<const T> x, std::span<const T> wgt,
                            std::span<const T> bias) {
  const std::int64_t oh = conv_out(sp.h, sp.kh, sp.stride, sp.padding, sp.dilation);
  const std::int64_t ow = conv_out(sp.w, sp.kw, sp.stride, sp.padding, sp.dilation);
  std::vector<T> out(static_cast<std::size_t>(sp.n * sp.f * oh * ow), T(0));
  for (std::int64_t n = 0; n < sp.n; ++n)
    for (std::int64_t f = 0; f < sp.f; ++f)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          double acc = sp.bias ? static_cast<double>(bias[static_cast<std::size_t>(f)]) : 0.0;
          for (std::int64_t c = 0; c < sp.c; ++c)
            for (std::int64_t ky = 0; ky < sp.kh; ++ky)
              for (std::int64_t kx = 0; kx < sp.kw; ++kx) {
                const std::int64_t iy = y * sp.stride - sp.padding + ky * sp.dilation;
                const std::int64_t ix = xo * sp.stride - sp.padding + kx * sp.dilation;
                if (iy < 0 || iy >= sp.h || ix < 0 || ix >= sp.w) continue;
                const auto xi = static_cast<std::size_t>(((n * sp.c + c) * sp.h + iy) * sp.w + ix);
                const auto wi =
                    static_cast<std::size_t>(((f * sp.c + c) * sp.kh + ky) * sp.kw + kx);
                acc += static_cast<double>(x[xi]) * static_cast<double>(wgt[wi]);
              }
          out[static_cast<std::size_t>(((n * sp.f + f) * oh + y) * ow + xo)] = static_cast<T>(acc);
        }
  return out;
}

// ---------------------------------------------------------------------------
// Central finite-difference gradient check (64-bit).

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// make_scalar must rebuild the graph from the current leaf values and return
// a scalar. Every leaf marked requires_grad is perturbed element by element.
inline GradCheckResult gradcheck(
    const std::function<zonalnet::TensorT<double>()>& make_scalar,
    std::span<zonalnet::TensorT<double>> leaves, double step = 1e-3) {
  for (auto& leaf : leaves) leaf.zero_grad();  // earlier checks may have deposited gradients
  zonalnet::TensorT<double> loss = make_scalar();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw std::invalid_argument("gradcheck: leaf without grad");
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }

  GradCheckResult r;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].leaf_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + step;
      const double up = make_scalar().item();
      vals[i] = keep - step;
      const double down = make_scalar().item();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      r.max_rel_err = std::max(r.max_rel_err, rel);
      ++r.checked;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon null distributions by literal enumeration (midranks on doubles;
// halves are exact in binary so the comparisons below are exact).

inline std::vector<double> midranks(std::vector<double> sorted_values,
                                    std::span<const double> sample) {
  std::sort(sorted_values.begin(), sorted_values.end());
  std::vector<double> ranks;
  ranks.reserve(sample.size());
  for (const double v : sample) {
    const auto lo = std::lower_bound(sorted_values.begin(), sorted_values.end(), v);
    const auto hi = std::upper_bound(sorted_values.begin(), sorted_values.end(), v);
    const double first = static_cast<double>(lo - sorted_values.begin()) + 1.0;
    const double last = static_cast<double>(hi - sorted_values.begin());
    ranks.push_back((first + last) / 2.0);
  }
  return ranks;
}

inline double enum_rank_sum_p(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled, pooled);
  const std::size_t n = pooled.size(), n1 = a.size();

  double observed = 0.0;
  for (std::size_t i = 0; i < n1; ++i) observed += ranks[i];
  const double mu = static_cast<double>(n1) * static_cast<double>(n + 1) / 2.0;
  const double dev = std::abs(observed - mu);

  std::vector<int> pick(n, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n1), 1);
  std::sort(pick.begin(), pick.end(), std::greater<>());
  std::uint64_t total = 0, extreme = 0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) s += ranks[i];
    ++total;
    if (std::abs(s - mu) >= dev) ++extreme;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

inline double enum_signed_rank_p(std::span<const double> x, std::span<const double> y) {
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) diffs.push_back(x[i] - y[i]);
  if (diffs.empty()) throw std::invalid_argument("enum signed rank: all differences zero");
  std::vector<double> mags(diffs.size());
  std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
  const std::vector<double> ranks = midranks(mags, mags);

  double w_pos = 0.0, total_rank = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    total_rank += ranks[i];
    if (diffs[i] > 0) w_pos += ranks[i];
  }
  const double mu = total_rank / 2.0;
  const double dev = std::abs(w_pos - mu);

  const std::size_t m = diffs.size();
  if (m > 25) throw std::invalid_argument("enum signed rank: too many pairs");
  const std::uint64_t combos = std::uint64_t(1) << m;
  std::uint64_t extreme = 0;
  for (std::uint64_t bits = 0; bits < combos; ++bits) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (bits & (std::uint64_t(1) << i)) s += ranks[i];
    if (std::abs(s - mu) >= dev) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(combos);
}

// ---------------------------------------------------------------------------
// Brute-force Dice on flat label arrays.

inline std::optional<double> brute_dsc(std::span<const std::uint8_t> pred,
                                       std::span<const std::uint8_t> truth, std::uint8_t label) {
  std::int64_t np = 0, nt = 0, ni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == label, t = truth[i] == label;
    np += p;
    nt += t;
    ni += p && t;
  }
  if (np + nt == 0) return std::nullopt;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(np + nt);
}

}  // namespace oracles
