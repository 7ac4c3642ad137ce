#include "zonalnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace zonalnet::stats {

namespace {

constexpr std::size_t kExactLimit = 25;  // enumerate the null up to this many observations

void check_finite(std::span<const double> v, const char* context) {
  for (const double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(context) + ": non-finite observation");
}

// Midranks scaled by 2 so ties stay integral: rank2 of a run spanning sorted
// positions [lo, hi] is (lo + hi + 2) (1-based ranks, doubled average).
std::vector<std::int64_t> scaled_midranks(const std::vector<double>& sorted_values) {
  const std::size_t n = sorted_values.size();
  std::vector<std::int64_t> rank2(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted_values[j + 1] == sorted_values[i]) ++j;
    const std::int64_t r2 = static_cast<std::int64_t>(i + j) + 2;
    for (std::size_t k = i; k <= j; ++k) rank2[k] = r2;
    i = j + 1;
  }
  return rank2;
}

double normal_two_sided(double dev, double sigma) {
  if (sigma <= 0.0) return 1.0;  // degenerate spread: no evidence either way
  const double z = std::max(0.0, dev - 0.5) / sigma;  // continuity correction
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("wilcoxon_rank_sum: both samples must be non-empty");
  check_finite(a, "wilcoxon_rank_sum");
  check_finite(b, "wilcoxon_rank_sum");

  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  struct Obs {
    double value;
    bool from_a;
  };
  std::vector<Obs> obs;
  obs.reserve(n);
  for (const double v : a) obs.push_back({v, true});
  for (const double v : b) obs.push_back({v, false});
  std::stable_sort(obs.begin(), obs.end(),
                   [](const Obs& x, const Obs& y) { return x.value < y.value; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = obs[i].value;
  const std::vector<std::int64_t> rank2 = scaled_midranks(sorted);

  std::int64_t w2_a = 0;  // doubled rank sum of sample a
  for (std::size_t i = 0; i < n; ++i)
    if (obs[i].from_a) w2_a += rank2[i];
  const double u1 =
      static_cast<double>(w2_a) / 2.0 - static_cast<double>(n1 * (n1 + 1)) / 2.0;
  const double u2 = static_cast<double>(n1 * n2) - u1;

  TestResult r;
  r.n1 = n1;
  r.n2 = n2;
  r.statistic = std::min(u1, u2);

  if (n <= kExactLimit) {
    // dp[j][s]: subsets of size j with doubled-rank sum s.
    const std::int64_t total2 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n + 1);
    std::vector<std::vector<std::uint64_t>> dp(
        n1 + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(total2) + 1, 0));
    dp[0][0] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t r2 = rank2[i];
      for (std::size_t j = std::min(n1, i + 1); j >= 1; --j)
        for (std::int64_t s = total2; s >= r2; --s)
          dp[j][static_cast<std::size_t>(s)] += dp[j - 1][static_cast<std::size_t>(s - r2)];
    }
    // Two-sided tail: doubled rank sums at least as far from the mean as
    // observed. mu2 = n1 * (n + 1) is exact in doubled units.
    const std::int64_t mu2 = static_cast<std::int64_t>(n1) * static_cast<std::int64_t>(n + 1);
    const std::int64_t dev = std::abs(w2_a - mu2);
    std::uint64_t tail = 0, total = 0;
    for (std::int64_t s = 0; s <= total2; ++s) {
      const std::uint64_t c = dp[n1][static_cast<std::size_t>(s)];
      total += c;
      if (std::abs(s - mu2) >= dev) tail += c;
    }
    r.exact = true;
    r.p_value = static_cast<double>(tail) / static_cast<double>(total);
    return r;
  }

  // Normal approximation with tie correction.
  const double dn = static_cast<double>(n);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double mu_u = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
  const double var_u = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                       ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  r.exact = false;
  r.p_value = normal_two_sided(std::abs(u1 - mu_u), std::sqrt(var_u));
  return r;
}

TestResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("wilcoxon_signed_rank: paired samples differ in length");
  if (x.empty()) throw std::invalid_argument("wilcoxon_signed_rank: empty samples");
  check_finite(x, "wilcoxon_signed_rank");
  check_finite(y, "wilcoxon_signed_rank");

  std::vector<double> abs_d;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d == 0.0) continue;  // zero differences carry no sign information
    abs_d.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  const std::size_t n = abs_d.size();
  if (n == 0)
    throw std::invalid_argument(
        "wilcoxon_signed_rank: all differences are zero, test is degenerate");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return abs_d[i] < abs_d[j]; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = abs_d[order[i]];
  const std::vector<std::int64_t> rank2 = scaled_midranks(sorted);

  std::int64_t w2_pos = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (positive[order[i]]) w2_pos += rank2[i];
  }
  const double w_plus = static_cast<double>(w2_pos) / 2.0;
  const double w_minus = static_cast<double>(total2 - w2_pos) / 2.0;

  TestResult r;
  r.n1 = n;
  r.n2 = n;
  r.statistic = std::min(w_plus, w_minus);

  if (n <= kExactLimit) {
    // dp[s]: sign assignments whose positive doubled-rank sum is s.
    std::vector<std::uint64_t> dp(static_cast<std::size_t>(total2) + 1, 0);
    dp[0] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t r2 = rank2[i];
      for (std::int64_t s = total2; s >= r2; --s)
        dp[static_cast<std::size_t>(s)] += dp[static_cast<std::size_t>(s - r2)];
    }
    // Compare 2*S2 against total2 so the mean total2/2 stays integral.
    const std::int64_t dev = std::abs(2 * w2_pos - total2);
    std::uint64_t tail = 0, total = 0;
    for (std::int64_t s = 0; s <= total2; ++s) {
      const std::uint64_t c = dp[static_cast<std::size_t>(s)];
      total += c;
      if (std::abs(2 * s - total2) >= dev) tail += c;
    }
    r.exact = true;
    r.p_value = static_cast<double>(tail) / static_cast<double>(total);
    return r;
  }

  const double dn = static_cast<double>(n);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double mu = dn * (dn + 1.0) / 4.0;
  const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  r.exact = false;
  r.p_value = normal_two_sided(std::abs(w_plus - mu), std::sqrt(var));
  return r;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty sample");
  check_finite(values, "summarize");
  Summary s;
  s.n = values.size();
  double sum = 0.0;
  for (const double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ssq = 0.0;
    for (const double v : values) ssq += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ssq / static_cast<double>(s.n - 1));
  }
  return s;
}

}  // namespace zonalnet::stats
