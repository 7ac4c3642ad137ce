#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace zonalnet::stats {

struct TestResult {
  double statistic = 0.0;  // U for rank-sum, min(W+, W-) for signed-rank
  double p_value = 1.0;
  bool exact = false;      // true when the null distribution was enumerated
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

// Two-sided Wilcoxon rank-sum (Mann-Whitney) test for independent samples.
// Ties share midranks. Up to 25 combined observations the p-value comes from
// exact enumeration of the rank-sum distribution; beyond that a normal
// approximation with tie and continuity corrections is used.
TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

// Two-sided Wilcoxon signed-rank test for paired samples. Zero differences
// are dropped; all-zero input is an error. Same exact/approximate split on
// the number of non-zero pairs.
TestResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;  // sample SD (n - 1); absent for a single value
};

Summary summarize(std::span<const double> values);

}  // namespace zonalnet::stats
