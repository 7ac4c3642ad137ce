#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers/oracles.hpp"
#include "zonalnet/stats.hpp"

using namespace zonalnet::stats;

TEST_CASE("rank sum worked example") {
  // {1,2} vs {3,4}: complete separation, U = 0, exact two-sided p = 1/3.
  const std::vector<double> a{1, 2}, b{3, 4};
  const TestResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rank sum on identical samples") {
  const std::vector<double> a{0.5, 0.5, 0.7}, b{0.5, 0.7, 0.5};
  const TestResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("signed rank worked example") {
  // Five pairs, all improved: p = 2/2^5 = 0.0625.
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 3, 4, 5, 6};
  const TestResult r = wilcoxon_signed_rank(x, y);
  CHECK(r.exact);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("signed rank drops zero differences") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, y{1, 3, 4, 5, 6, 7};
  const TestResult r = wilcoxon_signed_rank(x, y);
  CHECK(r.n1 == 5);  // one pair tied and removed
  CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-12));

  const std::vector<double> same{1, 2, 3};
  CHECK_THROWS_AS(wilcoxon_signed_rank(same, same), std::invalid_argument);
}

TEST_CASE("rank sum matches enumeration across small samples with ties") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 5);
  std::uniform_int_distribution<int> grid(0, 4);  // coarse grid forces ties
  for (int rep = 0; rep < 120; ++rep) {
    const int n1 = size(rng), n2 = size(rng);
    std::vector<double> a(static_cast<std::size_t>(n1)), b(static_cast<std::size_t>(n2));
    for (auto& v : a) v = grid(rng) * 0.25;
    for (auto& v : b) v = grid(rng) * 0.25;
    const TestResult r = wilcoxon_rank_sum(a, b);
    REQUIRE(r.exact);
    const double want = oracles::enum_rank_sum_p(a, b);
    CHECK_MESSAGE(std::abs(r.p_value - want) <= 1e-12, "rep ", rep, " got ", r.p_value,
                  " want ", want);
  }
}

TEST_CASE("signed rank matches enumeration across small samples with ties") {
  std::mt19937_64 rng(4048);
  std::uniform_int_distribution<int> size(2, 10);
  std::uniform_int_distribution<int> grid(-3, 3);
  for (int rep = 0; rep < 120; ++rep) {
    const int n = size(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    bool any = false;
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = grid(rng) * 0.5;
      y[static_cast<std::size_t>(i)] = grid(rng) * 0.5;
      any |= x[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)];
    }
    if (!any) {
      --rep;
      continue;
    }
    const TestResult r = wilcoxon_signed_rank(x, y);
    REQUIRE(r.exact);
    const double want = oracles::enum_signed_rank_p(x, y);
    CHECK_MESSAGE(std::abs(r.p_value - want) <= 1e-12, "rep ", rep, " got ", r.p_value,
                  " want ", want);
  }
}

TEST_CASE("large samples switch to the corrected normal approximation") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> na(0.0, 1.0), nb(1.0, 1.0);
  std::vector<double> a(30), b(28);
  for (auto& v : a) v = na(rng);
  for (auto& v : b) v = nb(rng);
  const TestResult r = wilcoxon_rank_sum(a, b);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1.0);

  // A clear shift should be detected; no shift should not.
  CHECK(r.p_value < 0.05);
  std::vector<double> c(30);
  for (auto& v : c) v = na(rng);
  const TestResult r2 = wilcoxon_rank_sum(a, c);
  CHECK_FALSE(r2.exact);
  CHECK(r2.p_value > 0.05);
}

TEST_CASE("signed rank approximation on larger cohorts") {
  std::mt19937_64 rng(78);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> x(40), y(40);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.7 + noise(rng);
    y[i] = x[i] + 0.04 + noise(rng);  // consistent improvement
  }
  const TestResult r = wilcoxon_signed_rank(x, y);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value < 0.01);
}

TEST_CASE("p-values stay within [0, 1] under heavy ties") {
  // Every observation identical across groups except one.
  std::vector<double> a(12, 0.8), b(12, 0.8);
  b.back() = 0.81;
  const TestResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.p_value >= 0.0);
  CHECK(r.p_value <= 1.0);
}

TEST_CASE("input validation") {
  const std::vector<double> empty;
  const std::vector<double> one{0.5};
  CHECK_THROWS_AS(wilcoxon_rank_sum(empty, one), std::invalid_argument);
  CHECK_THROWS_AS(wilcoxon_signed_rank(one, empty), std::invalid_argument);
}

TEST_CASE("summary statistics") {
  const std::vector<double> two{0.7, 0.78};
  const Summary s = summarize(two);
  CHECK(s.n == 2);
  CHECK(s.mean == doctest::Approx(0.74).epsilon(1e-12));
  REQUIRE(s.sd.has_value());
  CHECK(*s.sd == doctest::Approx(0.0565685424949238).epsilon(1e-12));

  const std::vector<double> single{0.5};
  const Summary s1 = summarize(single);
  CHECK(s1.mean == 0.5);
  CHECK_FALSE(s1.sd.has_value());

  CHECK_THROWS_AS(summarize(std::vector<double>{}), std::invalid_argument);
}
