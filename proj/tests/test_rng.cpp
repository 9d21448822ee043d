#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "eegfm/rng.hpp"

using namespace eegfm;

TEST_CASE("same seed replays the same draws") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(43);
  int diff = 0;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) diff += (a2.next_u64() != c.next_u64());
  CHECK(diff > 90);
}

TEST_CASE("named streams are decoupled from each other") {
  Rng root(7);
  Rng m1 = root.stream("mask");
  Rng j1 = root.stream("jitter");
  // burn lots of draws on one stream; the other must not shift
  Rng m2 = root.stream("mask");
  for (int i = 0; i < 5000; ++i) m2.next_u64();
  Rng j2 = root.stream("jitter");
  for (int i = 0; i < 100; ++i) CHECK(j1.next_u64() == j2.next_u64());

  // distinct names give distinct sequences
  Rng a = root.stream("a"), b = root.stream("b");
  int same = 0;
  for (int i = 0; i < 100; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
  (void)m1;
}

TEST_CASE("uniform stays in [0,1) with the right mean") {
  Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform_int is unbiased over a small range") {
  Rng rng(2);
  std::vector<int64_t> counts(7, 0);
  const int n = 700000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(7)];
  for (int64_t c : counts) CHECK(std::abs(c - n / 7) < 4 * std::sqrt(double(n) / 7));
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("normal has mean 0 variance 1") {
  Rng rng(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gamma matches its analytic mean and variance") {
  Rng rng(4);
  for (double shape : {0.4, 1.0, 3.5}) {
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.gamma(shape);
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.03));
    CHECK(var == doctest::Approx(shape).epsilon(0.05));
  }
  CHECK_THROWS_AS(rng.gamma(0.0), std::invalid_argument);
}

TEST_CASE("beta(0.2, 0.2) has mean 1/2 and the right variance") {
  Rng rng(5);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta(0.2, 0.2);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    s += x;
    s2 += x * x;
  }
  // var = ab / ((a+b)^2 (a+b+1)) = 0.04 / (0.16 * 1.4) = 0.1785714...
  const double mean = s / n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(s2 / n - mean * mean == doctest::Approx(0.04 / (0.16 * 1.4)).epsilon(0.02));
}

TEST_CASE("permutation is a bijection and shuffle reaches every order") {
  Rng rng(6);
  const std::vector<int> p = rng.permutation(257);
  std::set<int> seen(p.begin(), p.end());
  CHECK(seen.size() == 257);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 256);

  // all 6 orders of a 3-element shuffle appear with ~1/6 frequency
  std::map<std::vector<int>, int> hist;
  for (int i = 0; i < 60000; ++i) hist[rng.permutation(3)]++;
  CHECK(hist.size() == 6);
  for (const auto& [order, count] : hist) CHECK(std::abs(count - 10000) < 500);
}
