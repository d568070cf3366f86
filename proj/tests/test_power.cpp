#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "crt/power.hpp"
#include "crt/rng.hpp"

using namespace crt;

namespace {

double z_quantile(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Hayes-Moulton matched-pair sample size, written out independently.
double hm_pairs(double m, double p0, double p1, double km, double alpha, double power) {
  const double z = z_quantile(1 - alpha / 2) + z_quantile(power);
  return 2 + z * z * ((p0 * (1 - p0) + p1 * (1 - p1)) / m + km * km * (p0 * p0 + p1 * p1)) / ((p0 - p1) * (p0 - p1));
}

PowerSpec trial(double km, double pi0 = 0.01) {
  PowerSpec s;
  s.pairs = 16;
  s.m = 2700;
  s.pi0 = pi0;
  s.km = km;
  return s;
}

}  // namespace

TEST_CASE("pairs required for a 40% reduction") {
  const double c = pairs_required(trial(0.4), 0.006);
  CHECK(c == doctest::Approx(15.5).epsilon(0.01));
  CHECK(c <= 16.0);
}

TEST_CASE("pairs required matches the closed form") {
  RngStream rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    PowerSpec s;
    s.m = rng.uniform(100, 5000);
    s.pi0 = rng.uniform(0.002, 0.2);
    s.km = rng.uniform(0.0, 0.6);
    s.alpha = rng.uniform(0.01, 0.1);
    s.power = rng.uniform(0.5, 0.95);
    const double pi1 = s.pi0 * rng.uniform(0.1, 0.95);
    CHECK(pairs_required(s, pi1) ==
          doctest::Approx(hm_pairs(s.m, s.pi0, pi1, s.km, s.alpha, s.power)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pairs_required(trial(0.4), 0.02), std::invalid_argument);
}

TEST_CASE("detectable reductions by km") {
  CHECK(std::abs(detectable_reduction(trial(0.4)) - 0.40) <= 0.02);
  CHECK(std::abs(detectable_reduction(trial(0.3)) - 0.33) <= 0.02);
  CHECK(std::abs(detectable_reduction(trial(0.2)) - 0.27) <= 0.02);
  CHECK(detectable_reduction(trial(0.4, 0.0134)) <= 0.40);
}

TEST_CASE("detectable reduction inverts pairs_required") {
  RngStream rng(42);
  for (int rep = 0; rep < 100; ++rep) {
    auto s = trial(rng.uniform(0.1, 0.5), rng.uniform(0.005, 0.05));
    s.pairs = static_cast<double>(rng.uniform_int(10, 40));
    const double r = detectable_reduction(s);
    CHECK(r > 0.0);
    CHECK(r < 1.0);
    CHECK(std::abs(hm_pairs(s.m, s.pi0, s.pi0 * (1 - r), s.km, s.alpha, s.power) - s.pairs) < 1e-6);
  }
}

TEST_CASE("monotonicity") {
  CHECK(detectable_reduction(trial(0.2)) < detectable_reduction(trial(0.3)));
  auto more = trial(0.4);
  more.pairs = 20;
  CHECK(detectable_reduction(more) < detectable_reduction(trial(0.4)));
}

TEST_CASE("underpowered design") {
  auto s = trial(0.4);
  s.pairs = 2;
  CHECK_THROWS_WITH_AS(detectable_reduction(s), "underpowered design", std::domain_error);
}

TEST_CASE("drop-pair tradeoff") {
  const auto t = drop_pair_tradeoff(trial(0.4), 0.35);
  CHECK(t.r_full == detectable_reduction(trial(0.4)));
  CHECK(t.r_dropped <= t.r_full + 0.01);
  const auto same = drop_pair_tradeoff(trial(0.4), 0.4);
  CHECK(same.r_dropped > same.r_full);
  CHECK_THROWS_AS(drop_pair_tradeoff(trial(0.4), 0.5), std::invalid_argument);
}

TEST_CASE("spec validation") {
  auto s = trial(0.4);
  s.pi0 = 1.2;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = trial(-0.1);
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = trial(0.4);
  s.pairs = 1;
  CHECK_THROWS_AS(detectable_reduction(s), std::invalid_argument);
}
