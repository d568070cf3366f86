#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crt/rng.hpp"
#include "crt/stage1.hpp"
#include "oracles.hpp"

using namespace crt;
using namespace crt::oracle;

TEST_CASE("empirical cumulative incidence") {
  Cohort c;
  c.records = {rec(1, false, true, true), rec(2, false, true, false), rec(3, true, false, std::nullopt),
               rec(4, false, false, std::nullopt)};
  const auto e = cumulative_incidence_empirical(c);
  CHECK(e.estimate == 0.5);
  CHECK(e.denominator == 2);

  Cohort none;
  none.records = {rec(1, false, true, false), rec(2, false, true, false)};
  CHECK(cumulative_incidence_empirical(none).estimate == 0.0);

  Cohort empty;
  empty.records = {rec(1, true, false, std::nullopt)};
  CHECK_THROWS_WITH_AS(cumulative_incidence_empirical(empty), "no measured uncensored members", std::domain_error);

  RngStream rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    auto f = two_stratum(rng, 200, 0.5, {0.7, 0.5}, {0.1, 0.3});
    double num = 0, den = 0;
    for (const auto& r : f.records) {
      if (!r.censored && r.measured) den += 1, num += *r.infected;
    }
    CHECK(cumulative_incidence_empirical(f).estimate == num / den);
    std::reverse(f.records.begin(), f.records.end());
    CHECK(cumulative_incidence_empirical(f).estimate == doctest::Approx(num / den).epsilon(1e-15));
  }
}

TEST_CASE("record invariants") {
  CHECK_THROWS_AS(validate_record(rec(1, false, true, std::nullopt)), std::invalid_argument);
  CHECK_THROWS_AS(validate_record(rec(1, false, false, true)), std::invalid_argument);
  CHECK_THROWS_AS(validate_record(rec(1, true, true, true)), std::invalid_argument);
  CHECK_NOTHROW(validate_record(rec(1, true, false, std::nullopt)));
}

TEST_CASE("stage-I TMLE reduces to the empirical proportion without adjustment") {
  RngStream rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const auto c = two_stratum(rng, 500, 0.4, {0.9, 0.5}, {0.05, 0.2});
    CHECK(std::abs(cumulative_incidence_tmle(c, {}).estimate - cumulative_incidence_empirical(c).estimate) <= 1e-12);
  }
}

TEST_CASE("stage-I TMLE against the two-stratum closed form") {
  RngStream rng(2024, {5});
  const double pw = 0.4;
  const std::array<double, 2> g{0.9, 0.6}, q{0.02, 0.05};
  const auto c = two_stratum(rng, 100000, pw, g, q);
  const auto t = cumulative_incidence_tmle(c, {"w"});
  CHECK(std::abs(t.estimate - stratified_plugin(c)) < 1e-3);
  // population value (1 - pw) q0 + pw q1 within sampling error
  CHECK(std::abs(t.estimate - ((1 - pw) * q[0] + pw * q[1])) < 3e-3);
  CHECK(std::abs(t.score) <= 1e-8);
  // the naive proportion is pulled toward the better-measured stratum
  CHECK(cumulative_incidence_empirical(c).estimate < t.estimate);
}

TEST_CASE("stage-I TMLE: independent missingness and score equation") {
  RngStream rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    Cohort c;
    c.covariate_names = {"age", "male"};
    for (int i = 0; i < 10000; ++i) {
      const double age = static_cast<double>(rng.uniform_int(0, 2));
      const double male = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const bool meas = rng.bernoulli(0.8);
      const double p = 0.02 + 0.02 * age + 0.01 * male;
      c.records.push_back(rec(i, false, meas, meas ? std::optional<bool>(rng.bernoulli(p)) : std::nullopt, {age, male}));
    }
    const auto t = cumulative_incidence_tmle(c, {"age", "male"});
    CHECK(std::abs(t.estimate - cumulative_incidence_empirical(c).estimate) < 0.005);
    CHECK(std::abs(t.score) <= 1e-8);
    CHECK(t.estimate >= 0.0);
    CHECK(t.estimate <= 1.0);
  }
}

TEST_CASE("stage-I TMLE truncates tiny missingness probabilities") {
  RngStream rng(4);
  Cohort c;
  c.covariate_names = {"w"};
  for (int i = 0; i < 4000; ++i) {
    const int w = i % 2;
    const bool meas = w == 0 ? rng.bernoulli(0.9) : rng.bernoulli(0.01);
    c.records.push_back(
        rec(i, false, meas, meas ? std::optional<bool>(rng.bernoulli(0.1 + 0.1 * w)) : std::nullopt, {double(w)}));
  }
  const auto t = cumulative_incidence_tmle(c, {"w"});
  CHECK(std::any_of(t.warnings.begin(), t.warnings.end(),
                    [](const std::string& s) { return s.find("truncated") != std::string::npos; }));
  CHECK(std::isfinite(t.estimate));
}

TEST_CASE("midpoint incidence rate") {
  Cohort c;
  c.records = {rec(1, false, true, true), rec(2, false, true, false)};
  const std::vector<double> fu{3.0, 3.0};
  CHECK(incidence_rate_midpoint(c, fu) == doctest::Approx(100.0 / 4.5));
  c.records[0].infected = false;
  CHECK(incidence_rate_midpoint(c, fu) == 0.0);
  const std::vector<double> zero{0.0, 3.0};
  CHECK_THROWS_AS(incidence_rate_midpoint(c, zero), std::invalid_argument);

  RngStream rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    auto f = two_stratum(rng, 100, 0.5, {0.8, 0.8}, {0.2, 0.2});
    std::vector<double> years;
    double py = 0, cases = 0;
    for (const auto& r : f.records) {
      years.push_back(rng.uniform(0.5, 3.5));
      if (r.censored || !r.measured) continue;
      py += *r.infected ? years.back() / 2 : years.back();
      cases += *r.infected;
    }
    CHECK(incidence_rate_midpoint(f, years) == doctest::Approx(100 * cases / py).epsilon(1e-13));
  }
}

TEST_CASE("Kaplan-Meier by hand") {
  const std::vector<double> ev{1.0}, cens{0.5, 2.0};
  const auto km = kaplan_meier(ev, cens, 2.0);
  CHECK(km.survival_at(1.0) == 0.5);
  CHECK(km.survival_at(0.99) == 1.0);
  CHECK(km.risk_at_horizon == 0.5);

  const std::vector<double> none{};
  const auto flat = kaplan_meier(none, cens, 5.0);
  CHECK(flat.survival_at(3.0) == 1.0);
  CHECK(flat.times.empty());
  CHECK_THROWS_AS(kaplan_meier(none, none, 1.0), std::invalid_argument);
  const std::vector<double> negative{-1.0};
  CHECK_THROWS_AS(kaplan_meier(negative, none, 1.0), std::invalid_argument);

  // ties: a censoring at an event time stays in the risk set
  const std::vector<double> e2{2.0}, c2{2.0};
  CHECK(kaplan_meier(e2, c2, 2.0).survival_at(2.0) == 0.5);
}

TEST_CASE("Kaplan-Meier without censoring is the empirical survival function") {
  RngStream rng(10);
  std::vector<double> ev;
  for (int i = 0; i < 97; ++i) ev.push_back(static_cast<double>(rng.uniform_int(0, 40)));
  const auto km = kaplan_meier(ev, {}, 40.0);
  for (double t = 0; t <= 40; t += 1) {
    const double surv = static_cast<double>(std::count_if(ev.begin(), ev.end(), [&](double x) { return x > t; })) / 97.0;
    CHECK(std::abs(km.survival_at(t) - surv) <= 1e-15);
  }
}

TEST_CASE("Kaplan-Meier against a day-by-day oracle") {
  RngStream rng(2025, {3});
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<int> ev, cens;
    std::vector<double> evd, censd;
    const auto n = rng.uniform_int(1, 60);
    for (int i = 0; i < n; ++i) {
      const int t = static_cast<int>(rng.uniform_int(0, 100));
      if (rng.bernoulli(0.5)) ev.push_back(t), evd.push_back(t);
      else cens.push_back(t), censd.push_back(t);
    }
    const int horizon = static_cast<int>(rng.uniform_int(0, 100));
    const auto km = kaplan_meier(evd, censd, horizon);
    for (int d = 0; d <= 100; d += 7) CHECK(std::abs(km.survival_at(d) - discrete_km(ev, cens, d)) <= 1e-12);
    CHECK(std::abs(km.risk_at_horizon - (1.0 - discrete_km(ev, cens, horizon))) <= 1e-12);
  }
}

TEST_CASE("Kaplan-Meier from cohort records") {
  Cohort c;
  auto a = rec(1, false, true, true);
  a.event_time = 1.0;
  auto b = rec(2, true, false, std::nullopt);
  b.censor_time = 0.5;
  auto d = rec(3, true, false, std::nullopt);
  d.censor_time = 2.0;
  c.records = {a, b, d};
  CHECK(kaplan_meier(c, 2.0).survival_at(1.0) == 0.5);
  c.records.push_back(rec(4, false, true, false));
  CHECK_THROWS_AS(kaplan_meier(c, 2.0), std::invalid_argument);
}

TEST_CASE("unsuppressed person-time: stated cases") {
  SuppressionRecord r;
  r.classification = SuppressionClass::baseline_pos;
  r.suppressed_at_baseline = true;
  r.suppressed_at_y3 = true;
  auto pt = unsuppressed_person_time(std::span(&r, 1));
  CHECK(pt.unsuppressed_days == 0);
  CHECK(pt.total_days == 1095);

  r.suppressed_at_baseline = false;
  r.art_start_date = 365;
  pt = unsuppressed_person_time(std::span(&r, 1));
  CHECK(pt.unsuppressed_days == 547);

  r.art_start_date = 1000;
  CHECK(unsuppressed_person_time(std::span(&r, 1)).unsuppressed_days == 1095);

  r.suppressed_at_y3 = false;
  r.art_start_date.reset();
  CHECK(unsuppressed_person_time(std::span(&r, 1)).unsuppressed_days == 1095);

  SuppressionRecord inc;
  inc.classification = SuppressionClass::incident;
  inc.suppressed_at_y3 = true;
  inc.art_start_date = 600;
  // infected at day 300, suppressed from day 782
  CHECK(unsuppressed_person_time(std::span(&inc, 1)).unsuppressed_days == 482);
  inc.suppressed_at_y3 = false;
  CHECK(unsuppressed_person_time(std::span(&inc, 1)).unsuppressed_days == 1095 - 547);

  SuppressionRecord mig;
  mig.classification = SuppressionClass::inmigrant_pos;
  mig.inmigration_date = 200;
  mig.outmigration_date = 900;
  pt = unsuppressed_person_time(std::span(&mig, 1));
  CHECK(pt.unsuppressed_days == 700);
  CHECK(pt.total_days == 700);
}

TEST_CASE("unsuppressed person-time: rule violations") {
  SuppressionRecord r;
  r.classification = SuppressionClass::incident;
  r.suppressed_at_y3 = true;
  CHECK_THROWS_WITH_AS(unsuppressed_person_time(std::span(&r, 1)), doctest::Contains("art_start_date"),
                       std::invalid_argument);
  r.art_start_date = 2000;
  CHECK_THROWS_WITH_AS(unsuppressed_person_time(std::span(&r, 1)), doctest::Contains("window_end"),
                       std::invalid_argument);
  SuppressionRecord b;
  b.classification = SuppressionClass::baseline_pos;
  CHECK_THROWS_AS(unsuppressed_person_time(std::span(&b, 1)), std::invalid_argument);
  SuppressionRecord m;
  m.classification = SuppressionClass::inmigrant_pos;
  CHECK_THROWS_AS(unsuppressed_person_time(std::span(&m, 1)), std::invalid_argument);
  SuppressionRecord i;
  i.classification = SuppressionClass::incident;
  i.suppressed_at_baseline = false;
  CHECK_THROWS_AS(unsuppressed_person_time(std::span(&i, 1)), std::invalid_argument);
}

TEST_CASE("unsuppressed person-time against a per-day oracle") {
  RngStream rng(1095, {1});
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<SuppressionRecord> rs;
    PersonTime expected;
    const auto n = rng.uniform_int(1, 12);
    for (int i = 0; i < n; ++i) {
      rs.push_back(random_suppression(rng, i));
      const auto d = daily_person_time(rs.back());
      expected.total_days += d.total_days;
      expected.unsuppressed_days += d.unsuppressed_days;
    }
    const auto pt = unsuppressed_person_time(rs);
    CHECK(pt.total_days == expected.total_days);
    CHECK(pt.unsuppressed_days == expected.unsuppressed_days);
    CHECK(pt.unsuppressed_days <= pt.total_days);
  }
}
