#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crt/matchpairs.hpp"
#include "crt/rng.hpp"
#include "oracles.hpp"

using namespace crt;
using namespace crt::oracle;

namespace {

Communities random_region(RngStream& rng, int n, const std::string& region, int first_id) {
  Communities out;
  for (int i = 0; i < n; ++i) {
    CommunityRecord c;
    c.id = first_id + i;
    c.region = region;
    c.covariates["E4"] = rng.normal();
    c.covariates["E7"] = rng.normal();
    c.covariates["baseline_prevalence"] = rng.uniform(0.03, 0.2);
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_CASE("enumeration sanity") {
  CHECK(all_matchings(8).size() == 105);
  CHECK(all_matchings(6).size() == 15);
}

TEST_CASE("covariate distance") {
  Eigen::Vector2d a(1, 0), b(0, 0), s(1, 1);
  CHECK(covariate_distance(a, a, s) == 0.0);
  CHECK(covariate_distance(a, b, s) == 1.0);
  RngStream rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal()), y(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector3d sc(rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2));
    double ss = 0;
    for (int k = 0; k < 3; ++k) ss += std::pow((x(k) - y(k)) / sc(k), 2);
    CHECK(std::abs(covariate_distance(x, y, sc) - std::sqrt(ss)) < 1e-14);
  }
  CHECK_THROWS_AS(covariate_distance(a, b, Eigen::Vector2d(1, 0)), std::invalid_argument);
}

TEST_CASE("dp matching equals exhaustive enumeration") {
  RngStream rng(2024, {7});
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 * static_cast<int>(rng.uniform_int(1, 4));
    Eigen::MatrixXd pts(n, 2);
    for (int i = 0; i < n; ++i) pts.row(i) << rng.normal(), rng.normal();
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cost(i, j) = (pts.row(i) - pts.row(j)).norm();
    }
    CHECK(min_cost_perfect_matching(cost) == brute_force(cost));
  }
}

TEST_CASE("dp tie-break is lexicographic") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(6, 6);
  CHECK(min_cost_perfect_matching(cost) == Pairs{{0, 1}, {2, 3}, {4, 5}});
  // two optimal matchings: {01,23} and {02,13}
  Eigen::MatrixXd c2(4, 4);
  c2 << 0, 1, 1, 5, 1, 0, 5, 1, 1, 5, 0, 1, 5, 1, 1, 0;
  CHECK(min_cost_perfect_matching(c2) == Pairs{{0, 1}, {2, 3}});
}

TEST_CASE("dp beats random perfect matchings") {
  RngStream rng(5, {1});
  const int n = 12;
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd pts(n, 2);
    for (int i = 0; i < n; ++i) pts.row(i) << rng.normal(), rng.normal();
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cost(i, j) = (pts.row(i) - pts.row(j)).norm();
    }
    const double best = total(cost, min_cost_perfect_matching(cost));
    std::vector<int> perm(n);
    for (int trial = 0; trial < 1000; ++trial) {
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      double t = 0;
      for (int i = 0; i < n; i += 2) t += cost(perm[i], perm[i + 1]);
      CHECK(best <= t + 1e-12);
    }
  }
}

TEST_CASE("matching within regions") {
  RngStream rng(77);
  auto cs = random_region(rng, 4, "North", 0);
  auto south = random_region(rng, 6, "South", 10);
  auto east = random_region(rng, 2, "East", 20);
  cs.insert(cs.end(), south.begin(), south.end());
  cs.insert(cs.end(), east.begin(), east.end());
  std::reverse(cs.begin(), cs.end());

  const auto p = optimal_pairs_within_region(cs, {"E4", "E7"});
  REQUIRE(p.pairs.size() == 6);
  // regions in name order
  CHECK(p.regions == std::vector<std::string>{"East", "North", "North", "South", "South", "South"});
  CHECK(p.pairs[0] == std::pair{20, 21});
  double sum = 0;
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    CHECK(p.pairs[k].first < p.pairs[k].second);
    sum += p.pair_distance[k];
  }
  CHECK(std::abs(sum - p.total_distance) < 1e-12);

  // pool scales are the sample standard deviations
  const auto s = pool_scales(cs, {"E4"});
  double mean = 0, ss = 0;
  for (const auto& c : cs) mean += c.covariate("E4") / cs.size();
  for (const auto& c : cs) ss += std::pow(c.covariate("E4") - mean, 2);
  CHECK(std::abs(s(0) - std::sqrt(ss / (cs.size() - 1))) < 1e-14);

  // each region matches its own brute force
  const auto scales = pool_scales(cs, {"E4", "E7"});
  Communities sorted_south = south;
  Eigen::MatrixXd cost(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      Eigen::Vector2d a(south[i].covariate("E4"), south[i].covariate("E7"));
      Eigen::Vector2d b(south[j].covariate("E4"), south[j].covariate("E7"));
      cost(i, j) = covariate_distance(a, b, scales);
    }
  }
  const auto bf = brute_force(cost);
  for (std::size_t k = 0; k < bf.size(); ++k) {
    CHECK(p.pairs[3 + k] == std::pair{south[bf[k].first].id, south[bf[k].second].id});
  }
}

TEST_CASE("matching toy file") {
  Communities cs;
  for (auto [id, e4] : std::vector<std::pair<int, double>>{{1, 0.0}, {2, 10.0}, {3, 0.1}, {4, 10.2}}) {
    CommunityRecord c;
    c.id = id;
    c.region = "R";
    c.covariates["E4"] = e4;
    cs.push_back(c);
  }
  const auto p = optimal_pairs_within_region(cs, {"E4"}, Eigen::VectorXd::Ones(1));
  CHECK(p.pairs == Pairs{{1, 3}, {2, 4}});
  CHECK(p.pair_distance[0] == doctest::Approx(0.1));
  CHECK(p.pair_distance[1] == doctest::Approx(0.2));
}

TEST_CASE("matching errors") {
  RngStream rng(1);
  auto odd = random_region(rng, 3, "A", 0);
  CHECK_THROWS_WITH_AS(optimal_pairs_within_region(odd, {"E4"}), doctest::Contains("odd"), std::invalid_argument);
  auto big = random_region(rng, 18, "A", 0);
  CHECK_THROWS_AS(optimal_pairs_within_region(big, {"E4"}), std::invalid_argument);
  auto dup = random_region(rng, 4, "A", 0);
  dup[1].id = dup[0].id;
  CHECK_THROWS_WITH_AS(optimal_pairs_within_region(dup, {"E4"}), doctest::Contains("duplicate"),
                       std::invalid_argument);
  auto ok = random_region(rng, 4, "A", 0);
  CHECK_THROWS_AS(optimal_pairs_within_region(ok, {"nope"}), std::out_of_range);
}

TEST_CASE("16-community region is accepted") {
  RngStream rng(9);
  const auto cs = random_region(rng, 16, "Big", 0);
  const auto p = optimal_pairs_within_region(cs, {"E4", "E7"});
  CHECK(p.pairs.size() == 8);
}

TEST_CASE("pair discrepancy and pair ids") {
  RngStream rng(3);
  auto cs = random_region(rng, 8, "A", 100);
  cs[0].covariates["baseline_prevalence"] = 0.10;
  const auto p = optimal_pairs_within_region(cs, {"E4", "E7"});
  const auto d = pair_discrepancy(p, cs, "baseline_prevalence");
  REQUIRE(d.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& a = *std::find_if(cs.begin(), cs.end(), [&](auto& c) { return c.id == p.pairs[k].first; });
    const auto& b = *std::find_if(cs.begin(), cs.end(), [&](auto& c) { return c.id == p.pairs[k].second; });
    CHECK(d[k] == std::abs(a.covariate("baseline_prevalence") - b.covariate("baseline_prevalence")));
  }

  Communities two(2);
  two[0].id = 1, two[1].id = 2;
  two[0].covariates["v"] = 0.10, two[1].covariates["v"] = 0.06;
  MatchedPairing one{{{1, 2}}, {"R"}, {0.0}, 0.0};
  CHECK(pair_discrepancy(one, two, "v")[0] == doctest::Approx(0.04).epsilon(1e-12));
  two[1].covariates["v"] = 0.10;
  CHECK(pair_discrepancy(one, two, "v")[0] == 0.0);

  assign_pair_ids(p, cs);
  for (const auto& c : cs) {
    REQUIRE(c.pair_id >= 1);
    const auto& pr = p.pairs[c.pair_id - 1];
    CHECK((pr.first == c.id || pr.second == c.id));
  }
}
