#include "crt/matchpairs.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <unordered_map>

namespace crt {

double CommunityRecord::covariate(const std::string& name) const {
  auto it = covariates.find(name);
  if (it == covariates.end()) {
    throw std::out_of_range("community " + std::to_string(id) + ": missing covariate '" + name + "'");
  }
  return it->second;
}

Eigen::VectorXd pool_scales(const Communities& communities,
                            const std::vector<std::string>& match_vars) {
  const auto n = static_cast<Eigen::Index>(communities.size());
  const auto k = static_cast<Eigen::Index>(match_vars.size());
  if (n < 2) throw std::invalid_argument("pool_scales: need at least two communities");
  Eigen::MatrixXd values(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index v = 0; v < k; ++v) values(i, v) = communities[i].covariate(match_vars[v]);
  }
  const Eigen::RowVectorXd mean = values.colwise().mean();
  return ((values.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1))
      .cwiseSqrt()
      .transpose();
}

std::vector<std::pair<int, int>> min_cost_perfect_matching(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("matching: cost matrix not square");
  if (n % 2 != 0) throw std::invalid_argument("matching: odd number of items");
  if (n > kMaxRegionSize) throw std::invalid_argument("matching: more than 16 items");
  if (n == 0) return {};

  const std::uint32_t full = (1u << n) - 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best(full + 1, kInf);
  std::vector<std::int8_t> partner(full + 1, -1);
  best[0] = 0.0;

  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    if (std::popcount(mask) % 2 != 0) continue;
    const int i = std::countr_zero(mask);
    const std::uint32_t rest = mask & ~(1u << i);
    double best_cost = kInf;
    int best_j = -1;
    for (int j = i + 1; j < n; ++j) {
      if (!(rest & (1u << j))) continue;
      const double c = cost(i, j) + best[rest & ~(1u << j)];
      // near-equal totals count as ties; the smaller partner index is kept
      if (best_j < 0 || c < best_cost - 1e-12 * (1.0 + std::abs(best_cost))) {
        best_cost = c;
        best_j = j;
      }
    }
    best[mask] = best_cost;
    partner[mask] = static_cast<std::int8_t>(best_j);
  }

  std::vector<std::pair<int, int>> out;
  for (std::uint32_t mask = full; mask != 0;) {
    const int i = std::countr_zero(mask);
    const int j = partner[mask];
    out.emplace_back(i, j);
    mask &= ~((1u << i) | (1u << j));
  }
  return out;
}

MatchedPairing optimal_pairs_within_region(const Communities& communities,
                                           const std::vector<std::string>& match_vars) {
  return optimal_pairs_within_region(communities, match_vars, pool_scales(communities, match_vars));
}

MatchedPairing optimal_pairs_within_region(const Communities& communities,
                                           const std::vector<std::string>& match_vars,
                                           const Eigen::VectorXd& scales) {
  std::map<std::string, std::vector<const CommunityRecord*>> by_region;
  for (const auto& c : communities) by_region[c.region].push_back(&c);

  MatchedPairing out;
  for (auto& [region, members] : by_region) {
    const int n = static_cast<int>(members.size());
    if (n % 2 != 0) {
      throw std::invalid_argument("region '" + region + "' has an odd number of communities (" +
                                  std::to_string(n) + ")");
    }
    if (n > kMaxRegionSize) {
      throw std::invalid_argument("region '" + region + "' has " + std::to_string(n) +
                                  " communities; exact matching supports at most 16");
    }
    std::sort(members.begin(), members.end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });
    for (int i = 1; i < n; ++i) {
      if (members[i]->id == members[i - 1]->id) {
        throw std::invalid_argument("duplicate community id " + std::to_string(members[i]->id));
      }
    }

    const auto k = static_cast<Eigen::Index>(match_vars.size());
    Eigen::MatrixXd values(n, k);
    for (int i = 0; i < n; ++i) {
      for (Eigen::Index v = 0; v < k; ++v) values(i, v) = members[i]->covariate(match_vars[v]);
    }
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        cost(i, j) = cost(j, i) =
            covariate_distance(values.row(i).transpose(), values.row(j).transpose(), scales);
      }
    }
    for (auto [i, j] : min_cost_perfect_matching(cost)) {
      out.pairs.emplace_back(members[i]->id, members[j]->id);
      out.regions.push_back(region);
      out.pair_distance.push_back(cost(i, j));
      out.total_distance += cost(i, j);
    }
  }
  return out;
}

std::vector<double> pair_discrepancy(const MatchedPairing& pairing,
                                     const Communities& communities, const std::string& var) {
  std::unordered_map<int, const CommunityRecord*> by_id;
  for (const auto& c : communities) by_id[c.id] = &c;
  auto lookup = [&](int id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::out_of_range("pair_discrepancy: unknown community " + std::to_string(id));
    return it->second;
  };
  std::vector<double> out;
  out.reserve(pairing.pairs.size());
  for (auto [a, b] : pairing.pairs) {
    out.push_back(std::abs(lookup(a)->covariate(var) - lookup(b)->covariate(var)));
  }
  return out;
}

void assign_pair_ids(const MatchedPairing& pairing, Communities& communities) {
  std::unordered_map<int, int> pair_of;
  for (std::size_t k = 0; k < pairing.pairs.size(); ++k) {
    pair_of[pairing.pairs[k].first] = static_cast<int>(k) + 1;
    pair_of[pairing.pairs[k].second] = static_cast<int>(k) + 1;
  }
  for (auto& c : communities) {
    auto it = pair_of.find(c.id);
    c.pair_id = it == pair_of.end() ? -1 : it->second;
  }
}

}  // namespace crt
