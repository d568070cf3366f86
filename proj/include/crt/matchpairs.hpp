#pragma once

// Exact minimum-distance pair matching of communities within region.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crt/community.hpp"

namespace crt {

struct MatchedPairing {
  std::vector<std::pair<int, int>> pairs;  // community ids, smaller id first
  std::vector<std::string> regions;        // region of each pair
  std::vector<double> pair_distance;
  double total_distance = 0.0;
};

/// Largest region the exact matcher accepts.
inline constexpr int kMaxRegionSize = 16;

/// Euclidean distance between componentwise-standardized covariate vectors.
template <typename DerivedA, typename DerivedB, typename DerivedS>
typename DerivedA::Scalar covariate_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b,
                                             const Eigen::MatrixBase<DerivedS>& scales) {
  if (a.size() != b.size() || a.size() != scales.size()) {
    throw std::invalid_argument("covariate_distance: length mismatch");
  }
  if ((scales.array() <= 0).any()) {
    throw std::invalid_argument("covariate_distance: scales must be positive");
  }
  return ((a - b).array() / scales.array()).matrix().norm();
}

/// Sample standard deviation (n-1) of each variable across `communities`.
Eigen::VectorXd pool_scales(const Communities& communities,
                            const std::vector<std::string>& match_vars);

/// Minimum-total-cost perfect matching of the items 0..n-1 under the
/// symmetric cost matrix, by dynamic programming over subsets. Among optima
/// the lexicographically smallest pair list wins. n must be even and at most
/// kMaxRegionSize.
std::vector<std::pair<int, int>> min_cost_perfect_matching(const Eigen::MatrixXd& cost);

/// Pairs communities within each region to minimize the summed standardized
/// distance on `match_vars`. Scales default to the pool standard deviations.
/// Regions are processed in name order; within a region pairs are ordered
/// by their smaller id.
MatchedPairing optimal_pairs_within_region(const Communities& communities,
                                           const std::vector<std::string>& match_vars);
MatchedPairing optimal_pairs_within_region(const Communities& communities,
                                           const std::vector<std::string>& match_vars,
                                           const Eigen::VectorXd& scales);

/// |difference| of `var` between the two members of each pair, in pairing order.
std::vector<double> pair_discrepancy(const MatchedPairing& pairing,
                                     const Communities& communities, const std::string& var);

/// Writes pair_id (1-based, pairing order) into each community record.
void assign_pair_ids(const MatchedPairing& pairing, Communities& communities);

}  // namespace crt
