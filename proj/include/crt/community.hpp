#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace crt {

/// One cluster as seen by the community-level analysis: identifiers, named
/// baseline covariates E, arm A, the Stage-I outcome Y and its weight.
struct CommunityRecord {
  int id = 0;
  std::string region;
  int pair_id = -1;
  std::map<std::string, double> covariates;
  int arm = -1;  // 1 intervention, 0 control, -1 unassigned
  double y = std::numeric_limits<double>::quiet_NaN();
  double denominator = 0.0;  // Stage-I denominator (measured cohort size)
  double weight = 1.0;

  /// Throws std::out_of_range naming the covariate if it is absent.
  [[nodiscard]] double covariate(const std::string& name) const;
};

using Communities = std::vector<CommunityRecord>;

}  // namespace crt
