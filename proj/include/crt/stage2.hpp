#pragma once

// Community-level effect estimation for pair-matched trials: the unadjusted
// ratio of arm means, the targeted (TMLE) substitution estimator with
// influence-curve inference, adaptive selection of the adjustment variables
// by leave-one-pair-out cross-validation, and the pre-specified sensitivity
// analyses.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "crt/community.hpp"

namespace crt {

inline const std::string kBaselinePrevalence = "baseline_prevalence";
inline const std::string kMcCoverage = "mc_coverage";
/// Pseudo-covariate expanding to region indicator columns.
inline const std::string kRegion = "region";

struct CandidateScore {
  std::optional<std::string> q_var;
  std::optional<std::string> g_var;
  double cv_variance = std::numeric_limits<double>::infinity();
  std::string failure;  // empty when every fold fit
};

struct EffectEstimate {
  std::string estimator;
  double psi1 = 0.0;
  double psi0 = 0.0;
  double ratio = 0.0;
  double log_ratio = 0.0;
  double log_se = 0.0;
  double t_statistic = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_value = 1.0;
  int df = 0;
  double abs_difference = 0.0;
  double abs_se = 0.0;
  double abs_ci_lower = 0.0;
  double abs_ci_upper = 0.0;
  std::optional<std::string> selected_q_var;
  std::optional<std::string> selected_g_var;
  /// Independent units (pair ids, or community ids when the match is broken).
  std::vector<int> unit_ids;
  std::vector<double> unit_ic1;  // IC(1; unit)
  std::vector<double> unit_ic0;  // IC(0; unit)
  std::vector<double> pair_ic;   // IC of the log ratio per unit
  double epsilon1 = 0.0;
  double epsilon0 = 0.0;
  std::vector<CandidateScore> candidates;
  std::optional<int> dropped_pair;
  std::vector<std::string> warnings;
};

struct Stage2Options {
  double alpha = 0.05;
  double g_bound = 0.05;  // P(A|E) truncated to [g_bound, 1-g_bound]
};

/// Ratio of weighted arm means with influence-curve inference on pairs.
EffectEstimate unadjusted_effect(const Communities& communities, const Stage2Options& opts = {});

/// TMLE of psi(1)/psi(0) adjusting the outcome regression for `q_var` and
/// the exposure mechanism for `g_var` (each optional).
EffectEstimate tmle_effect(const Communities& communities, const std::optional<std::string>& q_var,
                           const std::optional<std::string>& g_var, const Stage2Options& opts = {});

/// Selects (q_var, g_var) by leave-one-pair-out cross-validated IC variance,
/// then returns tmle_effect with the selection recorded. The intercept-only
/// choice is always a candidate and wins ties.
EffectEstimate adaptive_prespec(const Communities& communities,
                                const std::vector<std::string>& q_candidates = {kBaselinePrevalence,
                                                                                kMcCoverage},
                                const std::vector<std::string>& g_candidates = {kBaselinePrevalence,
                                                                                kMcCoverage},
                                const Stage2Options& opts = {});

/// Drops the pair with the largest within-pair discrepancy on `var` and
/// reruns adaptive_prespec on the remaining pairs.
EffectEstimate drop_pair_sensitivity(const Communities& communities, const std::string& var,
                                     const Stage2Options& opts = {});

/// Treats communities as the independent units: leave-one-community-out
/// selection over candidates including region, community-level ICs and
/// df = J - 2.
EffectEstimate break_match_effect(const Communities& communities,
                                  const std::vector<std::string>& candidates = {kBaselinePrevalence,
                                                                                kMcCoverage, kRegion},
                                  const Stage2Options& opts = {});

/// Cross-validated IC variance of one candidate (leave one pair out, or one
/// community out when `paired` is false). Infinite when any fold fails.
CandidateScore cv_variance(const Communities& communities, const std::optional<std::string>& q_var,
                           const std::optional<std::string>& g_var, bool paired,
                           const Stage2Options& opts = {});

/// Throws std::invalid_argument unless every pair_id has exactly one
/// intervention and one control community, Y in [0,1] and weights > 0.
void validate_pairs(const Communities& communities);

}  // namespace crt
