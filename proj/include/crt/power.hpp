#pragma once

// Sample size and detectable effect for pair-matched cluster randomized
// trials with a binary outcome (Hayes & Moulton, matched design).

#include <utility>
#include <vector>

namespace crt {

struct PowerSpec {
  double pairs = 16;
  double m = 2700;      // individuals per community with outcome measured
  double pi0 = 0.01;    // control-arm cumulative incidence
  double km = 0.4;      // matched-pair coefficient of variation
  double alpha = 0.05;  // two-sided
  double power = 0.8;
};

/// Throws std::invalid_argument for out-of-range fields.
void validate(const PowerSpec& spec);

/// Number of pairs needed to detect pi1 (unrounded). `spec.pairs` is ignored.
double pairs_required(const PowerSpec& spec, double pi1);

/// Smallest relative reduction r with pairs_required(pi0 (1 - r)) <= pairs.
/// Throws std::domain_error("underpowered design") when none exists.
double detectable_reduction(const PowerSpec& spec);

struct DropPairTradeoff {
  double r_full = 0.0;     // all pairs at km
  double r_dropped = 0.0;  // one pair fewer at km_reduced
};
DropPairTradeoff drop_pair_tradeoff(const PowerSpec& spec, double km_reduced);

}  // namespace crt
