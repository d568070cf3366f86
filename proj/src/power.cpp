#include "crt/power.hpp"

#include <cmath>
#include <stdexcept>

#include "crt/distributions.hpp"

namespace crt {

void validate(const PowerSpec& s) {
  if (!(s.pairs >= 2)) throw std::invalid_argument("power: pairs must be at least 2");
  if (!(s.m > 0)) throw std::invalid_argument("power: m must be positive");
  if (!(s.pi0 > 0 && s.pi0 < 1)) throw std::invalid_argument("power: pi0 must lie in (0,1)");
  if (!(s.km >= 0)) throw std::invalid_argument("power: km must be non-negative");
  if (!(s.alpha > 0 && s.alpha < 1)) throw std::invalid_argument("power: alpha must lie in (0,1)");
  if (!(s.power > 0 && s.power < 1)) throw std::invalid_argument("power: power must lie in (0,1)");
}

double pairs_required(const PowerSpec& s, double pi1) {
  if (!(pi1 >= 0 && pi1 < s.pi0)) throw std::invalid_argument("pairs_required: need 0 <= pi1 < pi0");
  const double z = normal_quantile(1.0 - s.alpha / 2.0) + normal_quantile(s.power);
  const double binomial = (s.pi0 * (1.0 - s.pi0) + pi1 * (1.0 - pi1)) / s.m;
  const double between = s.km * s.km * (s.pi0 * s.pi0 + pi1 * pi1);
  const double diff = s.pi0 - pi1;
  return 2.0 + z * z * (binomial + between) / (diff * diff);
}

double detectable_reduction(const PowerSpec& s) {
  validate(s);
  auto needed = [&](double r) { return pairs_required(s, s.pi0 * (1.0 - r)); };
  // pairs_required decreases in r for pi0 < 1/2
  double lo = 0.0;
  double hi = 1.0;
  if (needed(hi) > s.pairs) throw std::domain_error("underpowered design");
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (needed(mid) <= s.pairs ? hi : lo) = mid;
  }
  return hi;
}

DropPairTradeoff drop_pair_tradeoff(const PowerSpec& s, double km_reduced) {
  if (!(km_reduced >= 0 && km_reduced <= s.km)) {
    throw std::invalid_argument("drop_pair_tradeoff: km_reduced must lie in [0, km]");
  }
  PowerSpec dropped = s;
  dropped.pairs = s.pairs - 1;
  dropped.km = km_reduced;
  return {detectable_reduction(s), detectable_reduction(dropped)};
}

}  // namespace crt
