#include "crt/distributions.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <stdexcept>

namespace crt {

namespace {

constexpr double kNormalLimitDf = 1e12;

void check_probability(double p, const char* who) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error(std::string(who) + ": probability must lie in (0,1)");
  }
}

void check_df(double df, const char* who) {
  if (!(df > 0.0)) throw std::domain_error(std::string(who) + ": df must be positive");
}

}  // namespace

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
  check_probability(p, "normal_quantile");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double t_cdf(double x, double df) {
  check_df(df, "t_cdf");
  if (df >= kNormalLimitDf) return normal_cdf(x);
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}

double t_quantile(double p, double df) {
  check_probability(p, "t_quantile");
  check_df(df, "t_quantile");
  if (df >= kNormalLimitDf) return normal_quantile(p);
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

double t_two_sided_p(double statistic, double df) {
  check_df(df, "t_two_sided_p");
  if (std::isnan(statistic)) return 1.0;
  const double tail = df >= kNormalLimitDf
                          ? 0.5 * std::erfc(std::abs(statistic) / std::sqrt(2.0))
                          : boost::math::cdf(boost::math::complement(
                                boost::math::students_t_distribution<double>(df),
                                std::abs(statistic)));
  return std::min(1.0, 2.0 * tail);
}

}  // namespace crt
