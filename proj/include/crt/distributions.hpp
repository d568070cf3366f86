#pragma once

namespace crt {

// Standard normal and Student's t distribution functions.

double normal_cdf(double x);
/// Inverse standard normal CDF; p must lie in (0,1).
double normal_quantile(double p);

double t_cdf(double x, double df);
/// Inverse CDF of Student's t with `df` degrees of freedom; p in (0,1).
/// Non-finite or huge df falls back to the normal quantile.
double t_quantile(double p, double df);

/// Two-sided p-value of a t statistic.
double t_two_sided_p(double statistic, double df);

}  // namespace crt
