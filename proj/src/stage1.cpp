#include "crt/stage1.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crt/numkit.hpp"

namespace crt {

std::size_t Cohort::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) throw std::out_of_range("cohort: unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names.begin());
}

void validate_record(const IndividualRecord& r) {
  if (r.measured != r.infected.has_value()) {
    throw std::invalid_argument("record " + std::to_string(r.id) +
                                ": outcome must be present exactly when measured");
  }
  if (r.censored && r.measured) {
    throw std::invalid_argument("record " + std::to_string(r.id) + ": censored member marked measured");
  }
  if ((r.event_time && *r.event_time < 0) || (r.censor_time && *r.censor_time < 0)) {
    throw std::invalid_argument("record " + std::to_string(r.id) + ": negative time");
  }
}

namespace {

bool observed(const IndividualRecord& r) { return !r.censored && r.measured; }

}  // namespace

IncidenceEstimate cumulative_incidence_empirical(const Cohort& cohort) {
  std::size_t denom = 0;
  std::size_t cases = 0;
  for (const auto& r : cohort.records) {
    if (!observed(r)) continue;
    if (!r.infected) throw std::invalid_argument("record " + std::to_string(r.id) + ": measured without outcome");
    ++denom;
    cases += *r.infected ? 1 : 0;
  }
  if (denom == 0) throw std::domain_error("no measured uncensored members");
  return {static_cast<double>(cases) / static_cast<double>(denom), denom, {}};
}

Stage1TmleResult cumulative_incidence_tmle(const Cohort& cohort,
                                           const std::vector<std::string>& adjustment_vars,
                                           const Stage1TmleOptions& options) {
  const auto empirical = cumulative_incidence_empirical(cohort);
  Stage1TmleResult out;
  out.estimate = empirical.estimate;
  out.denominator = empirical.denominator;
  if (adjustment_vars.empty()) return out;
  if (empirical.estimate == 0.0 || empirical.estimate == 1.0) {
    out.warnings.push_back("outcome constant among measured members; returning empirical proportion");
    return out;
  }

  const auto n = static_cast<Eigen::Index>(cohort.records.size());
  const auto p = static_cast<Eigen::Index>(adjustment_vars.size()) + 1;
  std::vector<std::size_t> cols;
  for (const auto& v : adjustment_vars) cols.push_back(cohort.covariate_index(v));

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd obs(n), outcome(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = cohort.records[i];
    x(i, 0) = 1.0;
    for (Eigen::Index k = 1; k < p; ++k) x(i, k) = r.w.at(cols[k - 1]);
    obs(i) = observed(r) ? 1.0 : 0.0;
    outcome(i) = observed(r) && *r.infected ? 1.0 : 0.0;
  }
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(n);

  // Outcome regression among the measured: weight-zero rows drop out.
  Eigen::VectorXd q_coef;
  try {
    auto fit = fit_logistic(x, outcome, obs, zeros);
    if (!fit.converged) out.warnings.push_back("outcome regression did not converge");
    q_coef = fit.coefficients;
  } catch (const SingularFitError& e) {
    out.warnings.push_back(std::string("outcome regression singular, using intercept only: ") + e.what());
    q_coef = Eigen::VectorXd::Zero(p);
    q_coef(0) = logit(empirical.estimate);
  }

  Eigen::VectorXd g_coef;
  try {
    auto fit = fit_logistic(x, obs, Eigen::VectorXd::Ones(n), zeros);
    if (!fit.converged) out.warnings.push_back("missingness regression did not converge");
    g_coef = fit.coefficients;
  } catch (const SingularFitError& e) {
    out.warnings.push_back(std::string("missingness regression singular, using intercept only: ") + e.what());
    g_coef = Eigen::VectorXd::Zero(p);
    g_coef(0) = logit(static_cast<double>(empirical.denominator) / static_cast<double>(n));
  }

  Eigen::VectorXd logit_q(n), clever(n);
  bool truncated = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = bound_probability(expit(x.row(i).dot(q_coef)), options.q_bound);
    double g = expit(x.row(i).dot(g_coef));
    if (g < options.g_min) {
      g = options.g_min;
      truncated = true;
    }
    logit_q(i) = logit(q);
    clever(i) = 1.0 / g;
  }
  if (truncated) out.warnings.push_back("missingness probabilities truncated at g_min");

  auto fluct = fit_logistic(clever, outcome, obs, logit_q);
  double eps = fluct.coefficients(0);
  if (!fluct.converged) {
    out.warnings.push_back("fluctuation did not converge; using initial fit");
    eps = 0.0;
  }

  double total = 0.0;
  double score = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q_star = expit(logit_q(i) + eps * clever(i));
    total += q_star;
    if (obs(i) > 0) score += clever(i) * (outcome(i) - q_star);
  }
  out.estimate = total / static_cast<double>(n);
  out.epsilon = eps;
  out.score = score;
  return out;
}

double incidence_rate_midpoint(const Cohort& cohort, std::span<const double> followup_years) {
  if (followup_years.size() != cohort.records.size()) {
    throw std::invalid_argument("incidence_rate_midpoint: follow-up not aligned with records");
  }
  double person_years = 0.0;
  std::size_t cases = 0;
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& r = cohort.records[i];
    if (!observed(r)) continue;
    const double fu = followup_years[i];
    if (!(fu > 0.0)) throw std::invalid_argument("record " + std::to_string(r.id) + ": follow-up must be positive");
    if (*r.infected) {
      ++cases;
      person_years += 0.5 * fu;
    } else {
      person_years += fu;
    }
  }
  if (!(person_years > 0.0)) throw std::domain_error("incidence_rate_midpoint: zero person-time");
  return 100.0 * static_cast<double>(cases) / person_years;
}

double KaplanMeierCurve::survival_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KaplanMeierCurve kaplan_meier(std::span<const double> event_times,
                              std::span<const double> censor_times, double horizon) {
  const std::size_t total = event_times.size() + censor_times.size();
  if (total == 0) throw std::invalid_argument("kaplan_meier: no subjects");
  auto check = [](double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("kaplan_meier: times must be non-negative");
  };
  std::for_each(event_times.begin(), event_times.end(), check);
  std::for_each(censor_times.begin(), censor_times.end(), check);

  std::vector<double> events(event_times.begin(), event_times.end());
  std::vector<double> censors(censor_times.begin(), censor_times.end());
  std::sort(events.begin(), events.end());
  std::sort(censors.begin(), censors.end());

  KaplanMeierCurve km;
  km.horizon = horizon;
  std::size_t at_risk = total;
  std::size_t ci = 0;
  double s = 1.0;
  for (std::size_t ei = 0; ei < events.size();) {
    const double t = events[ei];
    // censorings strictly before t leave the risk set first
    while (ci < censors.size() && censors[ci] < t) {
      --at_risk;
      ++ci;
    }
    std::size_t d = 0;
    while (ei < events.size() && events[ei] == t) {
      ++d;
      ++ei;
    }
    s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    km.times.push_back(t);
    km.survival.push_back(s);
    km.at_risk.push_back(at_risk);
    km.events.push_back(d);
    at_risk -= d;
  }
  km.risk_at_horizon = 1.0 - km.survival_at(horizon);
  return km;
}

KaplanMeierCurve kaplan_meier(const Cohort& cohort, double horizon) {
  std::vector<double> events, censors;
  for (const auto& r : cohort.records) {
    if (r.event_time) {
      events.push_back(*r.event_time);
    } else if (r.censor_time) {
      censors.push_back(*r.censor_time);
    } else {
      throw std::invalid_argument("record " + std::to_string(r.id) + ": no event or censoring time");
    }
  }
  return kaplan_meier(events, censors, horizon);
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void rule_error(const SuppressionRecord& r, const std::string& rule) {
  throw std::invalid_argument("suppression record " + std::to_string(r.id) + ": " + rule);
}

int require_art(const SuppressionRecord& r, const char* rule) {
  if (!r.art_start_date) rule_error(r, rule);
  return *r.art_start_date;
}

}  // namespace

SuppressionIntervals suppression_intervals(const SuppressionRecord& r) {
  const int w = r.window_end;
  if (w < 0) rule_error(r, "window_end must be non-negative");
  for (const auto& d : {r.art_start_date, r.inmigration_date, r.outmigration_date, r.death_date}) {
    if (d && (*d < 0 || *d > w)) rule_error(r, "dates must lie within [0, window_end]");
  }

  SuppressionIntervals out;
  out.resident.begin = 0;
  if (r.classification == SuppressionClass::inmigrant_pos) {
    if (!r.inmigration_date) rule_error(r, "in-migrant requires inmigration_date");
    out.resident.begin = *r.inmigration_date;
  } else if (r.inmigration_date) {
    rule_error(r, "only in-migrants carry inmigration_date");
  }
  out.resident.end = w;
  if (r.outmigration_date) out.resident.end = std::min(out.resident.end, *r.outmigration_date);
  if (r.death_date) out.resident.end = std::min(out.resident.end, *r.death_date);
  out.resident.end = std::max(out.resident.end, out.resident.begin);

  const int lag_end = r.art_start_date ? std::min(*r.art_start_date + kArtSuppressionLagDays, w) : w;
  DayInterval u{0, 0};
  switch (r.classification) {
    case SuppressionClass::baseline_pos: {
      if (!r.suppressed_at_baseline) rule_error(r, "baseline positive requires suppressed_at_baseline");
      const bool base = *r.suppressed_at_baseline;
      if (base && r.suppressed_at_y3) {
        u = {0, 0};
      } else if (!base && r.suppressed_at_y3) {
        require_art(r, "baseline unsuppressed -> suppressed requires art_start_date");
        u = {0, lag_end};
      } else if (!base && !r.suppressed_at_y3) {
        u = {0, w};
      } else {
        // suppressed -> unsuppressed is not covered by the rules; assume
        // rebound at the midpoint of follow-up
        u = {w / 2, w};
      }
      break;
    }
    case SuppressionClass::incident: {
      if (r.suppressed_at_baseline) rule_error(r, "incident infection cannot carry suppressed_at_baseline");
      if (r.suppressed_at_y3) {
        const int art = require_art(r, "incident suppressed at year 3 requires art_start_date");
        u = {art / 2, lag_end};
      } else {
        u = {w / 2, w};
      }
      break;
    }
    case SuppressionClass::inmigrant_pos: {
      if (r.suppressed_at_y3) {
        require_art(r, "in-migrant suppressed at year 3 requires art_start_date");
        u = {*r.inmigration_date, lag_end};
      } else {
        u = {*r.inmigration_date, w};
      }
      break;
    }
    case SuppressionClass::missing_baseline_pos:
      u = r.suppressed_at_y3 ? DayInterval{0, 0} : DayInterval{0, w};
      break;
    case SuppressionClass::hiv_negative:
      u = {0, 0};
      break;
  }
  out.unsuppressed.begin = std::max(u.begin, out.resident.begin);
  out.unsuppressed.end = std::max(std::min(u.end, out.resident.end), out.unsuppressed.begin);
  return out;
}

PersonTime unsuppressed_person_time(std::span<const SuppressionRecord> records) {
  PersonTime pt;
  for (const auto& r : records) {
    const auto iv = suppression_intervals(r);
    pt.total_days += iv.resident.end - iv.resident.begin;
    pt.unsuppressed_days += iv.unsuppressed.end - iv.unsuppressed.begin;
  }
  return pt;
}

}  // namespace crt
