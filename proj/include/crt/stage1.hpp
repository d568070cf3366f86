#pragma once

// Community-level outcome estimation from individual cohort records.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crt {

/// One incidence-cohort member: baseline covariates W, censoring C,
/// measurement Delta and the outcome I (present only when measured).
struct IndividualRecord {
  std::int64_t id = 0;
  int community_id = 0;
  std::vector<double> w;  // values aligned with Cohort::covariate_names
  bool censored = false;
  bool measured = false;
  std::optional<bool> infected;
  std::optional<double> event_time;   // days, survival outcomes only
  std::optional<double> censor_time;  // days
};

struct Cohort {
  std::vector<std::string> covariate_names;
  std::vector<IndividualRecord> records;

  /// Column index of a named covariate; throws std::out_of_range.
  [[nodiscard]] std::size_t covariate_index(const std::string& name) const;
};

/// Throws std::invalid_argument when the record breaks the
/// "I present iff measured" or "censored implies unmeasured" rules.
void validate_record(const IndividualRecord& r);

struct IncidenceEstimate {
  double estimate = 0.0;
  std::size_t denominator = 0;  // measured, uncensored members
  std::vector<std::string> warnings;
};

/// Proportion infected among members with C=0 and Delta=1.
IncidenceEstimate cumulative_incidence_empirical(const Cohort& cohort);

struct Stage1TmleOptions {
  double g_min = 0.025;  // lower bound on P(C=0, Delta=1 | W)
  double q_bound = 1e-8;
};

struct Stage1TmleResult : IncidenceEstimate {
  double epsilon = 0.0;  // fluctuation coefficient
  /// Sum over measured members of (I - targeted prediction) / g(W).
  double score = 0.0;
};

/// TMLE of E_W E[I | C=0, Delta=1, W] with main-terms logistic outcome and
/// missingness regressions on `adjustment_vars`. An empty adjustment set
/// returns the empirical proportion.
Stage1TmleResult cumulative_incidence_tmle(const Cohort& cohort,
                                           const std::vector<std::string>& adjustment_vars,
                                           const Stage1TmleOptions& options = {});

/// Infections per 100 person-years among measured, uncensored members.
/// `followup_years` is aligned with cohort.records; seroconverters contribute
/// half of their interval.
double incidence_rate_midpoint(const Cohort& cohort, std::span<const double> followup_years);

struct KaplanMeierCurve {
  std::vector<double> times;     // distinct event times, ascending
  std::vector<double> survival;  // S just after each time
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;
  double horizon = 0.0;
  double risk_at_horizon = 0.0;  // 1 - S(horizon)

  /// Right-continuous step function S(t).
  [[nodiscard]] double survival_at(double t) const;
};

/// Product-limit estimator. At tied times events are counted before
/// censorings, so subjects censored at t are still at risk at t.
KaplanMeierCurve kaplan_meier(std::span<const double> event_times,
                              std::span<const double> censor_times, double horizon);

/// Kaplan-Meier over cohort records carrying event_time / censor_time.
KaplanMeierCurve kaplan_meier(const Cohort& cohort, double horizon);

// ---------------------------------------------------------------------------
// Unsuppressed person-time.

enum class SuppressionClass {
  baseline_pos,
  incident,
  inmigrant_pos,
  missing_baseline_pos,
  hiv_negative,  // contributes person-time only
};

/// Days are counted from the start of the baseline campaign.
struct SuppressionRecord {
  std::int64_t id = 0;
  SuppressionClass classification = SuppressionClass::baseline_pos;
  std::optional<bool> suppressed_at_baseline;
  bool suppressed_at_y3 = false;
  std::optional<int> art_start_date;
  std::optional<int> inmigration_date;
  std::optional<int> outmigration_date;
  std::optional<int> death_date;
  int window_end = 1095;
};

inline constexpr int kArtSuppressionLagDays = 182;

struct PersonTime {
  long long unsuppressed_days = 0;
  long long total_days = 0;
  [[nodiscard]] double proportion() const {
    return total_days > 0 ? static_cast<double>(unsuppressed_days) / static_cast<double>(total_days) : 0.0;
  }
};

/// Half-open day interval [begin, end).
struct DayInterval {
  int begin = 0;
  int end = 0;
};

/// Resident interval and assumed unsuppressed interval for one record.
/// Throws std::invalid_argument naming the violated rule.
struct SuppressionIntervals {
  DayInterval resident;
  DayInterval unsuppressed;
};
SuppressionIntervals suppression_intervals(const SuppressionRecord& record);

PersonTime unsuppressed_person_time(std::span<const SuppressionRecord> records);

}  // namespace crt
