#pragma once

// Simulate -> match -> randomize -> Stage I -> Stage II, as used by the
// command-line tools and the Monte-Carlo replicate runner.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crt/community.hpp"
#include "crt/matchpairs.hpp"
#include "crt/stage1.hpp"
#include "crt/stage2.hpp"
#include "crt/trialsim.hpp"

namespace crt {

/// Covariates the simulated trials are matched on.
inline const std::vector<std::string> kMatchVars{"E4", "E7"};

struct TrialTruth {
  double psi1 = 0.0;
  double psi0 = 0.0;
  double ratio = 0.0;
  double km = 0.0;
};

struct TrialDataset {
  std::string scenario;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  double size_scale = 1.0;
  Communities communities;  // observed: covariates, pair, arm, Stage-I y
  Cohort individuals;       // observed incidence cohorts, all communities
  MatchedPairing pairing;
  TrialTruth truth;
};

/// Replicate `replicate` of a trial under `config`, driven by
/// RngStream(seed, {replicate}).
TrialDataset simulate_trial(const ScenarioConfig& config, std::uint64_t seed, std::uint64_t replicate);

enum class Estimator { adaptive, unadjusted, tmle, drop_pair, break_match };
enum class Weighting { equal, size };
enum class Stage1Method { empirical, tmle };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& s);

struct AnalysisOptions {
  Estimator estimator = Estimator::adaptive;
  std::optional<std::string> q_var;  // Estimator::tmle only
  std::optional<std::string> g_var;
  std::string drop_var = kBaselinePrevalence;
  Weighting weighting = Weighting::equal;
  Stage1Method stage1 = Stage1Method::empirical;
  std::vector<std::string> stage1_vars;
  Stage2Options stage2;
};

/// Recomputes each community's Stage-I outcome from `individuals`, sets the
/// weights and runs the requested Stage-II estimator.
EffectEstimate analyze(Communities communities, const Cohort& individuals, const AnalysisOptions& options);

/// Stage-I outcome per community id.
std::map<int, IncidenceEstimate> stage1_outcomes(const Cohort& individuals, const AnalysisOptions& options);

void write_dataset(const std::filesystem::path& dir, const TrialDataset& data);
/// Reads communities.csv, individuals.csv and (if present) truth.json.
TrialDataset read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const EffectEstimate& e);
nlohmann::json to_json(const TrialTruth& t);

// ---------------------------------------------------------------------------
// Monte-Carlo replication.

struct ReplicateOptions {
  std::size_t n_reps = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<Estimator> estimators{Estimator::unadjusted, Estimator::adaptive};
};

struct ReplicateRow {
  std::size_t replicate = 0;
  TrialTruth truth;
  bool truth_ok = false;
  std::string failure;  // trial-level failure
  std::vector<std::optional<EffectEstimate>> estimates;  // per estimator
  std::vector<std::string> estimate_failures;
};

struct EstimatorSummary {
  std::string estimator;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double bias = 0.0;      // mean(ratio - true ratio)
  double log_bias = 0.0;  // mean(log ratio - log true ratio)
  double mean_ratio = 0.0;
  double mean_se = 0.0;   // log-scale influence-curve SE
  double empirical_sd = 0.0;  // sd of log ratio across replicates
  double mean_t = 0.0;
  double coverage = 0.0;
  double rejection_rate = 0.0;  // power, or type-I error under the null
  std::map<std::string, std::size_t> selections;  // "q|g" -> count
};

struct ReplicateReport {
  std::string scenario;
  bool effect_null = false;
  double size_scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t n_reps = 0;
  std::size_t n_failed_trials = 0;
  double mean_true_ratio = 0.0;
  double var_true_ratio = 0.0;
  double mean_km = 0.0;
  std::vector<EstimatorSummary> estimators;
  std::vector<ReplicateRow> rows;
};

ReplicateReport run_replicates(const ScenarioConfig& config, const ReplicateOptions& options,
                               const AnalysisOptions& analysis = {});

nlohmann::json to_json(const ReplicateReport& report);
/// One line per replicate and estimator.
void write_replicate_rows_csv(const std::filesystem::path& path, const ReplicateReport& report);

}  // namespace crt
