#pragma once

// Hierarchical simulation of a pair-matched HIV incidence trial: community
// covariates and hazards, individual infection/censoring/measurement
// histories at t = 0..3 under both arms, and the sample incidence ratio
// that serves as ground truth.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crt/matchpairs.hpp"
#include "crt/rng.hpp"
#include "crt/stage1.hpp"

namespace crt {

enum class CensoringScenario { none, nondifferential, differential, mixture };
enum class MeasurementScenario { noninformative, informative_true_status, informative_known_status, mixture };

inline constexpr int kYears = 3;
inline constexpr int kCovariates = 9;

struct RegionSpec {
  std::string name;
  std::string country;
  int community_count = 0;
  double prevalence = 0.1;    // typical baseline HIV prevalence
  double circumcision = 0.3;  // typical male circumcision coverage
};

struct CountrySpec {
  std::string name;
  int size_min = 4000;
  int size_max = 6000;
  std::array<double, kYears> control_hazard{};       // per person-year, t = 1..3
  std::array<double, kYears> intervention_hazard{};
};

struct CommunityModel {
  // correlation within {E1..E3}, {E4..E6}, {E7..E9}
  std::array<double, 3> block_correlation{0.25, 0.25, 0.0};
  // logit Z = logit(region prevalence) + coef . (E1, E4, E7) + sd * U_Z
  std::array<double, 3> prevalence_coef{0.15, 0.25, 0.25};
  double prevalence_noise_sd = 0.15;
  double circumcision_noise_sd = 0.4;
  // log hazard multiplier terms
  std::array<double, 3> hazard_coef{0.08, 0.08, 0.08};  // E2, E5, E8
  double prevalence_elasticity = 1.0;  // hazard ~ (Z / region prevalence)^elasticity
  double circumcision_effect = -0.8;   // per unit of (Z2 - region circumcision)
  double hazard_noise_sd = 0.12;
  double hazard_noise_correlation = 0.7;  // between years within a community
};

struct IndividualModel {
  std::array<double, 3> age_probs{0.35, 0.30, 0.35};  // 15-24, 25-34, 35+
  double male_fraction = 0.47;
  std::array<double, 3> prevalence_age_mult{0.5, 1.3, 1.1};
  double prevalence_male_mult = 0.8;
  std::array<double, 3> hazard_age_mult{1.6, 1.0, 0.5};
  double hazard_male_mult = 0.9;
  double circumcised_mult = 0.45;
  /// Weight of the persistent latent component in each year's noise.
  double persistence = 0.5;
};

struct CensoringModel {
  double nondifferential = 0.05;  // yearly probability
  // differential[arm][hiv positive]
  std::array<std::array<double, 2>, 2> differential{{{0.05, 0.09}, {0.05, 0.08}}};
};

struct MeasurementModel {
  double noninformative = 0.85;
  // informative[arm][positive status]
  std::array<std::array<double, 2>, 2> informative{{{0.85, 0.78}, {0.88, 0.81}}};
};

struct ScenarioConfig {
  std::string name = "custom";
  std::vector<RegionSpec> regions;
  std::vector<CountrySpec> countries;
  std::array<double, 2> baseline_coverage_bounds{0.80, 0.90};
  CommunityModel community_model;
  IndividualModel individual_model;
  CensoringScenario censoring = CensoringScenario::none;
  CensoringModel censoring_model;
  MeasurementScenario measurement = MeasurementScenario::noninformative;
  MeasurementModel measurement_model;
  bool effect_null = false;
  double size_scale = 1.0;  // multiplies drawn community sizes
  std::uint64_t master_seed = 1;

  [[nodiscard]] const CountrySpec& country(const std::string& name) const;
};

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const ScenarioConfig& config);

/// Bundled presets: "scenario_a", "scenario_b", "null".
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// One simulated resident. Histories are stored per arm as event years:
/// infected at year t means Y_s = 1 for all s >= t (4 = never), likewise
/// for censoring; measurement is a bit per year.
struct SimIndividual {
  std::uint8_t age_group = 0;
  std::uint8_t male = 0;
  std::uint8_t circumcised = 0;
  std::array<std::uint8_t, 2> infection_year{4, 4};
  std::array<std::uint8_t, 2> censor_year{4, 4};
  std::array<std::uint8_t, 2> measured_bits{0, 0};
  // persistent latent noise (standard normal) for Y, C and Delta
  float latent_y = 0, latent_c = 0, latent_m = 0;

  [[nodiscard]] bool infected(int arm, int t) const { return infection_year[arm] <= t; }
  [[nodiscard]] bool censored(int arm, int t) const { return censor_year[arm] <= t; }
  [[nodiscard]] bool measured(int arm, int t) const { return (measured_bits[arm] >> t) & 1u; }
};

struct SimCommunity {
  int id = 0;
  std::string region;
  std::string country;
  Eigen::Matrix<double, kCovariates, 1> e = Eigen::Matrix<double, kCovariates, 1>::Zero();
  double prevalence = 0.0;     // Z
  double circumcision = 0.0;   // Z2
  int size = 0;
  double baseline_coverage = 0.0;
  std::array<std::array<double, kYears>, 2> hazard{};  // [arm][t-1]
  CensoringScenario censoring = CensoringScenario::none;
  MeasurementScenario measurement = MeasurementScenario::noninformative;
  std::vector<SimIndividual> individuals;
};

/// Community-level draws (no individuals). Community j uses rng.child(j).
std::vector<SimCommunity> gen_communities(const ScenarioConfig& config, const RngStream& rng);

/// Populates community.individuals; individual i uses rng.child(i).
void gen_individuals(SimCommunity& community, const ScenarioConfig& config, const RngStream& rng);

/// Covariate names used in cohort records.
inline const std::vector<std::string> kIndividualCovariates{"age_group", "male", "circumcised"};

/// Observed-data projection for arm `arm`: members with Y0 = 0 and
/// Delta0 = 1, carrying C, Delta and I at t = 3 only.
Cohort incidence_cohort(const SimCommunity& community, int arm);

/// Three-year cumulative incidence among the cohort under arm `arm` with no
/// censoring or missed measurement.
double true_cumulative_incidence(const SimCommunity& community, int arm);

struct TrueEffect {
  double psi1 = 0.0;
  double psi0 = 0.0;
  double ratio = 0.0;
};
TrueEffect true_sample_ratio(const std::vector<SimCommunity>& communities);

/// Observed community covariates: E1..E9, measured baseline prevalence and
/// male circumcision coverage.
std::map<std::string, double> observed_covariates(const SimCommunity& community);

/// sqrt(sum_k (Y_k1(0) - Y_k2(0))^2 / (2K)) / mean Y(0).
double km_pair_cv(const MatchedPairing& pairing, const std::map<int, double>& control_truths);

std::string to_string(CensoringScenario s);
std::string to_string(MeasurementScenario s);
CensoringScenario parse_censoring(const std::string& s);
MeasurementScenario parse_measurement(const std::string& s);

}  // namespace crt
