#include "crt/trialsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crt/numkit.hpp"

namespace crt {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("scenario: " + what + " must lie in [0,1]");
}

Eigen::Matrix<double, kCovariates, kCovariates> covariate_covariance(const CommunityModel& m) {
  Eigen::Matrix<double, kCovariates, kCovariates> cov = Eigen::Matrix<double, kCovariates, kCovariates>::Identity();
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) cov(3 * b + i, 3 * b + j) = m.block_correlation[b];
      }
    }
  }
  return cov;
}

double censoring_probability(const ScenarioConfig& cfg, CensoringScenario s, int arm, bool positive) {
  switch (s) {
    case CensoringScenario::none:
      return 0.0;
    case CensoringScenario::nondifferential:
      return cfg.censoring_model.nondifferential;
    case CensoringScenario::differential:
      return cfg.censoring_model.differential[arm][positive ? 1 : 0];
    case CensoringScenario::mixture:
      break;
  }
  throw std::logic_error("unresolved censoring mixture");
}

double measurement_probability(const ScenarioConfig& cfg, MeasurementScenario s, int arm, bool positive) {
  switch (s) {
    case MeasurementScenario::noninformative:
      return cfg.measurement_model.noninformative;
    case MeasurementScenario::informative_true_status:
    case MeasurementScenario::informative_known_status:
      return cfg.measurement_model.informative[arm][positive ? 1 : 0];
    case MeasurementScenario::mixture:
      break;
  }
  throw std::logic_error("unresolved measurement mixture");
}

}  // namespace

const CountrySpec& ScenarioConfig::country(const std::string& name) const {
  for (const auto& c : countries) {
    if (c.name == name) return c;
  }
  throw std::invalid_argument("scenario: unknown country '" + name + "'");
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.regions.empty()) throw std::invalid_argument("scenario: no regions");
  for (const auto& r : cfg.regions) {
    if (r.community_count <= 0 || r.community_count % 2 != 0) {
      throw std::invalid_argument("scenario: region '" + r.name + "' needs an even, positive community count");
    }
    if (!(r.prevalence > 0.0 && r.prevalence < 1.0)) {
      throw std::invalid_argument("scenario: region '" + r.name + "' prevalence must lie in (0,1)");
    }
    if (!(r.circumcision > 0.0 && r.circumcision < 1.0)) {
      throw std::invalid_argument("scenario: region '" + r.name + "' circumcision must lie in (0,1)");
    }
    (void)cfg.country(r.country);  // throws on an unknown country
  }
  for (const auto& c : cfg.countries) {
    if (c.size_min <= 0 || c.size_min > c.size_max) {
      throw std::invalid_argument("scenario: country '" + c.name + "' size bounds invalid");
    }
    for (int t = 0; t < kYears; ++t) {
      if (!(c.control_hazard[t] >= 0.0) || !(c.intervention_hazard[t] >= 0.0)) {
        throw std::invalid_argument("scenario: country '" + c.name + "' hazards must be non-negative");
      }
    }
  }
  const auto& cov = cfg.baseline_coverage_bounds;
  check_probability(cov[0], "coverage lower bound");
  check_probability(cov[1], "coverage upper bound");
  if (cov[0] > cov[1]) throw std::invalid_argument("scenario: coverage bounds reversed");
  check_probability(cfg.censoring_model.nondifferential, "nondifferential censoring");
  check_probability(cfg.measurement_model.noninformative, "noninformative measurement");
  for (const auto& arm : cfg.censoring_model.differential) {
    for (double p : arm) check_probability(p, "differential censoring");
  }
  for (const auto& arm : cfg.measurement_model.informative) {
    for (double p : arm) check_probability(p, "informative measurement");
  }
  const auto& im = cfg.individual_model;
  check_probability(im.male_fraction, "male fraction");
  check_probability(im.persistence, "persistence");
  double total = 0.0;
  for (double p : im.age_probs) {
    check_probability(p, "age probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("scenario: age probabilities must sum to 1");
  for (double c : cfg.community_model.block_correlation) {
    if (!(c > -0.5 && c < 1.0)) throw std::invalid_argument("scenario: block correlation must lie in (-0.5, 1)");
  }
  if (!(cfg.community_model.hazard_noise_correlation >= 0.0 && cfg.community_model.hazard_noise_correlation <= 1.0)) {
    throw std::invalid_argument("scenario: hazard noise correlation must lie in [0,1]");
  }
  if (!(cfg.size_scale > 0.0)) throw std::invalid_argument("scenario: size_scale must be positive");
}

std::vector<std::string> preset_names() { return {"scenario_a", "scenario_b", "null"}; }

ScenarioConfig preset(const std::string& name) {
  ScenarioConfig cfg;
  cfg.regions = {{"Eastern Uganda", "Uganda", 10, 0.06, 0.25},
                 {"Western Uganda", "Uganda", 10, 0.09, 0.20},
                 {"Kenya", "Kenya", 12, 0.17, 0.45}};
  cfg.censoring = CensoringScenario::mixture;
  cfg.measurement = MeasurementScenario::mixture;

  CountrySpec uganda{"Uganda", 4000, 6000, {}, {}};
  CountrySpec kenya{"Kenya", 3500, 5480, {}, {}};
  if (name == "scenario_a" || name == "null") {
    // less conservative control trajectory
    uganda.control_hazard = {0.0050, 0.0046, 0.0042};
    uganda.intervention_hazard = {0.0044, 0.0032, 0.0025};
    kenya.control_hazard = {0.0070, 0.0064, 0.0058};
    kenya.intervention_hazard = {0.0061, 0.0045, 0.0034};
  } else if (name == "scenario_b") {
    // more conservative control trajectory, slower intervention decline
    uganda.control_hazard = {0.0044, 0.0040, 0.0036};
    uganda.intervention_hazard = {0.0040, 0.0027, 0.0020};
    kenya.control_hazard = {0.0062, 0.0056, 0.0050};
    kenya.intervention_hazard = {0.0056, 0.0039, 0.0028};
  } else {
    throw std::invalid_argument("unknown scenario preset '" + name + "'");
  }
  cfg.countries = {uganda, kenya};
  cfg.name = name;
  cfg.effect_null = name == "null";
  return cfg;
}

std::vector<SimCommunity> gen_communities(const ScenarioConfig& cfg, const RngStream& rng) {
  validate(cfg);
  const auto& cm = cfg.community_model;
  const auto cov = covariate_covariance(cm);
  const auto factor = covariance_factor(cov);

  std::vector<SimCommunity> out;
  int id = 0;
  for (const auto& region : cfg.regions) {
    const auto& country = cfg.country(region.country);
    for (int k = 0; k < region.community_count; ++k, ++id) {
      RngStream s = rng.child(static_cast<std::uint64_t>(id)).child(0);
      SimCommunity c;
      c.id = id;
      c.region = region.name;
      c.country = country.name;
      Eigen::Matrix<double, kCovariates, 1> z;
      for (int i = 0; i < kCovariates; ++i) z(i) = s.normal();
      c.e = factor * z;

      const double logit_z = logit(region.prevalence) + cm.prevalence_coef[0] * c.e(0) +
                             cm.prevalence_coef[1] * c.e(3) + cm.prevalence_coef[2] * c.e(6) +
                             cm.prevalence_noise_sd * s.normal();
      c.prevalence = expit(logit_z);
      c.circumcision = expit(logit(region.circumcision) + cm.circumcision_noise_sd * s.normal());

      const int drawn = static_cast<int>(s.uniform_int(country.size_min, country.size_max));
      c.size = std::max(2, static_cast<int>(std::lround(drawn * cfg.size_scale)));
      c.baseline_coverage = s.uniform(cfg.baseline_coverage_bounds[0], cfg.baseline_coverage_bounds[1]);

      const double log_mult = cm.hazard_coef[0] * c.e(1) + cm.hazard_coef[1] * c.e(4) + cm.hazard_coef[2] * c.e(7) +
                              cm.prevalence_elasticity * std::log(c.prevalence / region.prevalence) +
                              cm.circumcision_effect * (c.circumcision - region.circumcision);
      const double shared = s.normal();
      for (int t = 0; t < kYears; ++t) {
        const double noise = cm.hazard_noise_sd * (std::sqrt(cm.hazard_noise_correlation) * shared +
                                                   std::sqrt(1.0 - cm.hazard_noise_correlation) * s.normal());
        const double mult = std::exp(log_mult + noise);
        c.hazard[0][t] = country.control_hazard[t] * mult;
        c.hazard[1][t] = (cfg.effect_null ? country.control_hazard[t] : country.intervention_hazard[t]) * mult;
      }

      // mixture scenarios are resolved per community from its own stream
      const double u_c = s.uniform();
      const double u_m = s.uniform();
      c.censoring = cfg.censoring;
      if (c.censoring == CensoringScenario::mixture) {
        c.censoring = static_cast<CensoringScenario>(std::min(2, static_cast<int>(u_c * 3.0)));
      }
      c.measurement = cfg.measurement;
      if (c.measurement == MeasurementScenario::mixture) {
        c.measurement = static_cast<MeasurementScenario>(std::min(2, static_cast<int>(u_m * 3.0)));
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

void gen_individuals(SimCommunity& c, const ScenarioConfig& cfg, const RngStream& rng) {
  const auto& im = cfg.individual_model;
  const double rho = std::sqrt(im.persistence);
  const double fresh = std::sqrt(1.0 - im.persistence);

  // normalizing constants so multipliers average to one in the community
  double prev_norm = 0.0, haz_norm = 0.0;
  const double male_haz = im.hazard_male_mult * (c.circumcision * im.circumcised_mult + (1.0 - c.circumcision));
  for (int a = 0; a < 3; ++a) {
    prev_norm += im.age_probs[a] * im.prevalence_age_mult[a] *
                 (im.male_fraction * im.prevalence_male_mult + (1.0 - im.male_fraction));
    haz_norm += im.age_probs[a] * im.hazard_age_mult[a] * (im.male_fraction * male_haz + (1.0 - im.male_fraction));
  }

  c.individuals.assign(static_cast<std::size_t>(c.size), SimIndividual{});
  for (int i = 0; i < c.size; ++i) {
    RngStream s = rng.child(static_cast<std::uint64_t>(i));
    auto& p = c.individuals[static_cast<std::size_t>(i)];

    const double u_age = s.uniform();
    p.age_group = u_age < im.age_probs[0] ? 0 : (u_age < im.age_probs[0] + im.age_probs[1] ? 1 : 2);
    p.male = s.uniform() < im.male_fraction ? 1 : 0;
    const double u_circ = s.uniform();
    p.circumcised = p.male && u_circ < c.circumcision ? 1 : 0;

    const double ly = s.normal(), lc = s.normal(), lm = s.normal();
    p.latent_y = static_cast<float>(ly);
    p.latent_c = static_cast<float>(lc);
    p.latent_m = static_cast<float>(lm);
    // yearly uniforms share the latent component; drawn in a fixed order so
    // both arms see identical noise
    std::array<double, 4> uy{}, uc{}, um{};
    for (int t = 0; t <= kYears; ++t) {
      uy[t] = std_normal_cdf(rho * ly + fresh * s.normal());
      uc[t] = std_normal_cdf(rho * lc + fresh * s.normal());
      um[t] = std_normal_cdf(rho * lm + fresh * s.normal());
    }

    const double prev_mult = im.prevalence_age_mult[p.age_group] * (p.male ? im.prevalence_male_mult : 1.0) / prev_norm;
    const bool y0 = uy[0] < std::min(1.0, c.prevalence * prev_mult);
    const bool m0 = um[0] < c.baseline_coverage;
    const double haz_mult =
        im.hazard_age_mult[p.age_group] *
        (p.male ? im.hazard_male_mult * (p.circumcised ? im.circumcised_mult : 1.0) : 1.0) / haz_norm;

    for (int arm = 0; arm < 2; ++arm) {
      p.infection_year[arm] = y0 ? 0 : 4;
      for (int t = 1; t <= kYears && p.infection_year[arm] == 4; ++t) {
        const double risk = 1.0 - std::exp(-c.hazard[arm][t - 1] * haz_mult);
        if (uy[t] < risk) p.infection_year[arm] = static_cast<std::uint8_t>(t);
      }

      p.censor_year[arm] = 4;
      p.measured_bits[arm] = m0 ? 1 : 0;
      bool known_positive = m0 && y0;
      for (int t = 1; t <= kYears; ++t) {
        if (p.censor_year[arm] == 4 &&
            uc[t] < censoring_probability(cfg, c.censoring, arm, p.infected(arm, t))) {
          p.censor_year[arm] = static_cast<std::uint8_t>(t);
        }
        if (arm == 0 && t < kYears) continue;  // control arm unobserved at interim years
        if (p.censored(arm, t)) continue;
        const bool status =
            c.measurement == MeasurementScenario::informative_known_status ? known_positive : p.infected(arm, t);
        if (um[t] < measurement_probability(cfg, c.measurement, arm, status)) {
          p.measured_bits[arm] |= static_cast<std::uint8_t>(1u << t);
          known_positive = known_positive || p.infected(arm, t);
        }
      }
    }
  }
}

Cohort incidence_cohort(const SimCommunity& c, int arm) {
  Cohort cohort;
  cohort.covariate_names = kIndividualCovariates;
  for (std::size_t i = 0; i < c.individuals.size(); ++i) {
    const auto& p = c.individuals[i];
    if (p.infected(arm, 0) || !p.measured(arm, 0)) continue;
    IndividualRecord r;
    r.id = static_cast<std::int64_t>(i);
    r.community_id = c.id;
    r.w = {static_cast<double>(p.age_group), static_cast<double>(p.male), static_cast<double>(p.circumcised)};
    r.censored = p.censored(arm, kYears);
    r.measured = !r.censored && p.measured(arm, kYears);
    if (r.measured) r.infected = p.infected(arm, kYears);
    cohort.records.push_back(std::move(r));
  }
  return cohort;
}

double true_cumulative_incidence(const SimCommunity& c, int arm) {
  std::size_t members = 0, cases = 0;
  for (const auto& p : c.individuals) {
    if (p.infected(arm, 0) || !p.measured(arm, 0)) continue;
    ++members;
    cases += p.infected(arm, kYears) ? 1 : 0;
  }
  if (members == 0) throw std::domain_error("community " + std::to_string(c.id) + ": empty incidence cohort");
  return static_cast<double>(cases) / static_cast<double>(members);
}

TrueEffect true_sample_ratio(const std::vector<SimCommunity>& communities) {
  if (communities.empty()) throw std::invalid_argument("true_sample_ratio: no communities");
  TrueEffect t;
  for (const auto& c : communities) {
    t.psi1 += true_cumulative_incidence(c, 1);
    t.psi0 += true_cumulative_incidence(c, 0);
  }
  t.psi1 /= static_cast<double>(communities.size());
  t.psi0 /= static_cast<double>(communities.size());
  if (!(t.psi0 > 0.0)) throw std::domain_error("true_sample_ratio: control incidence is 0");
  t.ratio = t.psi1 / t.psi0;
  return t;
}

std::map<std::string, double> observed_covariates(const SimCommunity& c) {
  std::map<std::string, double> e;
  for (int i = 0; i < kCovariates; ++i) e["E" + std::to_string(i + 1)] = c.e(i);
  std::size_t tested = 0, positive = 0, males = 0, circ = 0;
  for (const auto& p : c.individuals) {
    if (p.measured(0, 0)) {
      ++tested;
      positive += p.infected(0, 0) ? 1 : 0;
    }
    if (p.male) {
      ++males;
      circ += p.circumcised;
    }
  }
  e["baseline_prevalence"] = tested ? static_cast<double>(positive) / static_cast<double>(tested) : 0.0;
  e["mc_coverage"] = males ? static_cast<double>(circ) / static_cast<double>(males) : 0.0;
  return e;
}

double km_pair_cv(const MatchedPairing& pairing, const std::map<int, double>& control_truths) {
  if (pairing.pairs.empty()) throw std::invalid_argument("km_pair_cv: empty pairing");
  double ss = 0.0, sum = 0.0;
  for (auto [a, b] : pairing.pairs) {
    const double ya = control_truths.at(a);
    const double yb = control_truths.at(b);
    ss += (ya - yb) * (ya - yb);
    sum += ya + yb;
  }
  const double k = static_cast<double>(pairing.pairs.size());
  const double mean = sum / (2.0 * k);
  if (!(mean > 0.0)) throw std::domain_error("km_pair_cv: mean control outcome is 0");
  return std::sqrt(ss / (2.0 * k)) / mean;
}

std::string to_string(CensoringScenario s) {
  switch (s) {
    case CensoringScenario::none: return "none";
    case CensoringScenario::nondifferential: return "nondifferential";
    case CensoringScenario::differential: return "differential";
    case CensoringScenario::mixture: return "mixture";
  }
  return "?";
}

std::string to_string(MeasurementScenario s) {
  switch (s) {
    case MeasurementScenario::noninformative: return "noninformative";
    case MeasurementScenario::informative_true_status: return "informative_true_status";
    case MeasurementScenario::informative_known_status: return "informative_known_status";
    case MeasurementScenario::mixture: return "mixture";
  }
  return "?";
}

CensoringScenario parse_censoring(const std::string& s) {
  for (auto v : {CensoringScenario::none, CensoringScenario::nondifferential, CensoringScenario::differential,
                 CensoringScenario::mixture}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown censoring scenario '" + s + "'");
}

MeasurementScenario parse_measurement(const std::string& s) {
  for (auto v : {MeasurementScenario::noninformative, MeasurementScenario::informative_true_status,
                 MeasurementScenario::informative_known_status, MeasurementScenario::mixture}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown measurement scenario '" + s + "'");
}

}  // namespace crt
