#include "crt/scenario_io.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace crt {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("scenario: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const ScenarioConfig& c) {
  json regions = json::array();
  for (const auto& r : c.regions) {
    regions.push_back({{"name", r.name},
                       {"country", r.country},
                       {"community_count", r.community_count},
                       {"prevalence", r.prevalence},
                       {"circumcision", r.circumcision}});
  }
  json countries = json::array();
  for (const auto& k : c.countries) {
    countries.push_back({{"name", k.name},
                         {"size_min", k.size_min},
                         {"size_max", k.size_max},
                         {"control_hazard", k.control_hazard},
                         {"intervention_hazard", k.intervention_hazard}});
  }
  const auto& cm = c.community_model;
  const auto& im = c.individual_model;
  return {
      {"name", c.name},
      {"regions", regions},
      {"countries", countries},
      {"baseline_coverage_bounds", c.baseline_coverage_bounds},
      {"community_model",
       {{"block_correlation", cm.block_correlation},
        {"prevalence_coef", cm.prevalence_coef},
        {"prevalence_noise_sd", cm.prevalence_noise_sd},
        {"circumcision_noise_sd", cm.circumcision_noise_sd},
        {"hazard_coef", cm.hazard_coef},
        {"prevalence_elasticity", cm.prevalence_elasticity},
        {"circumcision_effect", cm.circumcision_effect},
        {"hazard_noise_sd", cm.hazard_noise_sd},
        {"hazard_noise_correlation", cm.hazard_noise_correlation}}},
      {"individual_model",
       {{"age_probs", im.age_probs},
        {"male_fraction", im.male_fraction},
        {"prevalence_age_mult", im.prevalence_age_mult},
        {"prevalence_male_mult", im.prevalence_male_mult},
        {"hazard_age_mult", im.hazard_age_mult},
        {"hazard_male_mult", im.hazard_male_mult},
        {"circumcised_mult", im.circumcised_mult},
        {"persistence", im.persistence}}},
      {"censoring_scenario", to_string(c.censoring)},
      {"censoring_model",
       {{"nondifferential", c.censoring_model.nondifferential}, {"differential", c.censoring_model.differential}}},
      {"measurement_scenario", to_string(c.measurement)},
      {"measurement_model",
       {{"noninformative", c.measurement_model.noninformative}, {"informative", c.measurement_model.informative}}},
      {"effect_null", c.effect_null},
      {"size_scale", c.size_scale},
      {"master_seed", c.master_seed},
  };
}

ScenarioConfig scenario_from_json(const json& j) {
  reject_unknown(j,
                 {"name", "regions", "countries", "baseline_coverage_bounds", "community_model", "individual_model",
                  "censoring_scenario", "censoring_model", "measurement_scenario", "measurement_model", "effect_null",
                  "size_scale", "master_seed"},
                 "scenario");
  ScenarioConfig c;
  read(j, "name", c.name);
  if (j.contains("regions")) {
    for (const auto& r : j.at("regions")) {
      reject_unknown(r, {"name", "country", "community_count", "prevalence", "circumcision"}, "region");
      RegionSpec spec;
      spec.name = r.at("name").get<std::string>();
      spec.country = r.at("country").get<std::string>();
      spec.community_count = r.at("community_count").get<int>();
      read(r, "prevalence", spec.prevalence);
      read(r, "circumcision", spec.circumcision);
      c.regions.push_back(spec);
    }
  }
  if (j.contains("countries")) {
    for (const auto& k : j.at("countries")) {
      reject_unknown(k, {"name", "size_min", "size_max", "control_hazard", "intervention_hazard"}, "country");
      CountrySpec spec;
      spec.name = k.at("name").get<std::string>();
      read(k, "size_min", spec.size_min);
      read(k, "size_max", spec.size_max);
      read(k, "control_hazard", spec.control_hazard);
      read(k, "intervention_hazard", spec.intervention_hazard);
      c.countries.push_back(spec);
    }
  }
  read(j, "baseline_coverage_bounds", c.baseline_coverage_bounds);
  if (j.contains("community_model")) {
    const auto& m = j.at("community_model");
    auto& cm = c.community_model;
    reject_unknown(m,
                   {"block_correlation", "prevalence_coef", "prevalence_noise_sd", "circumcision_noise_sd",
                    "hazard_coef", "prevalence_elasticity", "circumcision_effect", "hazard_noise_sd",
                    "hazard_noise_correlation"},
                   "community_model");
    read(m, "block_correlation", cm.block_correlation);
    read(m, "prevalence_coef", cm.prevalence_coef);
    read(m, "prevalence_noise_sd", cm.prevalence_noise_sd);
    read(m, "circumcision_noise_sd", cm.circumcision_noise_sd);
    read(m, "hazard_coef", cm.hazard_coef);
    read(m, "prevalence_elasticity", cm.prevalence_elasticity);
    read(m, "circumcision_effect", cm.circumcision_effect);
    read(m, "hazard_noise_sd", cm.hazard_noise_sd);
    read(m, "hazard_noise_correlation", cm.hazard_noise_correlation);
  }
  if (j.contains("individual_model")) {
    const auto& m = j.at("individual_model");
    auto& im = c.individual_model;
    reject_unknown(m,
                   {"age_probs", "male_fraction", "prevalence_age_mult", "prevalence_male_mult", "hazard_age_mult",
                    "hazard_male_mult", "circumcised_mult", "persistence"},
                   "individual_model");
    read(m, "age_probs", im.age_probs);
    read(m, "male_fraction", im.male_fraction);
    read(m, "prevalence_age_mult", im.prevalence_age_mult);
    read(m, "prevalence_male_mult", im.prevalence_male_mult);
    read(m, "hazard_age_mult", im.hazard_age_mult);
    read(m, "hazard_male_mult", im.hazard_male_mult);
    read(m, "circumcised_mult", im.circumcised_mult);
    read(m, "persistence", im.persistence);
  }
  if (j.contains("censoring_scenario")) c.censoring = parse_censoring(j.at("censoring_scenario").get<std::string>());
  if (j.contains("censoring_model")) {
    const auto& m = j.at("censoring_model");
    reject_unknown(m, {"nondifferential", "differential"}, "censoring_model");
    read(m, "nondifferential", c.censoring_model.nondifferential);
    read(m, "differential", c.censoring_model.differential);
  }
  if (j.contains("measurement_scenario")) {
    c.measurement = parse_measurement(j.at("measurement_scenario").get<std::string>());
  }
  if (j.contains("measurement_model")) {
    const auto& m = j.at("measurement_model");
    reject_unknown(m, {"noninformative", "informative"}, "measurement_model");
    read(m, "noninformative", c.measurement_model.noninformative);
    read(m, "informative", c.measurement_model.informative);
  }
  read(j, "effect_null", c.effect_null);
  read(j, "size_scale", c.size_scale);
  read(j, "master_seed", c.master_seed);
  validate(c);
  return c;
}

ScenarioConfig load_scenario(const std::string& preset_or_path) {
  for (const auto& name : preset_names()) {
    if (name == preset_or_path) return preset(name);
  }
  std::ifstream in(preset_or_path);
  if (!in) throw std::invalid_argument("scenario: '" + preset_or_path + "' is neither a preset nor a readable file");
  return scenario_from_json(json::parse(in));
}

}  // namespace crt
