#include "crt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "crt/csv_io.hpp"

namespace crt {

namespace fs = std::filesystem;
using nlohmann::json;

TrialDataset simulate_trial(const ScenarioConfig& config, std::uint64_t seed, std::uint64_t replicate) {
  const RngStream root(seed, {replicate});
  auto sims = gen_communities(config, root.child(0));
  const RngStream people = root.child(1);
  for (auto& c : sims) gen_individuals(c, config, people.child(static_cast<std::uint64_t>(c.id)));

  TrialDataset data;
  data.scenario = config.name;
  data.seed = seed;
  data.replicate = replicate;
  data.size_scale = config.size_scale;
  for (const auto& s : sims) {
    CommunityRecord c;
    c.id = s.id;
    c.region = s.region;
    c.covariates = observed_covariates(s);
    data.communities.push_back(std::move(c));
  }
  data.pairing = optimal_pairs_within_region(data.communities, kMatchVars);
  assign_pair_ids(data.pairing, data.communities);

  // randomize within pairs
  const RngStream coin = root.child(2);
  std::unordered_map<int, int> arm_of;
  for (std::size_t k = 0; k < data.pairing.pairs.size(); ++k) {
    RngStream s = coin.child(k);
    const int first = s.uniform() < 0.5 ? 1 : 0;
    arm_of[data.pairing.pairs[k].first] = first;
    arm_of[data.pairing.pairs[k].second] = 1 - first;
  }

  data.individuals.covariate_names = kIndividualCovariates;
  std::map<int, double> control_truth;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    auto& c = data.communities[j];
    c.arm = arm_of.at(c.id);
    auto cohort = incidence_cohort(sims[j], c.arm);
    const auto est = cumulative_incidence_empirical(cohort);
    c.y = est.estimate;
    c.denominator = static_cast<double>(est.denominator);
    for (auto& r : cohort.records) data.individuals.records.push_back(std::move(r));
    control_truth[sims[j].id] = true_cumulative_incidence(sims[j], 0);
  }

  const auto t = true_sample_ratio(sims);
  data.truth = {t.psi1, t.psi0, t.ratio, km_pair_cv(data.pairing, control_truth)};
  return data;
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::adaptive: return "adaptive";
    case Estimator::unadjusted: return "unadjusted";
    case Estimator::tmle: return "tmle";
    case Estimator::drop_pair: return "drop-pair";
    case Estimator::break_match: return "break-match";
  }
  return "?";
}

Estimator parse_estimator(const std::string& s) {
  for (auto e : {Estimator::adaptive, Estimator::unadjusted, Estimator::tmle, Estimator::drop_pair,
                 Estimator::break_match}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

std::map<int, IncidenceEstimate> stage1_outcomes(const Cohort& individuals, const AnalysisOptions& options) {
  std::map<int, Cohort> by_community;
  for (const auto& r : individuals.records) {
    auto& c = by_community[r.community_id];
    if (c.covariate_names.empty()) c.covariate_names = individuals.covariate_names;
    c.records.push_back(r);
  }
  std::map<int, IncidenceEstimate> out;
  for (const auto& [id, cohort] : by_community) {
    try {
      if (options.stage1 == Stage1Method::tmle) {
        out[id] = cumulative_incidence_tmle(cohort, options.stage1_vars);
      } else {
        out[id] = cumulative_incidence_empirical(cohort);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("community " + std::to_string(id) + ": " + e.what());
    }
  }
  return out;
}

EffectEstimate analyze(Communities communities, const Cohort& individuals, const AnalysisOptions& options) {
  const auto outcomes = stage1_outcomes(individuals, options);
  std::vector<std::string> stage1_warnings;
  for (auto& c : communities) {
    auto it = outcomes.find(c.id);
    if (it == outcomes.end()) throw std::runtime_error("community " + std::to_string(c.id) + ": no cohort records");
    c.y = it->second.estimate;
    c.denominator = static_cast<double>(it->second.denominator);
    c.weight = options.weighting == Weighting::size ? c.denominator : 1.0;
    for (const auto& w : it->second.warnings) stage1_warnings.push_back("community " + std::to_string(c.id) + ": " + w);
  }

  EffectEstimate e;
  switch (options.estimator) {
    case Estimator::adaptive:
      e = adaptive_prespec(communities, {kBaselinePrevalence, kMcCoverage}, {kBaselinePrevalence, kMcCoverage},
                           options.stage2);
      break;
    case Estimator::unadjusted:
      e = unadjusted_effect(communities, options.stage2);
      break;
    case Estimator::tmle:
      e = tmle_effect(communities, options.q_var, options.g_var, options.stage2);
      break;
    case Estimator::drop_pair:
      e = drop_pair_sensitivity(communities, options.drop_var, options.stage2);
      break;
    case Estimator::break_match:
      e = break_match_effect(communities, {kBaselinePrevalence, kMcCoverage, kRegion}, options.stage2);
      break;
  }
  e.warnings.insert(e.warnings.begin(), stage1_warnings.begin(), stage1_warnings.end());
  return e;
}

json to_json(const TrialTruth& t) {
  return {{"psi1", t.psi1}, {"psi0", t.psi0}, {"ratio", t.ratio}, {"km", t.km}};
}

void write_dataset(const fs::path& dir, const TrialDataset& data) {
  fs::create_directories(dir);
  write_communities_csv(dir / "communities.csv", data.communities);
  write_individuals_csv(dir / "individuals.csv", data.individuals);
  write_pairing_csv(dir / "pairs.csv", data.pairing);
  json truth = to_json(data.truth);
  truth["scenario"] = data.scenario;
  truth["seed"] = data.seed;
  truth["replicate"] = data.replicate;
  truth["size_scale"] = data.size_scale;
  std::ofstream out(dir / "truth.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "truth.json").string());
  out << truth.dump(2) << '\n';
}

TrialDataset read_dataset(const fs::path& dir) {
  TrialDataset data;
  data.communities = read_communities_csv(dir / "communities.csv");
  data.individuals = read_individuals_csv(dir / "individuals.csv");
  if (fs::exists(dir / "pairs.csv")) data.pairing = read_pairing_csv(dir / "pairs.csv");
  if (fs::exists(dir / "truth.json")) {
    std::ifstream in(dir / "truth.json");
    const auto j = json::parse(in);
    data.truth = {j.at("psi1").get<double>(), j.at("psi0").get<double>(), j.at("ratio").get<double>(),
                  j.at("km").get<double>()};
    data.scenario = j.value("scenario", "");
    data.seed = j.value("seed", std::uint64_t{0});
    data.replicate = j.value("replicate", std::uint64_t{0});
    data.size_scale = j.value("size_scale", 1.0);
  }
  return data;
}

namespace {

json optional_name(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

json to_json(const EffectEstimate& e) {
  json candidates = json::array();
  for (const auto& c : e.candidates) {
    candidates.push_back({{"q_var", optional_name(c.q_var)},
                          {"g_var", optional_name(c.g_var)},
                          {"cv_variance", std::isfinite(c.cv_variance) ? json(c.cv_variance) : json(nullptr)},
                          {"failure", c.failure}});
  }
  json units = json::array();
  for (std::size_t k = 0; k < e.unit_ids.size(); ++k) {
    units.push_back({{"unit", e.unit_ids[k]}, {"ic1", e.unit_ic1[k]}, {"ic0", e.unit_ic0[k]}, {"ic_log_ratio", e.pair_ic[k]}});
  }
  return {
      {"estimator", e.estimator},
      {"psi1", e.psi1},
      {"psi0", e.psi0},
      {"ratio", e.ratio},
      {"log_ratio", e.log_ratio},
      {"log_se", e.log_se},
      {"t_statistic", e.t_statistic},
      {"ci_lower", e.ci_lower},
      {"ci_upper", e.ci_upper},
      {"p_value", e.p_value},
      {"df", e.df},
      {"abs_difference", e.abs_difference},
      {"abs_se", e.abs_se},
      {"abs_ci_lower", e.abs_ci_lower},
      {"abs_ci_upper", e.abs_ci_upper},
      {"selected_q_var", optional_name(e.selected_q_var)},
      {"selected_g_var", optional_name(e.selected_g_var)},
      {"epsilon1", e.epsilon1},
      {"epsilon0", e.epsilon0},
      {"dropped_pair", e.dropped_pair ? json(*e.dropped_pair) : json(nullptr)},
      {"units", units},
      {"candidates", candidates},
      {"warnings", e.warnings},
  };
}

// ---------------------------------------------------------------------------

ReplicateReport run_replicates(const ScenarioConfig& config, const ReplicateOptions& options,
                               const AnalysisOptions& analysis) {
  if (options.n_reps < 1) throw std::invalid_argument("replicate: n_reps must be at least 1");
  if (options.estimators.empty()) throw std::invalid_argument("replicate: no estimators requested");
  validate(config);

  ReplicateReport report;
  report.scenario = config.name;
  report.effect_null = config.effect_null;
  report.size_scale = config.size_scale;
  report.seed = options.seed;
  report.n_reps = options.n_reps;
  report.rows.resize(options.n_reps);

  auto run_one = [&](std::size_t r) {
    ReplicateRow row;
    row.replicate = r;
    row.estimates.resize(options.estimators.size());
    row.estimate_failures.resize(options.estimators.size());
    try {
      const auto data = simulate_trial(config, options.seed, r);
      row.truth = data.truth;
      row.truth_ok = true;
      for (std::size_t k = 0; k < options.estimators.size(); ++k) {
        auto opts = analysis;
        opts.estimator = options.estimators[k];
        try {
          row.estimates[k] = analyze(data.communities, data.individuals, opts);
        } catch (const std::exception& e) {
          row.estimate_failures[k] = e.what();
        }
      }
    } catch (const std::exception& e) {
      row.failure = e.what();
    }
    return row;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_reps)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < options.n_reps; r = next++) report.rows[r] = run_one(r);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  // reduction in replicate order, independent of the thread count
  std::size_t n_truth = 0;
  for (const auto& row : report.rows) {
    if (!row.truth_ok) {
      ++report.n_failed_trials;
      continue;
    }
    ++n_truth;
    report.mean_true_ratio += row.truth.ratio;
    report.mean_km += row.truth.km;
  }
  if (n_truth > 0) {
    report.mean_true_ratio /= static_cast<double>(n_truth);
    report.mean_km /= static_cast<double>(n_truth);
    for (const auto& row : report.rows) {
      if (row.truth_ok) report.var_true_ratio += std::pow(row.truth.ratio - report.mean_true_ratio, 2);
    }
    if (n_truth > 1) report.var_true_ratio /= static_cast<double>(n_truth - 1);
  }

  for (std::size_t k = 0; k < options.estimators.size(); ++k) {
    EstimatorSummary s;
    s.estimator = to_string(options.estimators[k]);
    double sum_log = 0.0, sum_log2 = 0.0;
    std::size_t covered = 0, rejected = 0;
    for (const auto& row : report.rows) {
      if (!row.truth_ok) continue;
      if (!row.estimates[k]) {
        ++s.n_failed;
        continue;
      }
      const auto& e = *row.estimates[k];
      ++s.n_ok;
      s.bias += e.ratio - row.truth.ratio;
      s.log_bias += e.log_ratio - std::log(row.truth.ratio);
      s.mean_ratio += e.ratio;
      s.mean_se += e.log_se;
      s.mean_t += e.t_statistic;
      sum_log += e.log_ratio;
      sum_log2 += e.log_ratio * e.log_ratio;
      covered += (e.ci_lower <= row.truth.ratio && row.truth.ratio <= e.ci_upper) ? 1 : 0;
      rejected += e.p_value < analysis.stage2.alpha ? 1 : 0;
      if (e.estimator == "adaptive_tmle" || e.estimator == "drop_pair" || e.estimator == "break_match") {
        s.selections[e.selected_q_var.value_or("none") + "|" + e.selected_g_var.value_or("none")] += 1;
      }
    }
    if (s.n_ok > 0) {
      const double n = static_cast<double>(s.n_ok);
      s.bias /= n;
      s.log_bias /= n;
      s.mean_ratio /= n;
      s.mean_se /= n;
      s.mean_t /= n;
      s.coverage = static_cast<double>(covered) / n;
      s.rejection_rate = static_cast<double>(rejected) / n;
      if (s.n_ok > 1) s.empirical_sd = std::sqrt(std::max(0.0, (sum_log2 - sum_log * sum_log / n) / (n - 1.0)));
    }
    report.estimators.push_back(std::move(s));
  }
  return report;
}

json to_json(const ReplicateReport& r) {
  json estimators = json::array();
  for (const auto& s : r.estimators) {
    estimators.push_back({{"estimator", s.estimator},
                          {"n_ok", s.n_ok},
                          {"n_failed", s.n_failed},
                          {"bias", s.bias},
                          {"log_bias", s.log_bias},
                          {"mean_ratio", s.mean_ratio},
                          {"mean_se", s.mean_se},
                          {"empirical_sd", s.empirical_sd},
                          {"mean_t", s.mean_t},
                          {"coverage", s.coverage},
                          {r.effect_null ? "type1_error" : "power", s.rejection_rate},
                          {"selections", s.selections}});
  }
  return {{"scenario", r.scenario},
          {"effect_null", r.effect_null},
          {"size_scale", r.size_scale},
          {"master_seed", r.seed},
          {"replicates", r.n_reps},
          {"failed_trials", r.n_failed_trials},
          {"mean_true_ratio", r.mean_true_ratio},
          {"var_true_ratio", r.var_true_ratio},
          {"mean_km", r.mean_km},
          {"estimators", estimators}};
}

void write_replicate_rows_csv(const fs::path& path, const ReplicateReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "replicate,estimator,true_ratio,km,ratio,log_se,ci_lower,ci_upper,p_value,q_var,g_var,failure\n";
  for (const auto& row : report.rows) {
    for (std::size_t k = 0; k < report.estimators.size(); ++k) {
      out << row.replicate << ',' << report.estimators[k].estimator << ',' << format_double(row.truth.ratio) << ','
          << format_double(row.truth.km) << ',';
      const auto& e = row.estimates.empty() ? std::nullopt : row.estimates[k];
      if (e) {
        out << format_double(e->ratio) << ',' << format_double(e->log_se) << ',' << format_double(e->ci_lower) << ','
            << format_double(e->ci_upper) << ',' << format_double(e->p_value) << ','
            << e->selected_q_var.value_or("none") << ',' << e->selected_g_var.value_or("none") << ",\n";
      } else {
        std::string why = row.failure.empty() ? row.estimate_failures[k] : row.failure;
        std::replace(why.begin(), why.end(), ',', ';');
        out << ",,,,,,," << why << '\n';
      }
    }
  }
}

}  // namespace crt
