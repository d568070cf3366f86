#include "crt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "crt/csv_io.hpp"
#include "crt/matchpairs.hpp"
#include "crt/pipeline.hpp"
#include "crt/power.hpp"
#include "crt/scenario_io.hpp"

namespace crt {

namespace {

namespace fs = std::filesystem;

/// Thrown for bad flag values detected after parsing; maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string fixed(double x, int digits = 4) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// power

struct GridAxis {
  std::string var;
  std::vector<double> values;
};

GridAxis parse_grid(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw UsageError("--grid expects var=lo:hi:step, got '" + text + "'");
  GridAxis axis{text.substr(0, eq), {}};
  if (axis.var != "pi0" && axis.var != "km" && axis.var != "m" && axis.var != "pairs") {
    throw UsageError("--grid variable must be one of pi0, km, m, pairs");
  }
  std::vector<double> parts;
  std::stringstream ss(text.substr(eq + 1));
  std::string field;
  while (std::getline(ss, field, ':')) {
    try {
      parts.push_back(parse_double(field));
    } catch (const std::invalid_argument&) {
      throw UsageError("--grid: bad number '" + field + "'");
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw UsageError("--grid expects lo:hi:step with lo <= hi and step > 0");
  }
  const auto n = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long i = 0; i <= n; ++i) axis.values.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  return axis;
}

void set_field(PowerSpec& spec, const std::string& var, double v) {
  if (var == "pi0") spec.pi0 = v;
  else if (var == "km") spec.km = v;
  else if (var == "m") spec.m = v;
  else spec.pairs = v;
}

std::string power_grid_csv(const PowerSpec& base, const std::vector<GridAxis>& axes) {
  std::ostringstream out;
  out << "pi0,km,m,pairs,detectable_reduction\n";
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    PowerSpec spec = base;
    for (std::size_t a = 0; a < axes.size(); ++a) set_field(spec, axes[a].var, axes[a].values[idx[a]]);
    validate(spec);
    double r = std::numeric_limits<double>::quiet_NaN();
    try {
      r = detectable_reduction(spec);
    } catch (const std::domain_error&) {
      // underpowered grid point: left empty
    }
    out << format_double(spec.pi0) << ',' << format_double(spec.km) << ',' << format_double(spec.m) << ','
        << format_double(spec.pairs) << ',' << format_double(r) << '\n';
    // odometer, last axis fastest
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) return out.str();
    }
    if (axes.empty()) return out.str();
  }
}

// ---------------------------------------------------------------------------
// analyze

void print_estimate(std::ostream& out, const EffectEstimate& e) {
  out << "estimator        " << e.estimator << '\n'
      << "psi(1)           " << fixed(e.psi1, 6) << '\n'
      << "psi(0)           " << fixed(e.psi0, 6) << '\n'
      << "ratio            " << fixed(e.ratio) << "  95% CI [" << fixed(e.ci_lower) << ", " << fixed(e.ci_upper)
      << "]\n"
      << "log ratio        " << fixed(e.log_ratio) << "  se " << fixed(e.log_se) << "  t " << fixed(e.t_statistic, 3)
      << "  df " << e.df << '\n'
      << "p value          " << fixed(e.p_value) << '\n'
      << "difference       " << fixed(e.abs_difference, 6) << "  se " << fixed(e.abs_se, 6) << '\n'
      << "adjustment       Q: " << e.selected_q_var.value_or("none") << "  g: " << e.selected_g_var.value_or("none")
      << '\n';
  if (e.dropped_pair) out << "dropped pair     " << *e.dropped_pair << '\n';
  for (const auto& w : e.warnings) out << "warning: " << w << '\n';
}

void print_report(std::ostream& out, const ReplicateReport& r) {
  out << "scenario " << r.scenario << (r.effect_null ? " (null)" : "") << ", " << r.n_reps << " replicates, seed "
      << r.seed << ", size scale " << format_double(r.size_scale) << '\n'
      << "mean true ratio " << fixed(r.mean_true_ratio) << " (var " << fixed(r.var_true_ratio, 6) << "), mean km "
      << fixed(r.mean_km, 3) << ", failed trials " << r.n_failed_trials << '\n';
  out << "estimator      ok  fail     bias  log_bias  mean_se  emp_sd   tstat  cover  " << (r.effect_null ? "type1" : "power")
      << '\n';
  for (const auto& s : r.estimators) {
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %4zu %5zu %8.4f %9.4f %8.4f %7.4f %7.3f %6.3f %6.3f\n", s.estimator.c_str(),
                  s.n_ok, s.n_failed, s.bias, s.log_bias, s.mean_se, s.empirical_sd, s.mean_t, s.coverage,
                  s.rejection_rate);
    out << line;
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

std::optional<std::string> none_as_empty(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  return s;
}

const std::vector<std::string> kEstimatorNames{"adaptive", "unadjusted", "tmle", "drop-pair", "break-match"};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design, simulate and analyze pair-matched cluster randomized trials", "crt"};
  app.require_subcommand(1);

  // power
  auto* power = app.add_subcommand("power", "Detectable reduction (Hayes-Moulton, pair-matched)");
  PowerSpec spec;
  std::vector<std::string> grids;
  std::optional<double> km_reduced;
  std::string power_out;
  power->add_option("--pairs", spec.pairs, "number of matched pairs")->required()->check(CLI::Range(2.0, 1e9));
  power->add_option("--m", spec.m, "individuals per community with outcome measured")
      ->required()
      ->check(CLI::PositiveNumber);
  power->add_option("--pi0", spec.pi0, "control-arm cumulative incidence")->required()->check(CLI::Range(0.0, 1.0));
  power->add_option("--km", spec.km, "matched-pair coefficient of variation")->required()->check(CLI::NonNegativeNumber);
  power->add_option("--alpha", spec.alpha, "two-sided level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  power->add_option("--power", spec.power, "target power")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  power->add_option("--grid", grids, "curve axis var=lo:hi:step (var in pi0, km, m, pairs); repeatable");
  power->add_option("--km-reduced", km_reduced, "also report dropping one pair with km lowered to this value")
      ->check(CLI::NonNegativeNumber);
  power->add_option("--out", power_out, "write the grid CSV here instead of stdout");

  // match
  auto* match = app.add_subcommand("match", "Optimal pair matching within region");
  std::string match_in, match_out, match_vars = "E4,E7";
  match->add_option("--communities", match_in, "communities.csv")->required();
  match->add_option("--vars", match_vars, "comma-separated matching covariates")->capture_default_str();
  match->add_option("--out", match_out, "pairs CSV (default stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate one trial and write its data files");
  std::string sim_scenario = "scenario_a", sim_out;
  std::uint64_t sim_seed = 1, sim_replicate = 0;
  bool sim_null = false;
  std::optional<double> sim_scale;
  simulate->add_option("--scenario", sim_scenario, "preset name or scenario JSON file")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "master seed")->capture_default_str();
  simulate->add_option("--replicate", sim_replicate, "replicate index")->capture_default_str();
  simulate->add_flag("--null", sim_null, "intervention hazards equal control hazards");
  simulate->add_option("--scale", sim_scale, "multiply community sizes")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_out, "output directory")->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Two-stage analysis of a trial dataset");
  std::string data_dir, analyze_out, estimator = "adaptive", q_var, g_var, weighting = "equal", stage1 = "empirical",
                                     stage1_vars;
  AnalysisOptions aopts;
  analyze_cmd->add_option("--data", data_dir, "directory with communities.csv and individuals.csv")->required();
  analyze_cmd->add_option("--estimator", estimator, "Stage-II estimator")
      ->capture_default_str()
      ->check(CLI::IsMember(kEstimatorNames));
  analyze_cmd->add_option("--q-var", q_var, "outcome-regression covariate for --estimator tmle");
  analyze_cmd->add_option("--g-var", g_var, "propensity covariate for --estimator tmle");
  analyze_cmd->add_option("--drop-var", aopts.drop_var, "discrepancy covariate for drop-pair")->capture_default_str();
  analyze_cmd->add_option("--weighting", weighting, "community weights")
      ->capture_default_str()
      ->check(CLI::IsMember({"equal", "size"}));
  analyze_cmd->add_option("--stage1", stage1, "Stage-I estimator")
      ->capture_default_str()
      ->check(CLI::IsMember({"empirical", "tmle"}));
  analyze_cmd->add_option("--stage1-vars", stage1_vars, "comma-separated individual covariates for --stage1 tmle");
  analyze_cmd->add_option("--alpha", aopts.stage2.alpha, "two-sided level")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  analyze_cmd->add_option("--out", analyze_out, "JSON report");

  // replicate
  auto* replicate = app.add_subcommand("replicate", "Monte-Carlo operating characteristics");
  std::string rep_scenario = "scenario_a", rep_out, rep_rows, rep_estimators = "unadjusted,adaptive",
              rep_weighting = "equal";
  ReplicateOptions ropts;
  bool rep_null = false;
  std::optional<double> rep_scale;
  replicate->add_option("--scenario", rep_scenario, "preset name or scenario JSON file")->capture_default_str();
  replicate->add_option("--reps", ropts.n_reps, "number of replicates")->capture_default_str()->check(CLI::PositiveNumber);
  replicate->add_option("--seed", ropts.seed, "master seed")->capture_default_str();
  replicate->add_option("--threads", ropts.threads, "worker threads")->capture_default_str()->check(CLI::Range(1, 1024));
  replicate->add_flag("--null", rep_null, "intervention hazards equal control hazards");
  replicate->add_option("--scale", rep_scale, "multiply community sizes")->check(CLI::PositiveNumber);
  replicate->add_option("--estimators", rep_estimators, "comma-separated estimators")->capture_default_str();
  replicate->add_option("--weighting", rep_weighting, "community weights")
      ->capture_default_str()
      ->check(CLI::IsMember({"equal", "size"}));
  replicate->add_option("--out", rep_out, "JSON report");
  replicate->add_option("--rows", rep_rows, "per-replicate CSV");

  // scenario
  auto* scenario = app.add_subcommand("scenario", "Print a scenario as JSON");
  std::string scenario_name = "scenario_a", scenario_out;
  scenario->add_option("name", scenario_name, "preset name or scenario JSON file")->capture_default_str();
  scenario->add_option("--out", scenario_out, "write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*power) {
      std::string csv;
      try {
        validate(spec);
        if (!grids.empty()) {
          std::vector<GridAxis> axes;
          for (const auto& g : grids) axes.push_back(parse_grid(g));
          csv = power_grid_csv(spec, axes);
        }
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (!grids.empty()) {
        if (power_out.empty()) out << csv;
        else write_text(power_out, csv);
        return 0;
      }
      out << "pairs " << format_double(spec.pairs) << ", m " << format_double(spec.m) << ", pi0 "
          << format_double(spec.pi0) << ", km " << format_double(spec.km) << ", alpha " << format_double(spec.alpha)
          << ", power " << format_double(spec.power) << '\n';
      out << "detectable reduction " << fixed(detectable_reduction(spec)) << '\n';
      if (km_reduced) {
        const auto t = drop_pair_tradeoff(spec, *km_reduced);
        out << "dropping one pair at km " << format_double(*km_reduced) << ": detectable reduction "
            << fixed(t.r_dropped) << " (all pairs " << fixed(t.r_full) << ")\n";
      }
      return 0;
    }

    if (*match) {
      auto communities = read_communities_csv(match_in);
      const auto vars = split_list(match_vars);
      if (vars.empty()) throw UsageError("--vars is empty");
      const auto pairing = optimal_pairs_within_region(communities, vars);
      if (match_out.empty()) {
        out << "pair_id,region,id_1,id_2,distance\n";
        for (std::size_t k = 0; k < pairing.pairs.size(); ++k) {
          out << k + 1 << ',' << pairing.regions[k] << ',' << pairing.pairs[k].first << ',' << pairing.pairs[k].second
              << ',' << format_double(pairing.pair_distance[k]) << '\n';
        }
      } else {
        write_pairing_csv(match_out, pairing);
        out << pairing.pairs.size() << " pairs, total distance " << fixed(pairing.total_distance) << '\n';
      }
      return 0;
    }

    if (*simulate) {
      auto cfg = load_scenario(sim_scenario);
      if (sim_null) cfg.effect_null = true;
      if (sim_scale) cfg.size_scale = *sim_scale;
      const auto data = simulate_trial(cfg, sim_seed, sim_replicate);
      write_dataset(sim_out, data);
      out << "wrote " << sim_out << ": " << data.communities.size() << " communities, "
          << data.individuals.records.size() << " cohort members, true ratio " << fixed(data.truth.ratio)
          << ", km " << fixed(data.truth.km, 3) << '\n';
      return 0;
    }

    if (*analyze_cmd) {
      aopts.estimator = parse_estimator(estimator);
      aopts.q_var = none_as_empty(q_var);
      aopts.g_var = none_as_empty(g_var);
      aopts.weighting = weighting == "size" ? Weighting::size : Weighting::equal;
      aopts.stage1 = stage1 == "tmle" ? Stage1Method::tmle : Stage1Method::empirical;
      aopts.stage1_vars = split_list(stage1_vars);
      const auto data = read_dataset(data_dir);
      const auto e = analyze(data.communities, data.individuals, aopts);
      print_estimate(out, e);
      if (!analyze_out.empty()) write_text(analyze_out, to_json(e).dump(2) + "\n");
      return 0;
    }

    if (*replicate) {
      auto cfg = load_scenario(rep_scenario);
      if (rep_null) cfg.effect_null = true;
      if (rep_scale) cfg.size_scale = *rep_scale;
      ropts.estimators.clear();
      for (const auto& name : split_list(rep_estimators)) {
        try {
          ropts.estimators.push_back(parse_estimator(name));
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      if (ropts.estimators.empty()) throw UsageError("--estimators is empty");
      AnalysisOptions analysis;
      analysis.weighting = rep_weighting == "size" ? Weighting::size : Weighting::equal;
      const auto report = run_replicates(cfg, ropts, analysis);
      print_report(out, report);
      if (!rep_out.empty()) write_text(rep_out, to_json(report).dump(2) + "\n");
      if (!rep_rows.empty()) write_replicate_rows_csv(rep_rows, report);
      return 0;
    }

    if (*scenario) {
      const auto text = to_json(load_scenario(scenario_name)).dump(2) + "\n";
      if (scenario_out.empty()) out << text;
      else write_text(scenario_out, text);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "crt: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "crt: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace crt
