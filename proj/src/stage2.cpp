#include "crt/stage2.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "crt/distributions.hpp"
#include "crt/numkit.hpp"

namespace crt {

namespace {

using Rows = std::vector<std::size_t>;

class FitFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> region_levels(const Communities& cs) {
  std::set<std::string> levels;
  for (const auto& c : cs) levels.insert(c.region);
  return {levels.begin(), levels.end()};
}

/// Adjustment columns for `var` (none, a named covariate, or region
/// indicators against the first level).
Eigen::MatrixXd covariate_columns(const Communities& cs, const Rows& rows,
                                  const std::optional<std::string>& var,
                                  const std::vector<std::string>& levels) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (!var) return Eigen::MatrixXd(n, 0);
  if (*var == kRegion) {
    const auto k = static_cast<Eigen::Index>(levels.size()) - 1;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, std::max<Eigen::Index>(k, 0));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index l = 0; l < k; ++l) x(i, l) = cs[rows[i]].region == levels[l + 1] ? 1.0 : 0.0;
    }
    return x;
  }
  Eigen::MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = cs[rows[i]].covariate(*var);
  return x;
}

struct Predictions {
  Eigen::VectorXd q1, q0;  // targeted E*(Y | A=a, E)
  Eigen::VectorXd g1;      // bounded P(A=1 | E)
};

/// Targeted fit of the outcome regression on a training subset.
class TargetedFit {
 public:
  TargetedFit(const Communities& cs, const Rows& train, std::optional<std::string> q_var,
              std::optional<std::string> g_var, std::vector<std::string> levels, const Stage2Options& opts,
              std::vector<std::string>* warnings)
      : q_var_(std::move(q_var)), g_var_(std::move(g_var)), levels_(std::move(levels)), g_bound_(opts.g_bound) {
    const auto n = static_cast<Eigen::Index>(train.size());
    Eigen::VectorXd y(n), a(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& c = cs[train[i]];
      y(i) = c.y;
      a(i) = c.arm;
      w(i) = c.weight;
    }
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(n);

    const Eigen::MatrixXd qcols = covariate_columns(cs, train, q_var_, levels_);
    Eigen::MatrixXd xq(n, 2 + qcols.cols());
    xq << Eigen::VectorXd::Ones(n), a, qcols;
    auto qfit = fit_logistic(xq, y, w, zeros);
    if (!qfit.converged) throw FitFailure("initial outcome regression did not converge");
    q_coef_ = qfit.coefficients;

    const Eigen::MatrixXd gcols = covariate_columns(cs, train, g_var_, levels_);
    Eigen::MatrixXd xg(n, 1 + gcols.cols());
    xg << Eigen::VectorXd::Ones(n), gcols;
    g_coef_ = fit_logistic(xg, a, w, zeros).coefficients;

    const Eigen::VectorXd eta_q = xq * q_coef_;
    const Eigen::VectorXd g1 = bounded_g(xg * g_coef_);
    Eigen::MatrixXd clever(n, 2);
    clever.col(0) = (a.array() / g1.array()).matrix();
    clever.col(1) = ((1.0 - a.array()) / (1.0 - g1.array())).matrix();
    auto fluct = fit_logistic(clever, y, w, eta_q);
    if (fluct.converged) {
      eps1_ = fluct.coefficients(0);
      eps0_ = fluct.coefficients(1);
    } else if (warnings) {
      warnings->push_back("fluctuation did not converge; using the initial outcome regression");
    }
  }

  [[nodiscard]] Predictions predict(const Communities& cs, const Rows& rows) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const Eigen::MatrixXd qcols = covariate_columns(cs, rows, q_var_, levels_);
    const Eigen::MatrixXd gcols = covariate_columns(cs, rows, g_var_, levels_);
    Eigen::MatrixXd xg(n, 1 + gcols.cols());
    xg << Eigen::VectorXd::Ones(n), gcols;
    const Eigen::VectorXd base = Eigen::VectorXd::Constant(n, q_coef_(0)) + qcols * q_coef_.tail(qcols.cols());

    Predictions p;
    p.g1 = bounded_g(xg * g_coef_);
    p.q1.resize(n);
    p.q0.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.q1(i) = expit(base(i) + q_coef_(1) + eps1_ / p.g1(i));
      p.q0(i) = expit(base(i) + eps0_ / (1.0 - p.g1(i)));
    }
    return p;
  }

  [[nodiscard]] double epsilon1() const { return eps1_; }
  [[nodiscard]] double epsilon0() const { return eps0_; }

 private:
  [[nodiscard]] Eigen::VectorXd bounded_g(const Eigen::VectorXd& eta) const {
    return eta.unaryExpr([this](double x) { return bound_probability(expit(x), g_bound_); });
  }

  std::optional<std::string> q_var_, g_var_;
  std::vector<std::string> levels_;
  double g_bound_;
  Eigen::VectorXd q_coef_, g_coef_;
  double eps1_ = 0.0, eps0_ = 0.0;
};

/// Independent-unit structure: pairs, or single communities.
struct Units {
  std::vector<int> ids;
  std::vector<std::size_t> unit_of;  // per community
  std::vector<Rows> members;
  int df = 0;
};

Units make_units(const Communities& cs, bool paired) {
  Units u;
  std::map<int, std::size_t> index;
  if (paired) {
    for (const auto& c : cs) index.emplace(c.pair_id, 0);
  } else {
    for (const auto& c : cs) {
      if (!index.emplace(c.id, 0).second) throw std::invalid_argument("duplicate community id " + std::to_string(c.id));
    }
  }
  for (auto& [id, idx] : index) {
    idx = u.ids.size();
    u.ids.push_back(id);
  }
  u.members.resize(u.ids.size());
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const auto k = index.at(paired ? cs[j].pair_id : cs[j].id);
    u.unit_of.push_back(k);
    u.members[k].push_back(j);
  }
  const int k = static_cast<int>(u.ids.size());
  u.df = paired ? k - 1 : static_cast<int>(cs.size()) - 2;
  return u;
}

Rows all_rows(const Communities& cs) {
  Rows r(cs.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

double total_weight(const Communities& cs) {
  double s = 0.0;
  for (const auto& c : cs) s += c.weight;
  return s;
}

/// Per-unit IC(a) = sum over members of (K w_j / sum w) I(A_j=a)/g(a|E_j) (Y_j - Q*(a,E_j)).
void unit_ics(const Communities& cs, const Rows& rows, const Predictions& p, const std::vector<std::size_t>& unit_of,
              double scale, std::vector<double>& ic1, std::vector<double>& ic0) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = cs[rows[i]];
    const double w = scale * c.weight;
    const auto k = unit_of[rows[i]];
    const auto ii = static_cast<Eigen::Index>(i);
    if (c.arm == 1) {
      ic1[k] += w / p.g1(ii) * (c.y - p.q1(ii));
    } else {
      ic0[k] += w / (1.0 - p.g1(ii)) * (c.y - p.q0(ii));
    }
  }
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

EffectEstimate summarize(const Communities& cs, const Predictions& p, const Units& units, const Stage2Options& opts) {
  const Rows rows = all_rows(cs);
  const double sw = total_weight(cs);
  EffectEstimate e;
  double s1 = 0.0, s0 = 0.0;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    s1 += cs[j].weight * p.q1(static_cast<Eigen::Index>(j));
    s0 += cs[j].weight * p.q0(static_cast<Eigen::Index>(j));
  }
  e.psi1 = s1 / sw;
  e.psi0 = s0 / sw;
  if (!(e.psi0 > 0.0)) throw std::domain_error("ratio undefined: estimated control mean is 0");
  if (!(e.psi1 > 0.0)) throw std::domain_error("ratio undefined: estimated intervention mean is 0");
  e.ratio = e.psi1 / e.psi0;
  e.log_ratio = std::log(e.ratio);

  const std::size_t k = units.ids.size();
  e.unit_ids = units.ids;
  e.unit_ic1.assign(k, 0.0);
  e.unit_ic0.assign(k, 0.0);
  unit_ics(cs, rows, p, units.unit_of, static_cast<double>(k) / sw, e.unit_ic1, e.unit_ic0);
  e.pair_ic.resize(k);
  std::vector<double> abs_ic(k);
  for (std::size_t u = 0; u < k; ++u) {
    e.pair_ic[u] = e.unit_ic1[u] / e.psi1 - e.unit_ic0[u] / e.psi0;
    abs_ic[u] = e.unit_ic1[u] - e.unit_ic0[u];
  }
  e.df = units.df;
  if (e.df < 1) throw std::invalid_argument("too few independent units for inference");
  e.log_se = std::sqrt(sample_variance(e.pair_ic) / static_cast<double>(k));
  e.abs_se = std::sqrt(sample_variance(abs_ic) / static_cast<double>(k));

  const double q = t_quantile(1.0 - opts.alpha / 2.0, e.df);
  if (e.log_se > 0.0) {
    e.t_statistic = e.log_ratio / e.log_se;
  } else {
    e.t_statistic = e.log_ratio == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), e.log_ratio);
  }
  e.p_value = t_two_sided_p(e.t_statistic, e.df);
  e.ci_lower = std::exp(e.log_ratio - q * e.log_se);
  e.ci_upper = std::exp(e.log_ratio + q * e.log_se);
  e.abs_difference = e.psi1 - e.psi0;
  e.abs_ci_lower = e.abs_difference - q * e.abs_se;
  e.abs_ci_upper = e.abs_difference + q * e.abs_se;
  return e;
}

void validate_common(const Communities& cs) {
  if (cs.empty()) throw std::invalid_argument("no communities");
  for (const auto& c : cs) {
    if (c.arm != 0 && c.arm != 1) throw std::invalid_argument("community " + std::to_string(c.id) + ": arm must be 0 or 1");
    if (!(c.y >= 0.0 && c.y <= 1.0)) throw std::invalid_argument("community " + std::to_string(c.id) + ": Y outside [0,1]");
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw std::invalid_argument("community " + std::to_string(c.id) + ": weight must be positive");
    }
  }
}

Predictions unadjusted_predictions(const Communities& cs) {
  double w1 = 0.0, w0 = 0.0, y1 = 0.0, y0 = 0.0;
  for (const auto& c : cs) {
    if (c.arm == 1) {
      w1 += c.weight;
      y1 += c.weight * c.y;
    } else {
      w0 += c.weight;
      y0 += c.weight * c.y;
    }
  }
  if (w1 <= 0.0 || w0 <= 0.0) throw std::invalid_argument("both arms must be represented");
  const auto n = static_cast<Eigen::Index>(cs.size());
  return {Eigen::VectorXd::Constant(n, y1 / w1), Eigen::VectorXd::Constant(n, y0 / w0),
          Eigen::VectorXd::Constant(n, w1 / (w1 + w0))};
}

EffectEstimate tmle_with_units(const Communities& cs, const std::optional<std::string>& q_var,
                               const std::optional<std::string>& g_var, const Units& units,
                               const Stage2Options& opts) {
  std::vector<std::string> warnings;
  try {
    TargetedFit fit(cs, all_rows(cs), q_var, g_var, region_levels(cs), opts, &warnings);
    auto e = summarize(cs, fit.predict(cs, all_rows(cs)), units, opts);
    e.estimator = "tmle";
    e.selected_q_var = q_var;
    e.selected_g_var = g_var;
    e.epsilon1 = fit.epsilon1();
    e.epsilon0 = fit.epsilon0();
    e.warnings = std::move(warnings);
    return e;
  } catch (const FitFailure& f) {
    auto e = summarize(cs, unadjusted_predictions(cs), units, opts);
    e.estimator = "tmle";
    e.warnings.push_back(std::string(f.what()) + "; falling back to the unadjusted estimator");
    return e;
  }
}

CandidateScore cv_with_units(const Communities& cs, const std::optional<std::string>& q_var,
                             const std::optional<std::string>& g_var, const Units& units,
                             const Stage2Options& opts) {
  CandidateScore score;
  score.q_var = q_var;
  score.g_var = g_var;
  const auto levels = region_levels(cs);
  const std::size_t k = units.ids.size();
  const double scale = static_cast<double>(k) / total_weight(cs);
  std::vector<double> held_out(k);
  try {
    for (std::size_t u = 0; u < k; ++u) {
      Rows train;
      for (std::size_t j = 0; j < cs.size(); ++j) {
        if (units.unit_of[j] != u) train.push_back(j);
      }
      TargetedFit fit(cs, train, q_var, g_var, levels, opts, nullptr);
      const auto pt = fit.predict(cs, train);
      double sw = 0.0, s1 = 0.0, s0 = 0.0;
      for (std::size_t i = 0; i < train.size(); ++i) {
        const double w = cs[train[i]].weight;
        sw += w;
        s1 += w * pt.q1(static_cast<Eigen::Index>(i));
        s0 += w * pt.q0(static_cast<Eigen::Index>(i));
      }
      if (!(s1 > 0.0 && s0 > 0.0)) throw FitFailure("training-fold mean is 0");
      const auto& valid = units.members[u];
      std::vector<double> ic1(k, 0.0), ic0(k, 0.0);
      unit_ics(cs, valid, fit.predict(cs, valid), units.unit_of, scale, ic1, ic0);
      held_out[u] = ic1[u] / (s1 / sw) - ic0[u] / (s0 / sw);
    }
  } catch (const std::exception& ex) {
    score.failure = ex.what();
    return score;
  }
  score.cv_variance = sample_variance(held_out) / static_cast<double>(k);
  if (!std::isfinite(score.cv_variance)) score.failure = "non-finite cross-validated variance";
  return score;
}

EffectEstimate adaptive_with_units(const Communities& cs, const std::vector<std::string>& q_candidates,
                                   const std::vector<std::string>& g_candidates, const Units& units,
                                   const Stage2Options& opts) {
  std::vector<CandidateScore> scores;
  auto select = [&](const std::vector<std::optional<std::string>>& qs,
                    const std::vector<std::optional<std::string>>& gs) {
    std::size_t best = scores.size();
    for (const auto& q : qs) {
      for (const auto& g : gs) {
        scores.push_back(cv_with_units(cs, q, g, units, opts));
        // strict improvement only: ties stay with the earlier, less adjusted candidate
        if (best == scores.size() - 1 || scores.back().cv_variance < scores[best].cv_variance) {
          best = scores.size() - 1;
        }
      }
    }
    return scores[best];
  };

  std::vector<std::optional<std::string>> qs{std::nullopt};
  for (const auto& q : q_candidates) qs.emplace_back(q);
  const auto q_choice = select(qs, {std::nullopt});

  std::optional<std::string> g_sel;
  if (q_choice.q_var) {
    std::vector<std::optional<std::string>> gs{std::nullopt};
    for (const auto& g : g_candidates) {
      if (g != *q_choice.q_var) gs.emplace_back(g);
    }
    g_sel = select({q_choice.q_var}, gs).g_var;
  }

  auto e = tmle_with_units(cs, q_choice.q_var, g_sel, units, opts);
  e.estimator = "adaptive_tmle";
  e.candidates = std::move(scores);
  return e;
}

}  // namespace

void validate_pairs(const Communities& cs) {
  validate_common(cs);
  std::map<int, std::pair<int, int>> arms;
  for (const auto& c : cs) {
    if (c.pair_id < 0) throw std::invalid_argument("community " + std::to_string(c.id) + ": missing pair_id");
    auto& [treated, control] = arms[c.pair_id];
    (c.arm == 1 ? treated : control) += 1;
  }
  for (const auto& [pair, counts] : arms) {
    if (counts.first != 1 || counts.second != 1) {
      throw std::invalid_argument("pair " + std::to_string(pair) + " must hold one intervention and one control community");
    }
  }
}

EffectEstimate unadjusted_effect(const Communities& cs, const Stage2Options& opts) {
  validate_pairs(cs);
  auto e = summarize(cs, unadjusted_predictions(cs), make_units(cs, true), opts);
  e.estimator = "unadjusted";
  return e;
}

EffectEstimate tmle_effect(const Communities& cs, const std::optional<std::string>& q_var,
                           const std::optional<std::string>& g_var, const Stage2Options& opts) {
  validate_pairs(cs);
  return tmle_with_units(cs, q_var, g_var, make_units(cs, true), opts);
}

CandidateScore cv_variance(const Communities& cs, const std::optional<std::string>& q_var,
                           const std::optional<std::string>& g_var, bool paired, const Stage2Options& opts) {
  if (paired) {
    validate_pairs(cs);
  } else {
    validate_common(cs);
  }
  return cv_with_units(cs, q_var, g_var, make_units(cs, paired), opts);
}

EffectEstimate adaptive_prespec(const Communities& cs, const std::vector<std::string>& q_candidates,
                                const std::vector<std::string>& g_candidates, const Stage2Options& opts) {
  validate_pairs(cs);
  const auto units = make_units(cs, true);
  if (units.ids.size() < 2) throw std::invalid_argument("adaptive_prespec: need at least two pairs");
  return adaptive_with_units(cs, q_candidates, g_candidates, units, opts);
}

EffectEstimate drop_pair_sensitivity(const Communities& cs, const std::string& var, const Stage2Options& opts) {
  validate_pairs(cs);
  std::map<int, std::vector<double>> values;
  for (const auto& c : cs) values[c.pair_id].push_back(c.covariate(var));
  if (values.size() < 3) throw std::invalid_argument("drop_pair_sensitivity: need at least three pairs");

  int worst = -1;
  double worst_gap = -1.0;
  bool tie = false;
  for (const auto& [pair, v] : values) {  // ascending pair id
    const double gap = std::abs(v[0] - v[1]);
    if (gap > worst_gap) {
      worst_gap = gap;
      worst = pair;
      tie = false;
    } else if (gap == worst_gap) {
      tie = true;
    }
  }
  Communities kept;
  for (const auto& c : cs) {
    if (c.pair_id != worst) kept.push_back(c);
  }
  auto e = adaptive_prespec(kept, {kBaselinePrevalence, kMcCoverage}, {kBaselinePrevalence, kMcCoverage}, opts);
  e.estimator = "drop_pair";
  e.dropped_pair = worst;
  if (tie) e.warnings.push_back("tie for largest discrepancy on " + var + "; dropped lowest pair id");
  return e;
}

EffectEstimate break_match_effect(const Communities& cs, const std::vector<std::string>& candidates,
                                  const Stage2Options& opts) {
  validate_common(cs);
  int n1 = 0, n0 = 0;
  for (const auto& c : cs) (c.arm == 1 ? n1 : n0) += 1;
  if (n1 < 3 || n0 < 3) throw std::invalid_argument("break_match_effect: need at least three communities per arm");
  auto e = adaptive_with_units(cs, candidates, candidates, make_units(cs, false), opts);
  e.estimator = "break_match";
  return e;
}

}  // namespace crt
