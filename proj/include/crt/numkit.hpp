#pragma once

// Numerical kernels shared by the estimators and the simulator: bounded
// logistic link, quasi-binomial logistic regression by IRLS, and
// multivariate-normal sampling. Everything here is templated on the scalar
// type of the Eigen inputs; the rest of the library instantiates double.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>

#include "crt/rng.hpp"

namespace crt {

/// Raised when the IRLS working matrix X'WX cannot be factored.
class SingularFitError : public std::runtime_error {
 public:
  explicit SingularFitError(int iteration)
      : std::runtime_error("logistic fit: singular working matrix at iteration " +
                           std::to_string(iteration)),
        iteration_(iteration) {}
  [[nodiscard]] int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

template <typename Scalar>
Scalar expit(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  using std::log;
  if (!(p > Scalar(0) && p < Scalar(1))) {
    throw std::domain_error("logit: argument must lie strictly inside (0,1)");
  }
  return log(p / (Scalar(1) - p));
}

/// Clamp a probability into [lo, 1-lo]; callers bound before taking logit.
template <typename Scalar>
Scalar bound_probability(Scalar p, Scalar lo) {
  return p < lo ? lo : (p > Scalar(1) - lo ? Scalar(1) - lo : p);
}

template <typename Scalar = double>
struct GlmFit {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> coefficients;
  bool converged = false;
  int iterations = 0;
  Scalar max_abs_score = Scalar(0);
  Scalar deviance = Scalar(0);
};

struct IrlsOptions {
  int max_iter = 100;
  double relative_tolerance = 1e-10;  // on deviance change
  double score_tolerance = 1e-8;      // on max |X'W(y - mu)|
  double boundary = 1e-10;            // fitted mu this close to 0/1 => separation
};

namespace detail {

template <typename Scalar>
Scalar bernoulli_deviance_term(Scalar y, Scalar mu) {
  using std::log;
  Scalar d = Scalar(0);
  if (y > Scalar(0)) d += y * log(y / mu);
  if (y < Scalar(1)) d += (Scalar(1) - y) * log((Scalar(1) - y) / (Scalar(1) - mu));
  return Scalar(2) * d;
}

}  // namespace detail

/// Weighted quasi-binomial logistic regression with offset, by Newton-IRLS
/// with step halving.
///
/// Responses may be fractions in [0,1]. Converges when the relative deviance
/// change drops below `relative_tolerance` and the score is below
/// `score_tolerance`. Separation (fitted probabilities pinned at 0 or 1) is
/// reported as converged=false with the last finite coefficients kept.
/// Throws SingularFitError when X'WX is rank deficient.
template <typename DerivedX, typename DerivedY, typename DerivedW,
          typename DerivedO>
GlmFit<typename DerivedX::Scalar> fit_logistic(
    const Eigen::MatrixBase<DerivedX>& design,
    const Eigen::MatrixBase<DerivedY>& response,
    const Eigen::MatrixBase<DerivedW>& weights,
    const Eigen::MatrixBase<DerivedO>& offset, const IrlsOptions& opts = {}) {
  using Scalar = typename DerivedX::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (response.size() != n || weights.size() != n || offset.size() != n) {
    throw std::invalid_argument("fit_logistic: dimension mismatch");
  }
  if (!design.allFinite() || !response.allFinite() || !weights.allFinite() ||
      !offset.allFinite()) {
    throw std::invalid_argument("fit_logistic: non-finite input");
  }
  if ((response.array() < Scalar(0)).any() || (response.array() > Scalar(1)).any()) {
    throw std::invalid_argument("fit_logistic: response outside [0,1]");
  }
  if ((weights.array() < Scalar(0)).any()) {
    throw std::invalid_argument("fit_logistic: negative weight");
  }

  auto fitted = [&](const Vec& beta) {
    Vec eta = design * beta + offset;
    return eta.unaryExpr([](Scalar x) { return expit(x); }).eval();
  };
  auto deviance = [&](const Vec& mu) {
    Scalar d = Scalar(0);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) > Scalar(0)) {
        d += weights(i) * detail::bernoulli_deviance_term(response(i), mu(i));
      }
    }
    return d;
  };

  GlmFit<Scalar> fit;
  Vec beta = Vec::Zero(p);
  Vec mu = fitted(beta);
  Scalar dev = deviance(mu);
  Vec score = design.transpose() * (weights.array() * (response - mu).array()).matrix();

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    fit.iterations = iter;
    Vec w = (weights.array() * mu.array() * (Scalar(1) - mu.array())).matrix();
    Mat info = design.transpose() * w.asDiagonal() * design;
    Eigen::LDLT<Mat> ldlt(info);
    const auto d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || p == 0 ||
        d.minCoeff() <= Scalar(1e-13) * d.maxCoeff() || d.maxCoeff() <= Scalar(0)) {
      throw SingularFitError(iter);
    }
    Vec step = ldlt.solve(score);

    Vec next = beta + step;
    Vec mu_next = fitted(next);
    Scalar dev_next = deviance(mu_next);
    for (int halving = 0; halving < 40 && !(std::isfinite(static_cast<double>(dev_next)) &&
                                            dev_next <= dev * (Scalar(1) + Scalar(1e-12)) + Scalar(1e-300));
         ++halving) {
      step *= Scalar(0.5);
      next = beta + step;
      mu_next = fitted(next);
      dev_next = deviance(mu_next);
    }
    if (!next.allFinite() || !std::isfinite(static_cast<double>(dev_next))) break;

    const Scalar change = std::abs(dev_next - dev) / (std::abs(dev_next) + Scalar(0.1));
    beta = next;
    mu = mu_next;
    dev = dev_next;
    score = design.transpose() * (weights.array() * (response - mu).array()).matrix();
    const Scalar max_score = score.size() ? score.cwiseAbs().maxCoeff() : Scalar(0);
    if (change < Scalar(opts.relative_tolerance) && max_score <= Scalar(opts.score_tolerance)) {
      fit.converged = true;
      break;
    }
  }

  // A few extra full Newton steps once converged: each roughly squares the
  // score, taking it to rounding level. Kept only while the score shrinks.
  for (int polish = 0; fit.converged && polish < 3; ++polish) {
    Vec w = (weights.array() * mu.array() * (Scalar(1) - mu.array())).matrix();
    Eigen::LDLT<Mat> ldlt(design.transpose() * w.asDiagonal() * design);
    if (ldlt.info() != Eigen::Success) break;
    const Vec next = beta + ldlt.solve(score);
    const Vec mu_next = fitted(next);
    const Vec score_next = design.transpose() * (weights.array() * (response - mu_next).array()).matrix();
    if (!next.allFinite() || !(score_next.cwiseAbs().maxCoeff() < score.cwiseAbs().maxCoeff())) break;
    beta = next;
    mu = mu_next;
    score = score_next;
    dev = deviance(mu);
  }

  fit.coefficients = beta;
  fit.deviance = dev;
  fit.max_abs_score = score.size() ? score.cwiseAbs().maxCoeff() : Scalar(0);
  if (fit.max_abs_score > Scalar(opts.score_tolerance)) fit.converged = false;
  for (Eigen::Index i = 0; i < n && fit.converged; ++i) {
    if (weights(i) > Scalar(0) &&
        (mu(i) < Scalar(opts.boundary) || mu(i) > Scalar(1) - Scalar(opts.boundary))) {
      fit.converged = false;
    }
  }
  return fit;
}

/// Unit weights, zero offset.
template <typename DerivedX, typename DerivedY>
GlmFit<typename DerivedX::Scalar> fit_logistic(const Eigen::MatrixBase<DerivedX>& design,
                                               const Eigen::MatrixBase<DerivedY>& response,
                                               const IrlsOptions& opts = {}) {
  using Vec = Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1>;
  const auto n = design.rows();
  return fit_logistic(design, response, Vec::Ones(n), Vec::Zero(n), opts);
}

/// Raised for covariance matrices that are not positive semidefinite.
class NotPsdError : public std::invalid_argument {
 public:
  explicit NotPsdError(Eigen::Index minor)
      : std::invalid_argument("mvn_sample: covariance not positive semidefinite; leading minor of order " +
                              std::to_string(minor) + " has a negative eigenvalue"),
        minor_(minor) {}
  [[nodiscard]] Eigen::Index leading_minor() const noexcept { return minor_; }

 private:
  Eigen::Index minor_;
};

/// Factor F with F F' = covariance: Cholesky when positive definite, a
/// symmetric eigendecomposition for semidefinite input.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance_factor(
    const Eigen::MatrixBase<Derived>& covariance) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index k = covariance.rows();
  if (covariance.cols() != k) throw std::invalid_argument("mvn_sample: covariance not square");
  const Mat sym = covariance;
  const Scalar scale = std::max(Scalar(1), sym.cwiseAbs().maxCoeff());
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
    throw std::invalid_argument("mvn_sample: covariance not symmetric");
  }
  Eigen::LLT<Mat> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const Scalar tol = Scalar(1e-10) * scale;
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.eigenvalues().minCoeff() < -tol) {
    for (Eigen::Index m = 1; m <= k; ++m) {
      Eigen::SelfAdjointEigenSolver<Mat> sub(sym.topLeftCorner(m, m), Eigen::EigenvaluesOnly);
      if (sub.eigenvalues().minCoeff() < -tol) throw NotPsdError(m);
    }
    throw NotPsdError(k);
  }
  const auto root = eig.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

/// One draw from N(mean, covariance). Deterministic per stream state.
template <typename DerivedM, typename DerivedC>
Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, 1> mvn_sample(
    RngStream& rng, const Eigen::MatrixBase<DerivedM>& mean,
    const Eigen::MatrixBase<DerivedC>& covariance) {
  using Scalar = typename DerivedM::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (covariance.rows() != mean.size()) throw std::invalid_argument("mvn_sample: dimension mismatch");
  const auto factor = covariance_factor(covariance);
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = static_cast<Scalar>(rng.normal());
  return mean + factor * z;
}

}  // namespace crt
