#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "hetrisk/encoding.hpp"

namespace hetrisk {

/// Logistic function evaluated without overflow for any finite argument.
inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct FitConfig {
  int max_iter = 100;
  double tol = 1e-8;         // on max |delta beta|
  double deviance_tol = 1e-10;
  double ridge = 0.0;        // added to the negative Hessian diagonal (not the intercept)
  int max_halvings = 10;
  bool operator==(const FitConfig&) const = default;
};

/// Maximum-likelihood logistic regression fit.
struct LogisticFit {
  std::vector<std::string> terms;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // inverse observed information at the optimum
  double log_likelihood = 0.0;
  std::size_t n = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<DroppedTerm> dropped;
  /// Log-likelihood at the start value and after every accepted step.
  std::vector<double> trace;

  Eigen::Index size() const { return coefficients.size(); }
};

/// Sum of y log p + (1 - y) log(1 - p), p = sigmoid(x beta), computed from the
/// linear predictor with log1p/exp so no probability is ever clipped.
double log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y);

/// Gradient of the log-likelihood: X^T (y - p).
Eigen::VectorXd score(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y);

/// Newton-Raphson / IRLS with step halving. Throws SingularError when the
/// information matrix is singular or the data are separated (ridge = 0).
/// Non-convergence within max_iter returns converged = false.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const FitConfig& cfg = {}, const Eigen::VectorXd* start = nullptr);

/// fit_logistic on an encoded design, carrying term names and dropped columns.
LogisticFit fit_design(const Design& d, const FitConfig& cfg = {},
                       const Eigen::VectorXd* start = nullptr);

enum class BicConvention {
  /// log-likelihood - k * ln(n)
  log_likelihood_penalty,
  /// -(−2 logL + k ln n) / 2, the conventional BIC rescaled to the same "larger is better" scale
  conventional,
};

/// Model score to maximize. k counts covariates excluding the intercept.
double bic_score(double log_lik, std::size_t k, std::size_t n,
                 BicConvention convention = BicConvention::log_likelihood_penalty);

/// sigmoid(beta . row) for a record encoded with `spec` (must match the fit's terms).
double predict_risk(const LogisticFit& fit, const EncodingSpec& spec, const PatientRecord& r);
double linear_predictor(const Eigen::VectorXd& beta, const Eigen::VectorXd& row);

struct WaldRow {
  std::string term;
  double estimate = 0.0;
  double std_error = 0.0;
  double odds_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double p_value = 1.0;
};

/// Odds ratios with Wald 95% intervals and two-sided normal p-values.
/// Throws NumericError for a non-converged fit.
std::vector<WaldRow> wald_summary(const LogisticFit& fit);
WaldRow wald_row(std::string term, double estimate, double std_error);

}  // namespace hetrisk
