#include "hetrisk/glm.hpp"

#include <algorithm>
#include <cmath>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double penalized_log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y, double ridge) {
  double ll = log_likelihood(beta, x, y);
  if (ridge > 0.0) ll -= 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
  return ll;
}

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd xw = x.array().colwise() * w.array().sqrt();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  h.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  return h.selfadjointView<Eigen::Lower>();
}

void add_ridge(Eigen::MatrixXd& h, double ridge) {
  if (ridge <= 0.0) return;
  for (Eigen::Index j = 1; j < h.rows(); ++j) h(j, j) += ridge;
}

// Smallest eigenvalue of L^-1 H L^-T with L L^T = X^T X / 4. The ratio is 1
// when every weight sits at its maximum 1/4 and tends to 0 along directions in
// which all fitted probabilities are pushed to 0 or 1 (separation).
double information_ratio(const Eigen::MatrixXd& x, const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd g = 0.25 * (x.transpose() * x);
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success) return 0.0;
  const Eigen::MatrixXd a = llt.matrixL().solve(h);
  const Eigen::MatrixXd m = llt.matrixL().solve(a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

constexpr double kSeparationRatio = 1e-8;
constexpr double kMinRcond = 1e-13;

}  // namespace

double log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - log1pexp(eta(i));
  return ll;
}

Eigen::VectorXd score(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = y(i) - sigmoid(eta(i));
  return x.transpose() * resid;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitConfig& cfg,
                         const Eigen::VectorXd* start) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (p == 0) throw DataError("design has no columns");
  if (n < p) {
    throw DataError("need at least as many records as columns (n=" + std::to_string(n) +
                    ", columns=" + std::to_string(p) + ")");
  }
  if (y.size() != n) throw DataError("outcome length does not match design rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("outcomes must be 0 or 1");
  }
  const double ybar = y.mean();
  if ((ybar == 0.0 || ybar == 1.0) && cfg.ridge <= 0.0) {
    throw SingularError("singular/separation: outcome is constant; retry with ridge > 0");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (start != nullptr && start->size() == p) {
    beta = *start;
  } else if (ybar > 0.0 && ybar < 1.0 && (x.col(0).array() == 1.0).all()) {
    beta(0) = logit(ybar);
  }

  LogisticFit fit;
  fit.n = static_cast<std::size_t>(n);
  double ll = penalized_log_likelihood(beta, x, y, cfg.ridge);
  fit.trace.push_back(ll);
  Eigen::VectorXd w(n);
  Eigen::VectorXd resid(n);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = sigmoid(eta(i));
      w(i) = mu * (1.0 - mu);
      resid(i) = y(i) - mu;
    }
    Eigen::VectorXd grad = x.transpose() * resid;
    if (cfg.ridge > 0.0) grad.tail(p - 1) -= cfg.ridge * beta.tail(p - 1);
    Eigen::MatrixXd h = weighted_gram(x, w);
    add_ridge(h, cfg.ridge);

    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success || llt.rcond() < kMinRcond) {
      throw SingularError("singular/separation: information matrix is singular at iteration " +
                          std::to_string(iter) + "; retry with ridge > 0");
    }
    Eigen::VectorXd step = llt.solve(grad);

    Eigen::VectorXd candidate = beta + step;
    double ll_new = penalized_log_likelihood(candidate, x, y, cfg.ridge);
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    int halvings = 0;
    while (!(ll_new >= ll - slack) && halvings < cfg.max_halvings) {
      step *= 0.5;
      candidate = beta + step;
      ll_new = penalized_log_likelihood(candidate, x, y, cfg.ridge);
      ++halvings;
    }
    fit.iterations = iter;
    if (!(ll_new >= ll - slack)) {
      // no ascent direction left at machine precision
      fit.converged = score(beta, x, y).cwiseAbs().maxCoeff() <= 1e-6;
      break;
    }
    const double max_step = step.cwiseAbs().maxCoeff();
    const double deviance_change = 2.0 * std::abs(ll_new - ll);
    beta = candidate;
    ll = ll_new;
    fit.trace.push_back(ll);
    if (max_step < cfg.tol || deviance_change < cfg.deviance_tol) {
      fit.converged = true;
      break;
    }
  }

  // information at the returned coefficients
  const Eigen::VectorXd eta = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = sigmoid(eta(i));
    w(i) = mu * (1.0 - mu);
  }
  Eigen::MatrixXd h = weighted_gram(x, w);
  if (cfg.ridge <= 0.0 && information_ratio(x, h) < kSeparationRatio) {
    throw SingularError(
        "singular/separation: fitted probabilities collapse to 0 or 1; retry with ridge > 0");
  }
  add_ridge(h, cfg.ridge);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success || llt.rcond() < kMinRcond) {
    throw SingularError("singular/separation: information matrix is singular at the optimum");
  }
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (cov + cov.transpose());
  fit.coefficients = std::move(beta);
  fit.log_likelihood = log_likelihood(fit.coefficients, x, y);
  return fit;
}

LogisticFit fit_design(const Design& d, const FitConfig& cfg, const Eigen::VectorXd* start) {
  LogisticFit fit = fit_logistic(d.x, d.y, cfg, start);
  fit.terms = d.spec.names();
  fit.dropped = d.dropped;
  return fit;
}

double bic_score(double log_lik, std::size_t k, std::size_t n, BicConvention convention) {
  const double penalty = static_cast<double>(k) * std::log(static_cast<double>(n));
  if (convention == BicConvention::conventional) return log_lik - 0.5 * penalty;
  return log_lik - penalty;
}

double linear_predictor(const Eigen::VectorXd& beta, const Eigen::VectorXd& row) {
  return beta.dot(row);
}

double predict_risk(const LogisticFit& fit, const EncodingSpec& spec, const PatientRecord& r) {
  if (static_cast<Eigen::Index>(spec.terms.size()) != fit.coefficients.size()) {
    throw DataError("encoding does not match the fitted coefficients");
  }
  return sigmoid(linear_predictor(fit.coefficients, encode_row(r, spec)));
}

WaldRow wald_row(std::string term, double estimate, double std_error) {
  constexpr double kZ = 1.959963984540054;
  WaldRow row;
  row.term = std::move(term);
  row.estimate = estimate;
  row.std_error = std_error;
  row.odds_ratio = std::exp(estimate);
  row.ci_low = std::exp(estimate - kZ * std_error);
  row.ci_high = std::exp(estimate + kZ * std_error);
  if (std_error > 0.0) {
    row.p_value = std::erfc(std::abs(estimate / std_error) / std::sqrt(2.0));
  } else {
    row.p_value = estimate == 0.0 ? 1.0 : 0.0;
  }
  return row;
}

std::vector<WaldRow> wald_summary(const LogisticFit& fit) {
  if (!fit.converged) throw NumericError("Wald summary requires a converged fit");
  std::vector<WaldRow> out;
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    const double var = fit.covariance(j, j);
    if (!(var >= 0.0)) throw NumericError("invalid covariance matrix");
    std::string name = static_cast<std::size_t>(j) < fit.terms.size()
                           ? fit.terms[static_cast<std::size_t>(j)]
                           : "x" + std::to_string(j);
    out.push_back(wald_row(std::move(name), fit.coefficients(j), std::sqrt(var)));
  }
  return out;
}

}  // namespace hetrisk
