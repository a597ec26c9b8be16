#include "hetrisk/impute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetrisk/error.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/rng.hpp"

namespace hetrisk {

void validate(const ImputationConfig& cfg) {
  if (cfg.imputations < 1) throw DataError("imputations must be >= 1");
  if (cfg.cycles < 1) throw DataError("cycles must be >= 1");
  if (cfg.donors < 1) throw DataError("donors must be >= 1");
}

TrainingMeans training_means(std::span<const PatientRecord* const> records) {
  TrainingMeans m;
  std::array<double, kFactorCount> sum{};
  std::array<double, kFactorCount> sum_log2{};
  std::array<std::array<double, 2>, kFactorCount> counts{};
  std::array<double, 3> bins{};
  std::array<double, 4> fh{};
  double fh_n = 0.0;
  for (const PatientRecord* rp : records) {
    const auto& r = *rp;
    for (Factor f : kAllFactors) {
      const auto v = f == Factor::age ? std::optional<double>(r.age)
                     : f == Factor::psa ? std::optional<double>(r.psa)
                                        : r.get(f);
      if (!v) continue;
      const auto k = index_of(f);
      ++m.observed[k];
      sum[k] += *v;
      if (*v > 0.0) sum_log2[k] += std::log2(*v);
      if (kind_of(f) != FactorKind::continuous) counts[k][*v != 0.0 ? 1 : 0] += 1.0;
      if (f == Factor::volume) bins[static_cast<std::size_t>(volume_bin(*v))] += 1.0;
    }
    const auto a = r.get(Factor::fh_pca_second);
    const auto b = r.get(Factor::fh_breast_first);
    if (a && b) {
      fh[static_cast<std::size_t>(fh_extended_level(*a, *b))] += 1.0;
      fh_n += 1.0;
    }
  }
  for (Factor f : kAllFactors) {
    const auto k = index_of(f);
    if (m.observed[k] == 0) continue;
    const double n = static_cast<double>(m.observed[k]);
    m.mean_identity[k] = sum[k] / n;
    if (kind_of(f) == FactorKind::continuous) m.mean_log2[k] = sum_log2[k] / n;
    if (kind_of(f) != FactorKind::continuous) {
      m.raw_proportions[k] = {counts[k][0] / n, counts[k][1] / n};
    }
  }
  const double nv = static_cast<double>(m.observed[index_of(Factor::volume)]);
  if (nv > 0) {
    for (std::size_t i = 0; i < 3; ++i) m.volume_bin_proportions[i] = bins[i] / nv;
  }
  if (fh_n > 0) {
    for (std::size_t i = 0; i < 4; ++i) m.fh_extended_proportions[i] = fh[i] / fh_n;
  }
  return m;
}

TrainingMeans training_means(const Dataset& d) {
  const auto refs = d.refs();
  return training_means(refs);
}

Eigen::VectorXd mean_impute_target(const PatientRecord& r, const EncodingSpec& spec,
                                   const TrainingMeans& means) {
  return encode_row_imputed(r, spec, means);
}

namespace {

constexpr std::size_t kOutcomeColumn = kFactorCount;

double model_scale(Factor f, double v) {
  return f == Factor::volume || f == Factor::psa ? std::log2(v) : v;
}

/// Imputation state shared by every sweep of one imputation.
class ChainedImputer {
 public:
  ChainedImputer(const Dataset& d, const ImputationConfig& cfg, std::vector<std::size_t> order)
      : data_(d), cfg_(cfg), order_(std::move(order)) {
    const auto n = static_cast<Eigen::Index>(d.size());
    base_.resize(n, static_cast<Eigen::Index>(kFactorCount + 1));
    base_.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = d[static_cast<std::size_t>(i)];
      base_(i, static_cast<Eigen::Index>(index_of(Factor::age))) = r.age;
      base_(i, static_cast<Eigen::Index>(index_of(Factor::psa))) = std::log2(r.psa);
      for (Factor f : kOptionalFactors) {
        if (auto v = r.get(f)) base_(i, static_cast<Eigen::Index>(index_of(f))) = model_scale(f, *v);
      }
      base_(i, static_cast<Eigen::Index>(kOutcomeColumn)) = r.outcome;
    }
    for (Factor f : kOptionalFactors) {
      Target t;
      t.factor = f;
      for (std::size_t i : order_) {
        (d[i].has(f) ? t.observed : t.missing).push_back(i);
      }
      if (t.missing.empty()) continue;
      if (t.observed.empty()) {
        throw DataError("cannot impute " + std::string(name_of(f)) +
                        ": it is not observed in any training record");
      }
      targets_.push_back(std::move(t));
    }
  }

  bool nothing_missing() const { return targets_.empty(); }

  Dataset run(std::uint64_t seed, int index, std::vector<std::string>& warnings) {
    Rng rng(seed);
    Eigen::MatrixXd z = base_;
    std::vector<double> raw_volume(data_.size(), 0.0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (auto v = data_[i].get(Factor::volume)) raw_volume[i] = *v;
    }
    // initial fill from the observed marginal
    for (const auto& t : targets_) {
      const auto col = static_cast<Eigen::Index>(index_of(t.factor));
      for (std::size_t i : t.missing) {
        const std::size_t donor = t.observed[static_cast<std::size_t>(rng() % t.observed.size())];
        z(static_cast<Eigen::Index>(i), col) = z(static_cast<Eigen::Index>(donor), col);
        if (t.factor == Factor::volume) raw_volume[i] = raw_volume[donor];
      }
    }
    std::vector<Eigen::VectorXd> warm(targets_.size());
    for (int cycle = 0; cycle < cfg_.cycles; ++cycle) {
      for (std::size_t k = 0; k < targets_.size(); ++k) {
        const auto& t = targets_[k];
        try {
          if (t.factor == Factor::volume) {
            draw_pmm(t, z, raw_volume, rng);
          } else {
            draw_binary(t, z, rng, warm[k]);
          }
        } catch (const Error& e) {
          warnings.push_back("imputation " + std::to_string(index + 1) + " cycle " +
                             std::to_string(cycle + 1) + ": conditional model for " +
                             std::string(name_of(t.factor)) + " failed (" + e.what() +
                             "); used marginal draws");
          warm[k].resize(0);
          draw_marginal(t, z, raw_volume, rng);
        }
      }
    }
    std::vector<PatientRecord> out(data_.records().begin(), data_.records().end());
    for (const auto& t : targets_) {
      const auto col = static_cast<Eigen::Index>(index_of(t.factor));
      for (std::size_t i : t.missing) {
        out[i].set(t.factor, t.factor == Factor::volume ? raw_volume[i]
                                                        : z(static_cast<Eigen::Index>(i), col));
      }
    }
    return Dataset(std::move(out));
  }

 private:
  struct Target {
    Factor factor = Factor::dre;
    std::vector<std::size_t> observed;  // canonical order
    std::vector<std::size_t> missing;
  };

  /// Intercept plus every other column of z that varies over the fitting rows.
  std::vector<Eigen::Index> predictor_columns(const Target& t, const Eigen::MatrixXd& z) const {
    std::vector<Eigen::Index> cols;
    const auto self = static_cast<Eigen::Index>(index_of(t.factor));
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (c == self) continue;
      const double first = z(static_cast<Eigen::Index>(t.observed.front()), c);
      bool varies = false;
      for (std::size_t i : t.observed) {
        if (z(static_cast<Eigen::Index>(i), c) != first) {
          varies = true;
          break;
        }
      }
      if (varies) cols.push_back(c);
    }
    return cols;
  }

  static Eigen::MatrixXd gather(const Eigen::MatrixXd& z, const std::vector<std::size_t>& rows,
                                const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()) + 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      x(i, 0) = 1.0;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        x(i, static_cast<Eigen::Index>(c) + 1) = z(static_cast<Eigen::Index>(rows[r]), cols[c]);
      }
    }
    return x;
  }

  static Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd e(mean.size());
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = nd(rng);
    return mean + llt.matrixL() * e;
  }

  void draw_binary(const Target& t, Eigen::MatrixXd& z, Rng& rng, Eigen::VectorXd& warm) const {
    const auto col = static_cast<Eigen::Index>(index_of(t.factor));
    Eigen::VectorXd y(static_cast<Eigen::Index>(t.observed.size()));
    for (std::size_t r = 0; r < t.observed.size(); ++r) {
      y(static_cast<Eigen::Index>(r)) = z(static_cast<Eigen::Index>(t.observed[r]), col);
    }
    if ((y.array() == y(0)).all()) {
      for (std::size_t i : t.missing) z(static_cast<Eigen::Index>(i), col) = y(0);
      return;
    }
    const auto cols = predictor_columns(t, z);
    const Eigen::MatrixXd x = gather(z, t.observed, cols);
    FitConfig fc;
    fc.max_iter = 50;
    const Eigen::VectorXd* start = warm.size() == x.cols() ? &warm : nullptr;
    const auto fit = fit_logistic(x, y, fc, start);
    if (!fit.converged) throw NumericError("did not converge");
    warm = fit.coefficients;
    const Eigen::VectorXd beta = mvn_draw(fit.coefficients, fit.covariance, rng);
    const Eigen::MatrixXd xm = gather(z, t.missing, cols);
    const Eigen::VectorXd eta = xm * beta;
    for (std::size_t r = 0; r < t.missing.size(); ++r) {
      const double p = sigmoid(eta(static_cast<Eigen::Index>(r)));
      z(static_cast<Eigen::Index>(t.missing[r]), col) = uniform01(rng) < p ? 1.0 : 0.0;
    }
  }

  void draw_pmm(const Target& t, Eigen::MatrixXd& z, std::vector<double>& raw_volume, Rng& rng) const {
    const auto col = static_cast<Eigen::Index>(index_of(t.factor));
    const auto cols = predictor_columns(t, z);
    const Eigen::MatrixXd x = gather(z, t.observed, cols);
    Eigen::VectorXd y(x.rows());
    for (std::size_t r = 0; r < t.observed.size(); ++r) {
      y(static_cast<Eigen::Index>(r)) = z(static_cast<Eigen::Index>(t.observed[r]), col);
    }
    const auto n = x.rows();
    const auto p = x.cols();
    if (n <= p) throw NumericError("too few observed rows for the volume model");
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::LLT<Eigen::MatrixXd> llt(xtx);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
      throw SingularError("singular volume design");
    }
    const Eigen::VectorXd beta_hat = llt.solve(x.transpose() * y);
    const double rss = (y - x * beta_hat).squaredNorm();
    std::chi_squared_distribution<double> chi(static_cast<double>(n - p));
    const double sigma2 = rss / chi(rng);
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::VectorXd beta_star = mvn_draw(beta_hat, sigma2 * inv, rng);

    // observed rows matched on beta_hat, missing rows on the drawn beta
    const Eigen::VectorXd fitted = x * beta_hat;
    std::vector<std::size_t> sorted(static_cast<std::size_t>(n));
    std::iota(sorted.begin(), sorted.end(), 0);
    std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
      return fitted(static_cast<Eigen::Index>(a)) < fitted(static_cast<Eigen::Index>(b));
    });
    std::vector<double> keys(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) keys[k] = fitted(static_cast<Eigen::Index>(sorted[k]));

    const Eigen::MatrixXd xm = gather(z, t.missing, cols);
    const Eigen::VectorXd target = xm * beta_star;
    const auto donors = std::min<std::size_t>(static_cast<std::size_t>(cfg_.donors), sorted.size());
    for (std::size_t r = 0; r < t.missing.size(); ++r) {
      const double v = target(static_cast<Eigen::Index>(r));
      // expand a window around the insertion point to the `donors` nearest
      auto hi = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), v) - keys.begin());
      auto lo = hi;
      while (hi - lo < donors) {
        const bool take_low = lo > 0 && (hi >= keys.size() || v - keys[lo - 1] <= keys[hi] - v);
        if (take_low) {
          --lo;
        } else {
          ++hi;
        }
      }
      const std::size_t pick = sorted[lo + static_cast<std::size_t>(rng() % donors)];
      const std::size_t donor = t.observed[pick];
      const std::size_t i = t.missing[r];
      raw_volume[i] = raw_volume[donor];
      z(static_cast<Eigen::Index>(i), col) = z(static_cast<Eigen::Index>(donor), col);
    }
  }

  void draw_marginal(const Target& t, Eigen::MatrixXd& z, std::vector<double>& raw_volume, Rng& rng) const {
    const auto col = static_cast<Eigen::Index>(index_of(t.factor));
    for (std::size_t i : t.missing) {
      const std::size_t donor = t.observed[static_cast<std::size_t>(rng() % t.observed.size())];
      z(static_cast<Eigen::Index>(i), col) = z(static_cast<Eigen::Index>(donor), col);
      if (t.factor == Factor::volume) raw_volume[i] = raw_volume[donor];
    }
  }

  const Dataset& data_;
  const ImputationConfig& cfg_;
  std::vector<std::size_t> order_;
  Eigen::MatrixXd base_;
  std::vector<Target> targets_;
};

}  // namespace

ImputationResult chained_impute(const Dataset& training, const ImputationConfig& cfg) {
  validate(cfg);
  if (training.empty()) throw DataError("cannot impute an empty training set");
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return training[a].cohort < training[b].cohort;
  });
  ChainedImputer imputer(training, cfg, std::move(order));
  ImputationResult result;
  result.datasets.reserve(static_cast<std::size_t>(cfg.imputations));
  for (int k = 0; k < cfg.imputations; ++k) {
    if (imputer.nothing_missing()) {
      result.datasets.push_back(training);
    } else {
      result.datasets.push_back(
          imputer.run(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)), k, result.warnings));
    }
  }
  return result;
}

}  // namespace hetrisk
