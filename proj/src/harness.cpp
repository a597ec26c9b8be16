#include "hetrisk/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "hetrisk/error.hpp"
#include "hetrisk/rng.hpp"

namespace hetrisk {

PatternMask drop_most_missing(PatternMask p, const std::array<double, kFactorCount>& missing_rates) {
  const auto factors = p.factors();
  if (factors.empty()) throw DataError("cannot drop a factor from the empty pattern");
  Factor worst = factors.front();
  for (Factor f : factors) {
    if (missing_rates[index_of(f)] >= missing_rates[index_of(worst)]) worst = f;
  }
  return p.without(worst);
}

namespace {

std::string pattern_text(PatternMask p) {
  const auto s = p.to_string();
  return std::to_string(p.bits()) + " {" + s + "}";
}

class TailoredFitter {
 public:
  TailoredFitter(const Dataset& training, Strategy s, const StrategyConfig& cfg)
      : training_(training), strategy_(s), cfg_(cfg), rates_(missing_rates(training)) {}

  const PatternFit& get(PatternMask requested) {
    const auto it = resolved_.find(requested);
    if (it != resolved_.end()) return it->second;
    PatternFit fit;
    fit.requested = requested;
    PatternMask p = requested;
    for (;;) {
      const auto& attempt = try_fit(p);
      if (const auto* m = std::get_if<std::shared_ptr<const RiskModel>>(&attempt)) {
        fit.used = p;
        fit.model = **m;
        break;
      }
      const auto& reason = std::get<std::string>(attempt);
      fit.rejected.push_back("pattern " + pattern_text(p) + ": " + reason);
      if (p.count() == 0) {
        throw NumericError(std::string(name_of(strategy_)) + ": the psa and age model cannot be fitted: " + reason);
      }
      p = drop_most_missing(p, rates_);
    }
    return resolved_.emplace(requested, std::move(fit)).first->second;
  }

  std::size_t models_fitted() const { return fitted_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  using Attempt = std::variant<std::shared_ptr<const RiskModel>, std::string>;

  const Attempt& try_fit(PatternMask p) {
    const auto it = attempts_.find(p);
    if (it != attempts_.end()) return it->second;
    Attempt a;
    try {
      auto model = std::make_shared<const RiskModel>(fit_strategy(strategy_, training_, p, cfg_));
      ++fitted_;
      for (const auto& w : model->warnings) warnings_.push_back("pattern " + pattern_text(p) + ": " + w);
      a = std::move(model);
    } catch (const Error& e) {
      a = std::string(e.what());
    }
    return attempts_.emplace(p, std::move(a)).first->second;
  }

  const Dataset& training_;
  Strategy strategy_;
  const StrategyConfig& cfg_;
  std::array<double, kFactorCount> rates_;
  std::map<PatternMask, Attempt> attempts_;
  std::map<PatternMask, PatternFit> resolved_;
  std::size_t fitted_ = 0;
  std::vector<std::string> warnings_;
};

StrategyPredictions predict_one(const Dataset& training, const Dataset& validation, Strategy s,
                                const StrategyConfig& cfg) {
  StrategyPredictions out;
  out.strategy = s;
  out.risk.reserve(validation.size());
  if (is_pattern_tailored(s)) {
    TailoredFitter fitter(training, s, cfg);
    out.used_pattern.reserve(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const PatientRecord& r = validation[i];
      const PatternMask observed = observed_pattern(r);
      const PatternFit& fit = fitter.get(observed);
      out.risk.push_back(predict_risk(fit.model, r));
      out.used_pattern.push_back(fit.used);
      if (fit.used != observed) {
        ++out.fallback_records;
        out.warnings.push_back("record " + std::to_string(i + 1) + " (cohort " + r.cohort + "): pattern " +
                               pattern_text(observed) + " unfittable; used pattern " + pattern_text(fit.used) +
                               " (" + fit.rejected.front() + ")");
      }
    }
    out.models_fitted = fitter.models_fitted();
    out.warnings.insert(out.warnings.begin(), fitter.warnings().begin(), fitter.warnings().end());
  } else {
    const RiskModel model = fit_strategy(s, training, PatternMask::none(), cfg);
    out.models_fitted = 1;
    out.warnings = model.warnings;
    for (const auto& r : validation.records()) out.risk.push_back(predict_risk(model, r));
  }
  return out;
}

std::vector<int> outcomes(const Dataset& d) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& r : d.records()) y.push_back(r.outcome);
  return y;
}

void check_disjoint(const Dataset& training, const Dataset& validation) {
  for (const auto& c : validation.cohorts()) {
    if (training.cohort_index(c)) {
      throw DataError("cohort '" + c + "' appears in both the training and the validation data");
    }
  }
}

void check_classes(const std::vector<int>& y, std::string_view what) {
  const auto cases = std::count(y.begin(), y.end(), 1);
  if (cases == 0 || cases == static_cast<std::ptrdiff_t>(y.size())) {
    throw DataError(std::string(what) + " needs both cases and non-cases");
  }
}

OutcomeSummary outcome_summary(const std::vector<double>& v) {
  OutcomeSummary s;
  s.n = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.q25 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q75 = quantile(v, 0.75);
  return s;
}

SpreadSummary spread(const std::vector<double>& v) {
  SpreadSummary s;
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  s.iqr = s.q3 - s.q1;
  return s;
}

StrategyConfig seeded(const HarnessConfig& cfg, std::uint64_t seed) {
  StrategyConfig s = cfg.strategy;
  s.imputation.seed = seed;
  return s;
}

}  // namespace

std::vector<StrategyPredictions> predict_validation(const Dataset& training, const Dataset& validation,
                                                    const std::vector<Strategy>& strategies,
                                                    const HarnessConfig& cfg) {
  if (training.empty()) throw DataError("training data is empty");
  if (validation.empty()) throw DataError("validation data is empty");
  const StrategyConfig scfg = seeded(cfg, cfg.seed);
  std::vector<StrategyPredictions> out;
  for (Strategy s : strategies) {
    const std::string prefix = std::string(name_of(s)) + ": ";
    try {
      out.push_back(predict_one(training, validation, s, scfg));
    } catch (const SingularError& e) {
      throw SingularError(prefix + e.what());
    } catch (const NumericError& e) {
      throw NumericError(prefix + e.what());
    } catch (const DataError& e) {
      throw DataError(prefix + e.what());
    }
  }
  return out;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson: vectors differ in length");
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return std::nullopt;
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DataError("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

DataSummary summarize(const Dataset& d) { return {fingerprint(d), d.size(), d.cohorts()}; }

MethodComparison compare_predictions(const std::vector<StrategyPredictions>& predictions,
                                     const Dataset& validation) {
  MethodComparison c;
  const auto k = predictions.size();
  c.correlation.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    c.strategies.push_back(predictions[i].strategy);
    for (std::size_t j = i; j < k; ++j) {
      auto r = pearson(predictions[i].risk, predictions[j].risk);
      if (i == j && r) r = 1.0;
      c.correlation[i][j] = r;
      c.correlation[j][i] = r;
    }
    std::vector<double> cases;
    std::vector<double> non_cases;
    for (std::size_t row = 0; row < validation.size(); ++row) {
      (validation[row].outcome == 1 ? cases : non_cases).push_back(predictions[i].risk[row]);
    }
    c.summaries.push_back({predictions[i].strategy, outcome_summary(cases), outcome_summary(non_cases)});
  }
  return c;
}

ValidationReport assemble_validation(const Dataset& training, const Dataset& validation,
                                     const std::vector<StrategyPredictions>& predictions, std::uint64_t seed) {
  const auto y = outcomes(validation);
  check_classes(y, "validation data");
  ValidationReport report;
  report.seed = seed;
  report.training = summarize(training);
  report.validation = summarize(validation);
  const double prevalence =
      static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
  for (const auto& p : predictions) {
    StrategyValidation v;
    v.strategy = p.strategy;
    v.n = y.size();
    v.prevalence = prevalence;
    v.auc = auc_ci(p.risk, y);
    const CilInterval c = cil(p.risk, y);
    v.cil = {100.0 * c.value, 100.0 * c.lo, 100.0 * c.hi};
    if (y.size() >= 10) v.calibration = calibration_deciles(p.risk, y);
    v.models_fitted = p.models_fitted;
    v.fallback_records = p.fallback_records;
    v.warnings = p.warnings;
    report.strategies.push_back(std::move(v));
  }
  report.comparison = compare_predictions(predictions, validation);
  return report;
}

ValidationReport external_validate(const Dataset& training, const Dataset& validation,
                                   const std::vector<Strategy>& strategies, const HarnessConfig& cfg) {
  check_disjoint(training, validation);
  check_classes(outcomes(validation), "validation data");
  const auto predictions = predict_validation(training, validation, strategies, cfg);
  return assemble_validation(training, validation, predictions, cfg.seed);
}

MethodComparison method_comparison(const Dataset& training, const Dataset& validation,
                                   const std::vector<Strategy>& strategies, const HarnessConfig& cfg) {
  check_disjoint(training, validation);
  return compare_predictions(predict_validation(training, validation, strategies, cfg), validation);
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, 0x30000 + fold); }

CvReport loco_cv(const Dataset& training, const std::vector<Strategy>& strategies, const HarnessConfig& cfg) {
  const auto& cohorts = training.cohorts();
  if (cohorts.size() < 2) throw DataError("leave-one-cohort-out needs at least 2 cohorts");
  CvReport report;
  report.seed = cfg.seed;
  report.training = summarize(training);
  report.strategies = strategies;
  const std::size_t folds = cohorts.size();
  std::vector<std::vector<CvCell>> fold_cells(folds);
  std::vector<std::exception_ptr> errors(folds);

  auto run_fold = [&](std::size_t f) {
    const Dataset train = training.without_cohort(cohorts[f]);
    const Dataset test = training.only_cohort(cohorts[f]);
    const std::string train_fp = fingerprint(train);
    const auto y = outcomes(test);
    HarnessConfig fcfg = cfg;
    fcfg.seed = fold_seed(cfg.seed, f);
    for (Strategy s : strategies) {
      CvCell cell;
      cell.strategy = s;
      cell.held_out = cohorts[f];
      cell.training_fingerprint = train_fp;
      cell.seed = fcfg.seed;
      cell.n = test.size();
      try {
        const auto pred = predict_validation(train, test, {s}, fcfg);
        check_classes(y, "held-out cohort " + cohorts[f]);
        cell.prevalence =
            static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
        cell.auc = auc(pred.front().risk, y);
        cell.cil = 100.0 * cil(pred.front().risk, y).value;
        cell.ok = true;
      } catch (const Error& e) {
        cell.ok = false;
        cell.reason = e.what();
      }
      fold_cells[f].push_back(std::move(cell));
    }
  };

  unsigned threads = cfg.threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, folds));
  if (threads <= 1) {
    for (std::size_t f = 0; f < folds; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < folds; f = next++) {
          try {
            run_fold(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (auto& cells : fold_cells) {
    for (auto& c : cells) report.cells.push_back(std::move(c));
  }
  for (Strategy s : strategies) {
    CvStrategySummary sum;
    sum.strategy = s;
    std::vector<double> aucs;
    std::vector<double> cils;
    for (const auto& c : report.cells) {
      if (c.strategy != s || !c.ok) continue;
      aucs.push_back(c.auc);
      cils.push_back(c.cil);
    }
    sum.cells_ok = aucs.size();
    if (!aucs.empty()) {
      sum.auc = spread(aucs);
      sum.cil = spread(cils);
    }
    report.summary.push_back(sum);
  }
  return report;
}

namespace {

Json config_json(const HarnessConfig& cfg) {
  const auto& s = cfg.strategy;
  Json j;
  j["fit"] = {{"max_iter", s.fit.max_iter},
              {"tol", s.fit.tol},
              {"deviance_tol", s.fit.deviance_tol},
              {"ridge", s.fit.ridge},
              {"max_halvings", s.fit.max_halvings}};
  j["stepwise"] = {{"bic", s.stepwise.convention == BicConvention::conventional ? "conventional"
                                                                                 : "log_likelihood_penalty"},
                   {"interactions", s.stepwise.interactions},
                   {"max_steps", s.stepwise.max_steps}};
  j["imputation"] = {{"imputations", s.imputation.imputations},
                     {"cycles", s.imputation.cycles},
                     {"donors", s.imputation.donors}};
  j["ensemble_max_missing"] = s.ensemble_max_missing;
  return j;
}

Json data_json(const DataSummary& d) {
  return {{"fingerprint", d.fingerprint}, {"n", d.n}, {"cohorts", d.cohorts}};
}

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json outcome_json(const OutcomeSummary& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}};
}

Json spread_json(const std::optional<SpreadSummary>& s) {
  if (!s) return nullptr;
  return {{"median", s->median}, {"q1", s->q1}, {"q3", s->q3}, {"iqr", s->iqr}};
}

Json comparison_json(const MethodComparison& c) {
  Json j;
  j["strategies"] = Json::array();
  for (Strategy s : c.strategies) j["strategies"].push_back(name_of(s));
  j["correlation"] = Json::array();
  for (const auto& row : c.correlation) {
    Json r = Json::array();
    for (const auto& v : row) r.push_back(opt_json(v));
    j["correlation"].push_back(r);
  }
  j["by_outcome"] = Json::array();
  for (const auto& s : c.summaries) {
    j["by_outcome"].push_back(
        {{"strategy", name_of(s.strategy)}, {"cases", outcome_json(s.cases)}, {"non_cases", outcome_json(s.non_cases)}});
  }
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string provenance_lines(const Provenance& p) {
  std::string out = "# command: " + p.command + "\n";
  out += "# seed: " + (p.seed ? std::to_string(*p.seed) : std::string("none")) + "\n";
  return out;
}

}  // namespace

Json to_json(const ValidationReport& r, const Provenance& p, const HarnessConfig& cfg) {
  Json j;
  j["report"] = "external_validation";
  j["version"] = kReportVersion;
  j["provenance"] = to_json(p);
  j["seed"] = r.seed;
  j["config"] = config_json(cfg);
  j["training"] = data_json(r.training);
  j["validation"] = data_json(r.validation);
  j["strategies"] = Json::array();
  for (const auto& s : r.strategies) {
    Json e;
    e["strategy"] = name_of(s.strategy);
    e["n"] = s.n;
    e["prevalence"] = s.prevalence;
    e["auc"] = {{"value", s.auc.auc}, {"lo", s.auc.lo}, {"hi", s.auc.hi}, {"std_error", s.auc.std_error}};
    if (s.auc.warning) e["auc"]["warning"] = *s.auc.warning;
    e["cil_points"] = {{"value", s.cil.value}, {"lo", s.cil.lo}, {"hi", s.cil.hi}};
    e["calibration"] = Json::array();
    for (const auto& b : s.calibration) {
      e["calibration"].push_back({{"n", b.n},
                                  {"mean_predicted", b.mean_predicted},
                                  {"observed", b.observed},
                                  {"ci_low", b.ci_low},
                                  {"ci_high", b.ci_high}});
    }
    e["models_fitted"] = s.models_fitted;
    e["fallback_records"] = s.fallback_records;
    e["warnings"] = s.warnings;
    j["strategies"].push_back(e);
  }
  j["comparison"] = comparison_json(r.comparison);
  return j;
}

Json to_json(const CvReport& r, const Provenance& p, const HarnessConfig& cfg) {
  Json j;
  j["report"] = "loco_cv";
  j["version"] = kReportVersion;
  j["provenance"] = to_json(p);
  j["seed"] = r.seed;
  j["config"] = config_json(cfg);
  j["training"] = data_json(r.training);
  j["strategies"] = Json::array();
  for (Strategy s : r.strategies) j["strategies"].push_back(name_of(s));
  j["cells"] = Json::array();
  for (const auto& c : r.cells) {
    Json e;
    e["strategy"] = name_of(c.strategy);
    e["held_out"] = c.held_out;
    e["training_fingerprint"] = c.training_fingerprint;
    e["seed"] = c.seed;
    e["n"] = c.n;
    e["status"] = c.ok ? "ok" : "failed";
    if (c.ok) {
      e["prevalence"] = c.prevalence;
      e["auc"] = c.auc;
      e["cil_points"] = c.cil;
    } else {
      e["reason"] = c.reason;
    }
    j["cells"].push_back(e);
  }
  j["summary"] = Json::array();
  for (const auto& s : r.summary) {
    j["summary"].push_back({{"strategy", name_of(s.strategy)},
                            {"cells_ok", s.cells_ok},
                            {"auc", spread_json(s.auc)},
                            {"cil_points", spread_json(s.cil)}});
  }
  return j;
}

std::string validation_csv(const ValidationReport& r, const Provenance& p) {
  std::string out = provenance_lines(p);
  out += "strategy,n,prevalence,auc,auc_lo,auc_hi,cil_points,cil_lo,cil_hi,models_fitted,fallback_records\n";
  for (const auto& s : r.strategies) {
    out += std::string(name_of(s.strategy)) + "," + std::to_string(s.n) + "," + format_double(s.prevalence) + "," +
           format_double(s.auc.auc) + "," + format_double(s.auc.lo) + "," + format_double(s.auc.hi) + "," +
           format_double(s.cil.value) + "," + format_double(s.cil.lo) + "," + format_double(s.cil.hi) + "," +
           std::to_string(s.models_fitted) + "," + std::to_string(s.fallback_records) + "\n";
  }
  return out;
}

std::string cv_csv(const CvReport& r, const Provenance& p) {
  std::string out = provenance_lines(p);
  out += "strategy,held_out,status,n,prevalence,auc,cil_points,reason\n";
  for (const auto& c : r.cells) {
    out += std::string(name_of(c.strategy)) + "," + csv_field(c.held_out) + "," + (c.ok ? "ok" : "failed") + "," +
           std::to_string(c.n) + ",";
    if (c.ok) {
      out += format_double(c.prevalence) + "," + format_double(c.auc) + "," + format_double(c.cil) + ",\n";
    } else {
      out += ",,," + csv_field(c.reason) + "\n";
    }
  }
  return out;
}

std::string predictions_csv(const std::vector<StrategyPredictions>& predictions, const Dataset& validation,
                            const Provenance& p) {
  std::string out = provenance_lines(p);
  out += "row,cohort,outcome";
  for (const auto& s : predictions) out += "," + std::string(name_of(s.strategy));
  out += "\n";
  for (std::size_t i = 0; i < validation.size(); ++i) {
    out += std::to_string(i + 1) + "," + csv_field(validation[i].cohort) + "," + std::to_string(validation[i].outcome);
    for (const auto& s : predictions) out += "," + format_double(s.risk[i]);
    out += "\n";
  }
  return out;
}

}  // namespace hetrisk
