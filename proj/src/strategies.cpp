#include "hetrisk/strategies.hpp"

#include <algorithm>
#include <set>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

std::vector<std::string> cohorts_of(std::span<const PatientRecord* const> refs) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const PatientRecord* r : refs) {
    if (seen.insert(r->cohort).second) out.push_back(r->cohort);
  }
  return out;
}

ComponentModel make_component(const Design& design, const LogisticFit& fit,
                              std::span<const PatientRecord* const> refs) {
  ComponentModel c;
  c.spec = design.spec;
  c.coefficients = fit.coefficients;
  c.std_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  c.n = static_cast<std::size_t>(design.x.rows());
  c.cohorts = cohorts_of(refs);
  c.dropped = design.dropped;
  c.log_likelihood = fit.log_likelihood;
  c.iterations = fit.iterations;
  c.converged = fit.converged;
  return c;
}

ComponentModel component_from_stepwise(const StepwiseResult& res, std::span<const PatientRecord* const> refs) {
  ComponentModel c;
  c.spec = res.spec;
  c.coefficients = res.fit.coefficients;
  c.std_errors = res.fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  c.n = refs.size();
  c.cohorts = cohorts_of(refs);
  c.dropped = res.fit.dropped;
  c.log_likelihood = res.fit.log_likelihood;
  c.iterations = res.fit.iterations;
  c.converged = res.fit.converged;
  return c;
}

LogisticFit fit_converged(const Design& d, const FitConfig& cfg) {
  LogisticFit fit = fit_design(d, cfg);
  if (!fit.converged) {
    throw NumericError("logistic fit did not converge in " + std::to_string(fit.iterations) + " iterations");
  }
  return fit;
}

std::string pattern_label(PatternMask p) {
  const auto s = p.to_string();
  return std::to_string(p.bits()) + " (" + (s.empty() ? "psa,age only" : s) + ")";
}

void require_complete_cases(std::size_t available, std::size_t columns, PatternMask pattern) {
  if (available < columns + 1) {
    throw DataError("insufficient complete cases for pattern " + pattern_label(pattern) + ": " +
                    std::to_string(available) + " complete records for " + std::to_string(columns) +
                    " columns");
  }
}

std::vector<Factor> with_mandatory(PatternMask p) {
  std::vector<Factor> f = {Factor::psa, Factor::age};
  for (Factor x : p.factors()) f.push_back(x);
  return f;
}

std::vector<Term> categorical_terms(Factor f) {
  std::vector<Term> out;
  for (int level = 1; level <= level_count(Grouping::raw); ++level) {
    out.push_back(Dummy{f, Grouping::raw, true, level});
  }
  return out;
}

EncodingSpec global_spec(bool volume_continuous) {
  EncodingSpec spec;
  spec.terms.push_back(Intercept{});
  spec.terms.push_back(Continuous{Factor::age, Transform::identity, false});
  spec.terms.push_back(Continuous{Factor::psa, Transform::log2, false});
  for (Factor f : kOptionalFactors) {
    if (f == Factor::fh_breast_first) continue;
    if (f == Factor::volume) {
      if (volume_continuous) {
        spec.terms.push_back(Continuous{Factor::volume, Transform::log2, true});
        spec.terms.push_back(MissingIndicator{Factor::volume});
      } else {
        for (int level = 1; level <= level_count(Grouping::volume_bins); ++level) {
          spec.terms.push_back(Dummy{Factor::volume, Grouping::volume_bins, true, level});
        }
      }
    } else if (f == Factor::fh_pca_second) {
      for (int level = 1; level <= level_count(Grouping::fh_extended); ++level) {
        spec.terms.push_back(Dummy{Factor::fh_pca_second, Grouping::fh_extended, true, level});
      }
    } else {
      for (auto& t : categorical_terms(f)) spec.terms.push_back(std::move(t));
    }
  }
  return spec;
}

RiskModel fit_global(Strategy s, const Dataset& training, const EncodingSpec& spec, const StrategyConfig& cfg) {
  const auto refs = training.refs();
  const Design design = encode_design(refs, spec);
  const LogisticFit fit = fit_converged(design, cfg.fit);
  RiskModel m;
  m.strategy = s;
  m.components.push_back(make_component(design, fit, refs));
  m.n = m.components.front().n;
  m.cohorts = m.components.front().cohorts;
  return m;
}

}  // namespace

std::string_view name_of(Strategy s) {
  switch (s) {
    case Strategy::available_cases: return "available_cases";
    case Strategy::iterative_bic: return "iterative_bic";
    case Strategy::cohort_ensemble: return "cohort_ensemble";
    case Strategy::categorization: return "categorization";
    case Strategy::missing_indicator: return "missing_indicator";
    case Strategy::imputation: return "imputation";
  }
  return "";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (name_of(s) == name) return s;
  }
  throw DataError("unknown strategy '" + std::string(name) +
                  "' (expected available_cases, iterative_bic, cohort_ensemble, categorization, "
                  "missing_indicator or imputation)");
}

std::vector<Strategy> parse_strategy_list(std::string_view text) {
  if (text == "all") return {kAllStrategies.begin(), kAllStrategies.end()};
  std::vector<Strategy> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto token = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const Strategy s = parse_strategy(token);
    if (std::find(out.begin(), out.end(), s) != out.end()) {
      throw DataError("strategy listed twice: " + std::string(token));
    }
    out.push_back(s);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_pattern_tailored(Strategy s) {
  return s == Strategy::available_cases || s == Strategy::iterative_bic || s == Strategy::cohort_ensemble;
}

double ComponentModel::predict(const PatientRecord& r) const {
  return sigmoid(coefficients.dot(encode_row(r, spec)));
}

EncodingSpec categorization_spec() { return global_spec(false); }
EncodingSpec missing_indicator_spec() { return global_spec(true); }

RiskModel fit_available_cases(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg) {
  const EncodingSpec spec = main_effects_spec(pattern, true);
  const auto all = training.refs();
  const auto refs = complete_cases(all, with_mandatory(pattern));
  require_complete_cases(refs.size(), spec.terms.size(), pattern);
  const Design design = encode_design(refs, spec);
  const LogisticFit fit = fit_converged(design, cfg.fit);
  RiskModel m;
  m.strategy = Strategy::available_cases;
  m.pattern = pattern;
  m.components.push_back(make_component(design, fit, refs));
  m.n = m.components.front().n;
  m.cohorts = m.components.front().cohorts;
  return m;
}

RiskModel fit_iterative_bic(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg) {
  const auto all = training.refs();
  PatternMask used = pattern;
  RiskModel m;
  m.strategy = Strategy::iterative_bic;
  m.pattern = pattern;
  for (int iteration = 1;; ++iteration) {
    const auto refs = complete_cases(all, with_mandatory(used));
    require_complete_cases(refs.size(), main_effects_spec(used, false).terms.size(), used);
    const auto candidates = used.factors();
    StepwiseResult res = stepwise_bic(refs, candidates, cfg.stepwise);
    const PatternMask selected = used_pattern(res.spec);
    std::string line = "iteration " + std::to_string(iteration) + ": used={" + used.to_string() +
                       "} n=" + std::to_string(refs.size()) + " selected=[";
    const auto names = res.spec.names();
    for (std::size_t j = 0; j < names.size(); ++j) line += (j ? ", " : "") + names[j];
    line += "]";
    m.selection_trace.push_back(line);
    for (const auto& w : res.warnings) m.warnings.push_back("iteration " + std::to_string(iteration) + ": " + w);
    if (selected.count() < used.count()) {
      used = selected;
      continue;
    }
    m.components = {component_from_stepwise(res, refs)};
    break;
  }
  m.n = m.components.front().n;
  m.cohorts = m.components.front().cohorts;
  return m;
}

RiskModel fit_cohort_ensemble(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg) {
  RiskModel m;
  m.strategy = Strategy::cohort_ensemble;
  m.pattern = pattern;
  const auto profile = cohort_missing_profile(training);
  for (std::size_t c = 0; c < training.cohorts().size(); ++c) {
    const std::string& id = training.cohorts()[c];
    PatternMask used;
    for (Factor f : pattern.factors()) {
      if (profile.fractions[c][index_of(f)] < cfg.ensemble_max_missing) used = used.with(f);
    }
    RecordRefs cohort_refs;
    for (std::size_t row : training.cohort_rows(c)) cohort_refs.push_back(&training[row]);
    const auto refs = complete_cases(cohort_refs, with_mandatory(used));
    try {
      require_complete_cases(refs.size(), main_effects_spec(used, false).terms.size(), used);
      const auto candidates = used.factors();
      StepwiseResult res = stepwise_bic(refs, candidates, cfg.stepwise);
      ComponentModel member = component_from_stepwise(res, refs);
      member.cohort = id;
      m.components.push_back(std::move(member));
      for (const auto& w : res.warnings) m.warnings.push_back("cohort " + id + ": " + w);
    } catch (const Error& e) {
      m.warnings.push_back("cohort " + id + " skipped: " + e.what());
    }
  }
  if (m.components.empty()) {
    throw NumericError("cohort ensemble for pattern " + pattern_label(pattern) +
                       ": no cohort yields a fittable model");
  }
  for (const auto& c : m.components) {
    m.n += c.n;
    m.cohorts.push_back(c.cohort);
  }
  return m;
}

RiskModel fit_categorization(const Dataset& training, const StrategyConfig& cfg) {
  return fit_global(Strategy::categorization, training, categorization_spec(), cfg);
}

RiskModel fit_missing_indicator(const Dataset& training, const StrategyConfig& cfg) {
  return fit_global(Strategy::missing_indicator, training, missing_indicator_spec(), cfg);
}

RiskModel fit_imputation(const Dataset& training, const StrategyConfig& cfg) {
  const EncodingSpec spec = main_effects_spec(PatternMask::all(), true);
  const ImputationResult imputed = chained_impute(training, cfg.imputation);
  RiskModel m;
  m.strategy = Strategy::imputation;
  m.warnings = imputed.warnings;
  Eigen::VectorXd sum;
  ComponentModel avg;
  for (std::size_t k = 0; k < imputed.datasets.size(); ++k) {
    const auto refs = imputed.datasets[k].refs();
    try {
      const Design design = encode_design(refs, spec);
      const LogisticFit fit = fit_converged(design, cfg.fit);
      if (k == 0) {
        avg.spec = design.spec;
        avg.dropped = design.dropped;
        sum = Eigen::VectorXd::Zero(fit.coefficients.size());
      } else if (!(design.spec == avg.spec)) {
        throw DataError("retained terms differ from the first imputation");
      }
      sum += fit.coefficients;
      m.imputation_fits.push_back({fit.log_likelihood, fit.iterations, fit.converged});
    } catch (const NumericError& e) {
      throw NumericError("imputation " + std::to_string(k + 1) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("imputation " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  avg.coefficients = sum / static_cast<double>(imputed.datasets.size());
  avg.n = training.size();
  avg.cohorts = training.cohorts();
  avg.log_likelihood = 0.0;
  for (const auto& d : m.imputation_fits) avg.log_likelihood += d.log_likelihood;
  avg.log_likelihood /= static_cast<double>(m.imputation_fits.size());
  m.components.push_back(std::move(avg));
  m.n = training.size();
  m.cohorts = training.cohorts();
  m.means = training_means(training);
  return m;
}

RiskModel fit_strategy(Strategy s, const Dataset& training, PatternMask pattern, const StrategyConfig& cfg) {
  switch (s) {
    case Strategy::available_cases: return fit_available_cases(training, pattern, cfg);
    case Strategy::iterative_bic: return fit_iterative_bic(training, pattern, cfg);
    case Strategy::cohort_ensemble: return fit_cohort_ensemble(training, pattern, cfg);
    case Strategy::categorization: return fit_categorization(training, cfg);
    case Strategy::missing_indicator: return fit_missing_indicator(training, cfg);
    case Strategy::imputation: return fit_imputation(training, cfg);
  }
  throw DataError("unknown strategy");
}

double predict_risk(const RiskModel& model, const PatientRecord& r) {
  if (model.components.empty()) throw DataError("model has no fitted components");
  if (model.pattern) {
    for (Factor f : model.pattern->factors()) {
      if (!r.has(f)) {
        throw DataError("record lacks " + std::string(name_of(f)) + ", required by the " +
                        std::string(name_of(model.strategy)) + " model for pattern " +
                        pattern_label(*model.pattern));
      }
    }
  }
  switch (model.strategy) {
    case Strategy::cohort_ensemble: {
      double s = 0.0;
      for (const auto& c : model.components) s += c.predict(r);
      return s / static_cast<double>(model.components.size());
    }
    case Strategy::imputation: {
      if (!model.means) throw DataError("imputation model lacks training means");
      const auto& c = model.components.front();
      return sigmoid(c.coefficients.dot(encode_row_imputed(r, c.spec, *model.means)));
    }
    default:
      return model.components.front().predict(r);
  }
}

Prediction predict(const RiskModel& model, const PatientRecord& r) {
  Prediction p;
  p.risk = predict_risk(model, r);
  p.strategy = model.strategy;
  p.n = model.n;
  p.cohorts = model.cohorts;
  p.pattern = model.pattern;
  return p;
}

}  // namespace hetrisk
