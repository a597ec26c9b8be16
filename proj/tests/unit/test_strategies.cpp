#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hetrisk/error.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/strategies.hpp"
#include "hetrisk/synth.hpp"

using namespace hetrisk;

namespace {

const SimulatedData& small_preset() {
  static const SimulatedData data = simulate(pbcg_preset(0.3));
  return data;
}

/// Fully observed cohorts from the preset generator.
const Dataset& complete_training() {
  static const Dataset data = [] {
    GeneratorConfig cfg = pbcg_preset(0.4);
    cfg.missingness = {};
    cfg.validation_cohorts = {"v01"};
    return simulate(cfg).training;
  }();
  return data;
}

double coefficient(const ComponentModel& c, const std::string& name) {
  const auto names = c.spec.names();
  const auto it = std::find(names.begin(), names.end(), name);
  REQUIRE(it != names.end());
  return c.coefficients[it - names.begin()];
}

StrategyConfig quick_config() {
  StrategyConfig cfg;
  cfg.imputation.imputations = 3;
  cfg.imputation.cycles = 3;
  cfg.imputation.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("strategy names parse and round trip") {
  for (Strategy s : kAllStrategies) CHECK(parse_strategy(name_of(s)) == s);
  CHECK_THROWS_AS(parse_strategy("bogus"), DataError);
  CHECK(parse_strategy_list("all").size() == 6);
  const auto two = parse_strategy_list("imputation,available_cases");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Strategy::imputation);
  CHECK_THROWS_AS(parse_strategy_list("imputation,imputation"), DataError);
  CHECK_THROWS_AS(parse_strategy_list(""), DataError);
  CHECK(is_pattern_tailored(Strategy::cohort_ensemble));
  CHECK_FALSE(is_pattern_tailored(Strategy::missing_indicator));
}

TEST_CASE("available cases uses complete cases of the pattern") {
  const auto& train = small_preset().training;
  const auto none = fit_available_cases(train, PatternMask::none());
  CHECK(none.n == train.size());
  CHECK(none.cohorts == train.cohorts());
  CHECK(none.components.front().spec.names() == std::vector<std::string>{"(Intercept)", "age", "log2(psa)"});

  const auto full = fit_available_cases(train, PatternMask::all());
  CHECK(full.cohorts == std::vector<std::string>{"c01", "c02", "c03"});
  std::size_t complete = 0;
  for (const auto& r : train.records()) complete += observed_pattern(r) == PatternMask::all() ? 1 : 0;
  CHECK(full.n == complete);
  CHECK(full.pattern == PatternMask::all());

  PatientRecord r = train[0];
  r.set(Factor::volume, std::nullopt);
  CHECK_THROWS_AS(predict(full, r), DataError);
  CHECK_NOTHROW(predict(none, r));
}

TEST_CASE("available cases rejects a pattern with too few complete records") {
  std::vector<PatientRecord> recs;
  for (int i = 0; i < 6; ++i) {
    PatientRecord r;
    r.cohort = "x";
    r.age = 50 + i;
    r.psa = 2 + i;
    r.outcome = i % 2;
    if (i < 2) r.set(Factor::dre, i % 2);
    recs.push_back(r);
  }
  CHECK_THROWS_WITH_AS(fit_available_cases(Dataset(recs), PatternMask::none().with(Factor::dre)),
                       doctest::Contains("insufficient complete cases"), DataError);
}

TEST_CASE("missing indicator and imputation reduce to available cases on complete data") {
  const auto& train = complete_training();
  const auto cfg = quick_config();
  const auto ac = fit_available_cases(train, PatternMask::all(), cfg);
  const auto mi = fit_missing_indicator(train, cfg);
  const auto im = fit_imputation(train, cfg);
  const auto& a = ac.components.front();
  const auto& m = mi.components.front();
  const auto& i = im.components.front();
  CHECK(m.spec.names().size() == a.spec.names().size());
  CHECK(i.spec.names() == a.spec.names());
  REQUIRE(m.coefficients.size() == a.coefficients.size());
  CHECK((m.coefficients - a.coefficients).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((i.coefficients - a.coefficients).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(im.imputation_fits.size() == 3);
  for (std::size_t k = 0; k < 20; ++k) {
    CHECK(predict_risk(mi, train[k]) == doctest::Approx(predict_risk(ac, train[k])).epsilon(1e-6));
  }
}

TEST_CASE("categorization treats volume as bins with a missing level") {
  const auto& train = small_preset().training;
  const auto cat = fit_categorization(train);
  CHECK(cat.n == train.size());
  CHECK_FALSE(cat.pattern.has_value());

  PatientRecord r = train[0];
  r.set(Factor::volume, 31.0);
  const double low = predict_risk(cat, r);
  r.set(Factor::volume, 49.0);
  CHECK(predict_risk(cat, r) == low);
  r.set(Factor::volume, 50.0);
  CHECK(predict_risk(cat, r) == low);
  r.set(Factor::volume, 80.0);
  CHECK(predict_risk(cat, r) != low);
  r.set(Factor::volume, std::nullopt);
  const double missing = predict_risk(cat, r);
  CHECK(missing > 0.0);
  CHECK(missing < 1.0);

  const auto names = cat.components.front().spec.names();
  CHECK(std::find(names.begin(), names.end(), "volume_cat[missing]") != names.end());
}

TEST_CASE("missing indicator keeps log2 volume for observed records") {
  const auto& train = small_preset().training;
  const auto mi = fit_missing_indicator(train);
  const auto& c = mi.components.front();
  const double slope = coefficient(c, "log2(volume)[observed]");
  CHECK(slope < 0.0);
  PatientRecord r = train[0];
  r.set(Factor::volume, 20.0);
  const double a = std::log(predict_risk(mi, r) / (1 - predict_risk(mi, r)));
  r.set(Factor::volume, 40.0);
  const double b = std::log(predict_risk(mi, r) / (1 - predict_risk(mi, r)));
  CHECK(b - a == doctest::Approx(slope).epsilon(1e-9));
}

TEST_CASE("cohort ensemble averages member predictions") {
  const auto& data = small_preset();
  const PatternMask p = PatternMask::none().with(Factor::dre).with(Factor::prior_biopsy);
  const auto ens = fit_cohort_ensemble(data.training, p);
  REQUIRE(ens.components.size() >= 2);
  std::size_t n = 0;
  for (const auto& c : ens.components) {
    CHECK_FALSE(c.cohort.empty());
    CHECK(c.cohorts == std::vector<std::string>{c.cohort});
    n += c.n;
  }
  CHECK(n == ens.n);
  for (std::size_t k = 0; k < 50; ++k) {
    const auto& r = data.validation[k];
    if (!r.has(Factor::dre) || !r.has(Factor::prior_biopsy)) continue;
    double lo = 1.0;
    double hi = 0.0;
    double sum = 0.0;
    for (const auto& c : ens.components) {
      const double v = c.predict(r);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    const double p_hat = predict_risk(ens, r);
    CHECK(p_hat >= lo - 1e-15);
    CHECK(p_hat <= hi + 1e-15);
    CHECK(p_hat == doctest::Approx(sum / ens.components.size()).epsilon(1e-12));
  }

  const std::string dropped = ens.components.front().cohort;
  const auto fewer = fit_cohort_ensemble(data.training.without_cohort(dropped), p);
  CHECK(fewer.components.size() == ens.components.size() - 1);
  for (const auto& c : fewer.components) CHECK(c.cohort != dropped);
}

TEST_CASE("cohort ensemble drops factors a cohort rarely collects") {
  const auto& data = small_preset();
  const auto ens = fit_cohort_ensemble(data.training, PatternMask::all());
  for (const auto& c : ens.components) {
    const auto idx = data.training.cohort_index(c.cohort);
    REQUIRE(idx);
    const auto fractions = cohort_missing_profile(data.training).fractions[*idx];
    for (Factor f : c.spec.factors()) CHECK(fractions[index_of(f)] < 0.6);
  }
}

TEST_CASE("iterative BIC shrinks the factor set monotonically") {
  const auto& train = small_preset().training;
  const auto m = fit_iterative_bic(train, PatternMask::all());
  REQUIRE_FALSE(m.selection_trace.empty());
  CHECK(m.selection_trace.size() <= 11);
  CHECK(m.components.size() == 1);
  const auto used = used_pattern(m.components.front().spec);
  CHECK(used.is_subset_of(PatternMask::all()));
  CHECK(m.n >= fit_available_cases(train, PatternMask::all()).n);
  CHECK(m.n == complete_cases(train.refs(), [&] {
                 std::vector<Factor> f = {Factor::psa, Factor::age};
                 for (Factor x : used.factors()) f.push_back(x);
                 return f;
               }()).size());
}

TEST_CASE("imputation predicts records with missing factors") {
  const auto& data = small_preset();
  const auto im = fit_imputation(data.training, quick_config());
  REQUIRE(im.means);
  CHECK(im.components.front().std_errors.size() == 0);
  for (std::size_t k = 0; k < 20; ++k) {
    const double p = predict_risk(im, data.validation[k]);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  const auto again = fit_imputation(data.training, quick_config());
  CHECK(again == im);
}

TEST_CASE("fit_strategy dispatches and reports metadata") {
  const auto& train = small_preset().training;
  const PatternMask p = PatternMask::none().with(Factor::dre);
  for (Strategy s : {Strategy::available_cases, Strategy::categorization, Strategy::missing_indicator}) {
    const auto m = fit_strategy(s, train, p);
    CHECK(m.strategy == s);
    const auto pred = predict(m, train[0]);
    CHECK(pred.strategy == s);
    CHECK(pred.n == m.n);
    CHECK(pred.cohorts == m.cohorts);
    CHECK(pred.pattern.has_value() == is_pattern_tailored(s));
  }
}

TEST_CASE("Wald intervals cover the generating odds ratios") {
  GeneratorConfig cfg;
  CohortSpec c;
  c.id = "a";
  c.size = 6000;
  c.target_prevalence = 0.3;
  c.prevalence[index_of(Factor::dre)] = 0.25;
  c.prevalence[index_of(Factor::prior_biopsy)] = 0.2;
  cfg.cohorts = {c};
  for (Factor f : kOptionalFactors) {
    if (f != Factor::dre && f != Factor::prior_biopsy) cfg.odds_ratios[index_of(f)] = 1.0;
  }
  const auto truth = cfg.odds_ratios;
  const PatternMask p = PatternMask::none().with(Factor::dre).with(Factor::prior_biopsy);
  int covered = 0;
  int total = 0;
  for (std::uint64_t rep = 0; rep < 40; ++rep) {
    cfg.seed = 1000 + rep;
    const auto m = fit_available_cases(generate_cohorts(cfg), p);
    const auto& comp = m.components.front();
    const auto names = comp.spec.names();
    const std::pair<std::string, Factor> checks[] = {
        {"age", Factor::age}, {"log2(psa)", Factor::psa}, {"dre[abnormal]", Factor::dre}};
    for (const auto& [name, f] : checks) {
      const auto j = std::find(names.begin(), names.end(), name) - names.begin();
      REQUIRE(j < static_cast<long>(names.size()));
      const double lo = comp.coefficients[j] - 1.959963984540054 * comp.std_errors[j];
      const double hi = comp.coefficients[j] + 1.959963984540054 * comp.std_errors[j];
      const double t = std::log(truth[index_of(f)]);
      covered += (lo <= t && t <= hi) ? 1 : 0;
      ++total;
    }
  }
  const double rate = static_cast<double>(covered) / total;
  MESSAGE("coverage " << rate);
  CHECK(rate >= 0.88);
}

TEST_CASE("model files round trip byte for byte") {
  const auto& data = small_preset();
  const Provenance prov{"hetrisk fit --method x", 7};
  const PatternMask p = PatternMask::none().with(Factor::dre).with(Factor::fh_pca_second).with(Factor::fh_breast_first);
  for (Strategy s : kAllStrategies) {
    const auto m = fit_strategy(s, data.training, p, quick_config());
    const std::string text = save_model(m, prov);
    const auto back = load_model(text);
    CHECK(back == m);
    CHECK(save_model(back, prov) == text);
    for (std::size_t k = 0; k < 10; ++k) {
      PatientRecord r = data.validation[k];
      r.set(Factor::dre, 1.0);
      r.set(Factor::fh_pca_second, 0.0);
      r.set(Factor::fh_breast_first, 1.0);
      CHECK(predict_risk(back, r) == predict_risk(m, r));
    }
  }
  CHECK_THROWS_AS(load_model("{}"), DataError);
  CHECK_THROWS_AS(load_model("not json"), DataError);
  CHECK_THROWS_WITH_AS(load_model(R"({"format":"hetrisk-model v9","model":{}})"), doctest::Contains("v9"), DataError);
}
