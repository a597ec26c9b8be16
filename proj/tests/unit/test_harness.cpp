#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hetrisk/error.hpp"
#include "hetrisk/harness.hpp"
#include "hetrisk/synth.hpp"
#include "oracles/oracles.hpp"

using namespace hetrisk;

namespace {

HarnessConfig quick(std::uint64_t seed = 11) {
  HarnessConfig cfg;
  cfg.seed = seed;
  cfg.strategy.imputation.imputations = 3;
  cfg.strategy.imputation.cycles = 3;
  cfg.threads = 1;
  return cfg;
}

const SimulatedData& preset() {
  static const SimulatedData data = simulate(pbcg_preset(0.3));
  return data;
}

SimulatedData complete_data() {
  GeneratorConfig cfg = pbcg_preset(0.3);
  cfg.missingness = {};
  return simulate(cfg);
}

PatientRecord record(const std::string& cohort, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PatientRecord r;
  r.cohort = cohort;
  r.age = std::round(64 + 7 * z(rng));
  r.psa = std::exp2(2.5 + z(rng));
  const double eta = -5.5 + 0.06 * r.age + 0.7 * std::log2(r.psa);
  r.outcome = u(rng) < 1 / (1 + std::exp(-eta)) ? 1 : 0;
  return r;
}

}  // namespace

TEST_CASE("greedy fallback drops the most missing factor, ties to the higher bit") {
  std::array<double, kFactorCount> rates{};
  rates[index_of(Factor::volume)] = 0.5;
  rates[index_of(Factor::hispanic)] = 0.2;
  const PatternMask p = PatternMask::none().with(Factor::volume).with(Factor::hispanic).with(Factor::dre);
  CHECK(drop_most_missing(p, rates) == p.without(Factor::volume));
  rates[index_of(Factor::hispanic)] = 0.5;
  CHECK(drop_most_missing(p, rates) == p.without(Factor::hispanic));
  CHECK(drop_most_missing(PatternMask::none().with(Factor::dre), rates) == PatternMask::none());
  CHECK_THROWS_AS(drop_most_missing(PatternMask::none(), rates), DataError);
}

TEST_CASE("quantile and pearson match direct computations") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({5}, 0.75) == 5.0);
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {2, 4, 6, 8, 10};
  const std::vector<double> c = {5, 4, 3, 2, 1};
  const std::vector<double> k = {1, 1, 1, 1, 1};
  CHECK(*pearson(a, b) == doctest::Approx(1.0));
  CHECK(*pearson(a, c) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson(a, k).has_value());
  CHECK(oracle::median({1, 4, 2, 3}) == quantile({1, 4, 2, 3}, 0.5));
}

TEST_CASE("fully observed validation fits one model per tailored strategy") {
  const auto data = complete_data();
  const auto report = external_validate(data.training, data.validation,
                                        {kAllStrategies.begin(), kAllStrategies.end()}, quick());
  REQUIRE(report.strategies.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& s = report.strategies[i];
    CHECK(s.strategy == kAllStrategies[i]);
    CHECK(s.models_fitted == 1);
    CHECK(s.fallback_records == 0);
    CHECK(s.auc.auc > 0.5);
    CHECK(s.prevalence > 0.0);
    CHECK(s.prevalence < 1.0);
    CHECK(s.calibration.size() == 10);
  }
  const auto& corr = report.comparison.correlation;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(corr[i][i] == 1.0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(corr[i][j] == corr[j][i]);
  }
  const auto ac = 0;
  const auto mi = 4;
  const auto im = 5;
  CHECK(*corr[ac][mi] >= 0.999999);
  CHECK(*corr[ac][im] >= 0.999999);
  CHECK(*corr[mi][im] >= 0.999999);
  for (const auto& s : report.comparison.summaries) CHECK(s.cases.mean > s.non_cases.mean);
}

TEST_CASE("predictions never depend on validation outcomes") {
  const auto& data = preset();
  std::vector<PatientRecord> poisoned(data.validation.records().begin(), data.validation.records().end());
  for (auto& r : poisoned) r.outcome = 1 - r.outcome;
  const Dataset flipped(poisoned);
  const std::vector<Strategy> all(kAllStrategies.begin(), kAllStrategies.end());
  const auto a = predict_validation(data.training, data.validation, all, quick());
  const auto b = predict_validation(data.training, flipped, all, quick());
  for (std::size_t s = 0; s < all.size(); ++s) CHECK(a[s].risk == b[s].risk);
}

TEST_CASE("external validation on the preset ranks cases above non-cases") {
  const auto& data = preset();
  const auto report = external_validate(data.training, data.validation,
                                        {kAllStrategies.begin(), kAllStrategies.end()}, quick());
  for (const auto& s : report.strategies) {
    CHECK(s.auc.auc > 0.5);
    CHECK(s.auc.lo <= s.auc.auc);
    CHECK(s.auc.auc <= s.auc.hi);
    CHECK(s.cil.lo <= s.cil.value);
  }
  CHECK(std::abs(report.strategies[0].cil.value) < 5.0);
  CHECK(report.strategies[0].models_fitted > 1);
}

TEST_CASE("unfittable patterns fall back with one warning per record") {
  std::mt19937_64 rng(3);
  std::vector<PatientRecord> train;
  for (int i = 0; i < 400; ++i) {
    PatientRecord r = record("a", rng);
    r.set(Factor::volume, 20.0 + i % 40);
    train.push_back(r);
  }
  for (int i = 0; i < 200; ++i) {
    PatientRecord r = record("b", rng);
    r.set(Factor::hispanic, i % 3 == 0 ? 1.0 : 0.0);
    train.push_back(r);
  }
  std::vector<PatientRecord> valid;
  for (int i = 0; i < 60; ++i) {
    PatientRecord r = record("v", rng);
    r.set(Factor::volume, 35.0);
    if (i < 5) r.set(Factor::hispanic, 1.0);
    valid.push_back(r);
  }
  const Dataset training(train);
  const Dataset validation(valid);
  const auto pred = predict_validation(training, validation, {Strategy::available_cases}, quick());
  const auto& p = pred.front();
  CHECK(p.fallback_records == 5);
  const auto vol = PatternMask::none().with(Factor::volume);
  for (int i = 0; i < 5; ++i) CHECK(p.used_pattern[i] == vol);
  for (int i = 5; i < 60; ++i) CHECK(p.used_pattern[i] == vol);
  std::size_t record_warnings = 0;
  for (const auto& w : p.warnings) {
    if (w.rfind("record ", 0) == 0) {
      ++record_warnings;
      CHECK(w.find("insufficient complete cases") != std::string::npos);
    }
  }
  CHECK(record_warnings == 5);
  CHECK(p.models_fitted == 1);
  const auto direct = fit_available_cases(training, vol);
  CHECK(p.risk[0] == predict_risk(direct, valid[0]));
}

TEST_CASE("external validation checks its inputs") {
  const auto& data = preset();
  CHECK_THROWS_AS(external_validate(data.training, data.training, {Strategy::available_cases}, quick()),
                  DataError);
  std::vector<PatientRecord> controls;
  for (const auto& r : data.validation.records()) {
    if (r.outcome == 0) controls.push_back(r);
  }
  CHECK_THROWS_AS(external_validate(data.training, Dataset(controls), {Strategy::available_cases}, quick()),
                  DataError);
}

TEST_CASE("leave-one-cohort-out grid, summaries and determinism") {
  const auto& data = preset();
  const Dataset train = data.training.filter_cohorts(std::vector<std::string>{"c01", "c02", "c04", "c09"});
  const std::vector<Strategy> strategies = {Strategy::available_cases, Strategy::missing_indicator,
                                            Strategy::imputation};
  const auto cfg = quick();
  const auto report = loco_cv(train, strategies, cfg);
  REQUIRE(report.cells.size() == 12);
  for (const auto& c : report.cells) {
    CHECK(c.ok);
    CHECK(c.training_fingerprint == fingerprint(train.without_cohort(c.held_out)));
    CHECK(c.auc > 0.5);
  }
  const Provenance prov{"test", cfg.seed};
  const Json j = to_json(report, prov, cfg);
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    std::vector<double> aucs;
    for (const auto& c : j["cells"]) {
      if (c["strategy"] == name_of(strategies[s])) aucs.push_back(c["auc"].get<double>());
    }
    REQUIRE(aucs.size() == 4);
    CHECK(j["summary"][s]["auc"]["median"].get<double>() == doctest::Approx(oracle::median(aucs)).epsilon(1e-15));
  }

  HarnessConfig threaded = cfg;
  threaded.threads = 3;
  const auto again = loco_cv(train, strategies, threaded);
  CHECK(to_json(again, prov, cfg).dump() == j.dump());
  CHECK(cv_csv(again, prov) == cv_csv(report, prov));
  CHECK(cv_csv(report, prov).rfind("# command: test\n# seed: 11\nstrategy,", 0) == 0);
}

TEST_CASE("identical cohorts give identical folds for deterministic strategies") {
  std::mt19937_64 rng(9);
  std::vector<PatientRecord> recs;
  for (int i = 0; i < 300; ++i) recs.push_back(record("x", rng));
  std::vector<PatientRecord> both = recs;
  for (auto r : recs) {
    r.cohort = "y";
    both.push_back(r);
  }
  const auto report = loco_cv(Dataset(both), {Strategy::available_cases, Strategy::categorization}, quick());
  REQUIRE(report.cells.size() == 4);
  CHECK(report.cells[0].auc == report.cells[2].auc);
  CHECK(report.cells[0].cil == report.cells[2].cil);
  CHECK(report.cells[1].auc == report.cells[3].auc);
}

TEST_CASE("a failing fold is reported, not fatal") {
  std::mt19937_64 rng(5);
  std::vector<PatientRecord> recs;
  for (int i = 0; i < 300; ++i) recs.push_back(record("good1", rng));
  for (int i = 0; i < 300; ++i) recs.push_back(record("good2", rng));
  for (int i = 0; i < 30; ++i) {
    PatientRecord r = record("controls", rng);
    r.outcome = 0;
    recs.push_back(r);
  }
  const auto report = loco_cv(Dataset(recs), {Strategy::available_cases}, quick());
  REQUIRE(report.cells.size() == 3);
  CHECK(report.cells[0].ok);
  CHECK(report.cells[1].ok);
  CHECK_FALSE(report.cells[2].ok);
  CHECK(report.cells[2].reason.find("cases") != std::string::npos);
  CHECK(report.summary[0].cells_ok == 2);
  CHECK_THROWS_AS(loco_cv(Dataset(std::vector<PatientRecord>(recs.begin(), recs.begin() + 300)),
                          {Strategy::available_cases}, quick()),
                  DataError);
}

TEST_CASE("validation reports are byte identical across runs") {
  const auto& data = preset();
  const std::vector<Strategy> s = {Strategy::available_cases, Strategy::cohort_ensemble, Strategy::imputation};
  const Provenance prov{"hetrisk validate", 11};
  const auto a = to_json(external_validate(data.training, data.validation, s, quick()), prov, quick()).dump();
  const auto b = to_json(external_validate(data.training, data.validation, s, quick()), prov, quick()).dump();
  CHECK(a == b);
  const Json j = Json::parse(a);
  CHECK(j["version"] == kReportVersion);
  CHECK(j["strategies"].size() == 3);
  CHECK(j["comparison"]["correlation"].size() == 3);
}
