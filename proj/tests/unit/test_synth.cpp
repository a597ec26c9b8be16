#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "hetrisk/error.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/synth.hpp"

using namespace hetrisk;

namespace {

GeneratorConfig flat_config(std::size_t n, double intercept) {
  GeneratorConfig cfg;
  cfg.odds_ratios.fill(1.0);
  CohortSpec c;
  c.id = "c1";
  c.size = n;
  c.intercept = intercept;
  c.prevalence.fill(0.3);
  cfg.cohorts.push_back(c);
  cfg.seed = 5;
  return cfg;
}

double prevalence(const Dataset& d) {
  double s = 0.0;
  for (const auto& r : d.records()) s += r.outcome;
  return s / static_cast<double>(d.size());
}

PatientRecord complete_record(const std::string& cohort) {
  PatientRecord r;
  r.cohort = cohort;
  r.age = 60;
  r.psa = 4;
  for (Factor f : kOptionalFactors) r.set(f, f == Factor::volume ? 40.0 : 0.0);
  return r;
}

}  // namespace

TEST_CASE("null model gives prevalence one half") {
  const auto d = generate_cohorts(flat_config(10000, 0.0));
  CHECK(d.size() == 10000);
  CHECK(std::abs(prevalence(d) - 0.5) <= 0.015);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto cfg = pbcg_preset(0.1);
  const auto a = generate_cohorts(cfg);
  const auto b = generate_cohorts(cfg);
  CHECK(a == b);
  CHECK(write_cohort_csv(a) == write_cohort_csv(b));
  auto other = cfg;
  other.seed += 1;
  CHECK_FALSE(generate_cohorts(other) == a);
}

TEST_CASE("preset matches the published cohort shape") {
  const auto cfg = pbcg_preset();
  const auto sim = simulate(cfg);
  CHECK(sim.training.size() == 12703);
  CHECK(sim.training.cohorts().size() == 10);
  CHECK(sim.validation.size() == 5540);
  CHECK(std::abs(prevalence(sim.training) - 0.28) <= 0.02);
  CHECK(std::abs(prevalence(sim.validation) - 0.32) <= 0.02);
  // only three training cohorts collect all twelve factors
  const auto profile = cohort_missing_profile(sim.training);
  int complete_cohorts = 0;
  for (const auto& row : profile.fractions) {
    bool collected = true;
    for (double f : row) collected = collected && f < 1.0;
    complete_cohorts += collected ? 1 : 0;
  }
  CHECK(complete_cohorts == 3);
  for (const auto& row : profile.fractions) {
    CHECK(row[index_of(Factor::psa)] == 0.0);
    CHECK(row[index_of(Factor::age)] == 0.0);
  }
}

TEST_CASE("calibrated intercepts hit the target prevalence of the true model") {
  auto cfg = pbcg_preset();
  cfg.cohorts.resize(3);
  cfg.validation_cohorts.clear();
  cfg.missingness.cohorts.clear();
  for (auto& c : cfg.cohorts) c.size = 40000;
  const auto resolved = resolve_intercepts(cfg);
  const auto d = generate_cohorts(resolved);
  for (std::size_t c = 0; c < 3; ++c) {
    double risk = 0.0;
    double events = 0.0;
    for (std::size_t row : d.cohort_rows(c)) {
      risk += true_risk(resolved, d[row]);
      events += d[row].outcome;
    }
    const double n = static_cast<double>(d.cohort_rows(c).size());
    CHECK(std::abs(risk / n - *cfg.cohorts[c].target_prevalence) < 0.01);
    CHECK(std::abs(events / n - *cfg.cohorts[c].target_prevalence) < 0.015);
  }
}

TEST_CASE("omission, MCAR and empty plans") {
  auto cfg = flat_config(10000, 0.0);
  const auto d = generate_cohorts(cfg);

  MissingnessPlan omit;
  omit.cohorts["c1"].omitted = PatternMask::none().with(Factor::volume);
  const auto o = apply_missingness(d, omit, 1);
  CHECK(missing_rates(o)[index_of(Factor::volume)] == 1.0);

  MissingnessPlan mcar;
  mcar.cohorts["c1"].mcar[0] = 0.3;
  const auto m = apply_missingness(d, mcar, 2);
  CHECK(std::abs(missing_rates(m)[index_of(Factor::dre)] - 0.3) <= 0.02);
  CHECK(missing_rates(m)[index_of(Factor::volume)] == 0.0);

  CHECK(apply_missingness(d, MissingnessPlan{}, 3) == d);
}

TEST_CASE("missingness never alters retained values or mandatory fields") {
  const auto cfg = pbcg_preset(0.2);
  const auto full = generate_cohorts(cfg);
  auto plan = cfg.missingness;
  plan.cohorts["c02"].mar.push_back({Factor::volume, MarPredictor::psa, -3.0, 0.8});
  plan.cohorts["c03"].mar.push_back({Factor::dre, MarPredictor::outcome, -2.0, 1.5});
  const auto masked = apply_missingness(full, plan, 99);
  REQUIRE(masked.size() == full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& a = full[i];
    const auto& b = masked[i];
    CHECK(a.cohort == b.cohort);
    CHECK(a.age == b.age);
    CHECK(a.psa == b.psa);
    CHECK(a.outcome == b.outcome);
    for (std::size_t k = 0; k < kOptionalCount; ++k) {
      if (b.optional[k]) CHECK(*b.optional[k] == *a.optional[k]);
    }
  }
}

TEST_CASE("MAR on the outcome deletes more among cases") {
  auto cfg = flat_config(20000, 0.0);
  const auto d = generate_cohorts(cfg);
  MissingnessPlan plan;
  plan.cohorts["c1"].mar.push_back({Factor::volume, MarPredictor::outcome, -2.0, 2.0});
  const auto m = apply_missingness(d, plan, 4);
  double miss[2] = {0, 0};
  double n[2] = {0, 0};
  for (const auto& r : m.records()) {
    n[r.outcome] += 1;
    miss[r.outcome] += r.has(Factor::volume) ? 0.0 : 1.0;
  }
  CHECK(std::abs(miss[0] / n[0] - sigmoid(-2.0)) < 0.02);
  CHECK(std::abs(miss[1] / n[1] - 0.5) < 0.02);
}

TEST_CASE("plans deleting mandatory factors are rejected") {
  MissingnessPlan plan;
  plan.cohorts["c1"].mar.push_back({Factor::psa, MarPredictor::age, 0.0, 0.1});
  CHECK_THROWS_AS(validate(plan), DataError);
  const std::string base = R"({"cohorts":[{"id":"c1","size":10,"intercept":0}],"missingness":{"c1":)";
  CHECK_THROWS_AS(parse_generator_config(base + R"({"omit":["psa"]}}})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(base + R"({"mcar":{"age":0.1}}}})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(base + R"({"omit":["outcome"]}}})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(base + R"({"mcar":{"dre":1.0}}}})"), DataError);
  CHECK_THROWS_AS(
      parse_generator_config(base + R"({"mar":[{"factor":"dre","predictor":"volume","slope":1}]}}})"),
      DataError);
  CHECK_NOTHROW(parse_generator_config(base + R"({"omit":["volume"],"mcar":{"dre":0.2}}}})"));
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(parse_generator_config("{"), DataError);
  CHECK_THROWS_AS(parse_generator_config(R"({"cohorts":[]})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(R"({"cohorts":[{"id":"c1","size":0,"intercept":0}]})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(
                      R"({"cohorts":[{"id":"c1","size":5,"intercept":0,"age":{"mean":60,"sd":0}}]})"),
                  DataError);
  CHECK_THROWS_AS(parse_generator_config(
                      R"({"cohorts":[{"id":"c1","size":5,"intercept":0,"prevalence":{"dre":1.2}}]})"),
                  DataError);
  CHECK_THROWS_AS(parse_generator_config(R"({"cohorts":[{"id":"c1","size":5}]})"), DataError);
  CHECK_THROWS_AS(parse_generator_config(R"({"cohorts":[{"id":"c1","size":5,"intercept":0,"colour":1}]})"),
                  DataError);
  CHECK_THROWS_AS(parse_generator_config(
                      R"({"cohorts":[{"id":"c1","size":5,"intercept":0}],"validation_cohorts":["c1"]})"),
                  DataError);
}

TEST_CASE("true risk") {
  auto cfg = flat_config(1, 0.0);
  auto r = complete_record("c1");
  CHECK(true_risk(cfg, r) == 0.5);
  cfg.cohorts[0].intercept = -2.0;
  CHECK(true_risk(cfg, r) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
  CHECK(true_risk(cfg, r) == doctest::Approx(0.1192).epsilon(1e-3));

  auto d = pbcg_preset();
  d.cohorts[0].intercept = -4.0;
  auto r1 = complete_record("c01");
  r1.set(Factor::dre, 1.0);
  auto r2 = r1;
  r2.psa = 2.0 * r1.psa;
  const auto odds = [](double p) { return p / (1.0 - p); };
  CHECK(odds(true_risk(d, r2)) / odds(true_risk(d, r1)) == doctest::Approx(2.38).epsilon(1e-12));

  auto missing = r1;
  missing.set(Factor::hispanic, std::nullopt);
  CHECK_THROWS_AS(true_risk(d, missing), DataError);
  CHECK_THROWS_AS(true_risk(d, complete_record("nope")), DataError);
}

TEST_CASE("coefficient heterogeneity is opt in") {
  auto cfg = flat_config(1, 0.0);
  cfg.cohorts[0].coefficient_shift[index_of(Factor::dre)] = std::log(3.0);
  auto r = complete_record("c1");
  r.set(Factor::dre, 1.0);
  CHECK(true_risk(cfg, r) == 0.5);
  cfg.coefficient_heterogeneity = true;
  CHECK(true_risk(cfg, r) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("config JSON round trip") {
  auto cfg = pbcg_preset();
  cfg.cohorts[2].coefficient_shift[index_of(Factor::age)] = 0.01;
  cfg.missingness.cohorts["c02"].mar.push_back({Factor::volume, MarPredictor::age, -1.5, 0.02});
  const auto text = generator_config_to_json(cfg);
  const auto back = parse_generator_config(text);
  CHECK(generator_config_to_json(back) == text);
  CHECK(generate_cohorts(back) == generate_cohorts(cfg));
}

TEST_CASE("shipped preset file equals the built-in preset") {
  std::ifstream in(std::string(HETRISK_SOURCE_DIR) + "/presets/preset-pbcg.json");
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == generator_config_to_json(pbcg_preset()));
}
