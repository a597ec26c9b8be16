#include "hetrisk/synth.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "hetrisk/error.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/rng.hpp"

namespace hetrisk {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kCalibrationStream = 0x20000;

bool is_binary_like(Factor f) { return f != Factor::psa && f != Factor::age && f != Factor::volume; }

const CohortSpec* find_cohort(const GeneratorConfig& cfg, std::string_view id) {
  for (const auto& c : cfg.cohorts) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

double coefficient(const GeneratorConfig& cfg, const CohortSpec& c, Factor f) {
  double b = std::log(cfg.odds_ratios[index_of(f)]);
  if (cfg.coefficient_heterogeneity) b += c.coefficient_shift[index_of(f)];
  return b;
}

/// Covariate part of the linear predictor (no intercept) for a complete record.
double covariate_eta(const GeneratorConfig& cfg, const CohortSpec& c, const PatientRecord& r) {
  double eta = 0.0;
  for (Factor f : kAllFactors) {
    const double b = coefficient(cfg, c, f);
    double x = 0.0;
    if (f == Factor::age) {
      x = r.age;
    } else if (f == Factor::psa) {
      x = std::log2(r.psa);
    } else {
      const auto v = r.get(f);
      if (!v) throw DataError("true_risk: missing covariate " + std::string(name_of(f)));
      x = f == Factor::volume ? std::log2(*v) : *v;
    }
    eta += b * x;
  }
  return eta;
}

/// Draws the covariates of one record in a fixed order: age, psa, volume,
/// then the binaries in bit order.
struct CovariateSampler {
  std::normal_distribution<double> age;
  std::normal_distribution<double> psa;
  std::normal_distribution<double> volume;
  const CohortSpec& spec;

  explicit CovariateSampler(const CohortSpec& c)
      : age(c.age.mean, c.age.sd),
        psa(c.log2_psa.mean, c.log2_psa.sd),
        volume(c.log2_volume.mean, c.log2_volume.sd),
        spec(c) {}

  PatientRecord draw(Rng& rng) {
    PatientRecord r;
    r.cohort = spec.id;
    for (int attempt = 0;; ++attempt) {
      const double a = std::round(age(rng));
      if (a >= 18.0 && a <= 120.0) {
        r.age = a;
        break;
      }
      if (attempt > 1000) throw DataError("cohort " + spec.id + ": age distribution outside [18, 120]");
    }
    r.psa = std::exp2(psa(rng));
    for (Factor f : kOptionalFactors) {
      if (f == Factor::volume) {
        r.set(f, std::exp2(volume(rng)));
      } else {
        r.set(f, uniform01(rng) < spec.prevalence[index_of(f)] ? 1.0 : 0.0);
      }
    }
    return r;
  }
};

void check_normal(const NormalParams& p, const std::string& what) {
  if (!std::isfinite(p.mean) || !std::isfinite(p.sd) || !(p.sd > 0.0)) {
    throw DataError(what + ": sd must be > 0 and parameters finite");
  }
}

}  // namespace

OddsRatios default_odds_ratios() {
  OddsRatios c{};
  const auto set = [&](Factor f, double odds_ratio) { c[index_of(f)] = odds_ratio; };
  set(Factor::age, 1.07);
  set(Factor::psa, 2.38);
  set(Factor::volume, 0.25);
  set(Factor::dre, 1.95);
  set(Factor::prior_biopsy, 0.32);
  set(Factor::fh_pca_first, 1.93);
  set(Factor::hispanic, 1.08);
  set(Factor::five_ari, 0.96);
  set(Factor::prior_psa_screen, 0.71);
  set(Factor::african_ancestry, 0.68);
  set(Factor::fh_pca_second, 1.30);
  set(Factor::fh_breast_first, 1.15);
  return c;
}

void validate(const MissingnessPlan& plan) {
  for (const auto& [id, m] : plan.cohorts) {
    for (std::size_t b = 0; b < kOptionalCount; ++b) {
      if (!(m.mcar[b] >= 0.0 && m.mcar[b] < 1.0)) {
        throw DataError("missingness for cohort " + id + ": MCAR rate of " +
                        std::string(name_of(optional_factor(b))) + " must lie in [0, 1)");
      }
    }
    for (const auto& rule : m.mar) {
      if (is_mandatory(rule.factor)) {
        throw DataError("missingness for cohort " + id + ": cannot delete mandatory factor " +
                        std::string(name_of(rule.factor)));
      }
      if (!std::isfinite(rule.intercept) || !std::isfinite(rule.slope)) {
        throw DataError("missingness for cohort " + id + ": MAR rule parameters must be finite");
      }
    }
  }
}

void validate(const GeneratorConfig& cfg) {
  if (cfg.cohorts.empty()) throw DataError("generator config has no cohorts");
  std::set<std::string> ids;
  for (const auto& c : cfg.cohorts) {
    PatientRecord probe;
    probe.cohort = c.id;
    probe.age = 60;
    probe.psa = 1;
    validate_record(probe);
    if (!ids.insert(c.id).second) throw DataError("duplicate cohort id " + c.id);
    if (c.size < 1) throw DataError("cohort " + c.id + ": size must be >= 1");
    check_normal(c.age, "cohort " + c.id + " age");
    check_normal(c.log2_psa, "cohort " + c.id + " log2_psa");
    check_normal(c.log2_volume, "cohort " + c.id + " log2_volume");
    for (Factor f : kAllFactors) {
      const double p = c.prevalence[index_of(f)];
      if (is_binary_like(f) && !(p >= 0.0 && p <= 1.0)) {
        throw DataError("cohort " + c.id + ": prevalence of " + std::string(name_of(f)) +
                        " must lie in [0, 1]");
      }
      if (!std::isfinite(c.coefficient_shift[index_of(f)])) {
        throw DataError("cohort " + c.id + ": coefficient shift must be finite");
      }
    }
    if (c.intercept && !std::isfinite(*c.intercept)) {
      throw DataError("cohort " + c.id + ": intercept must be finite");
    }
    if (!c.intercept) {
      if (!c.target_prevalence) {
        throw DataError("cohort " + c.id + ": needs an intercept or a target_prevalence");
      }
      const double t = *c.target_prevalence;
      if (!(t > 0.0 && t < 1.0)) {
        throw DataError("cohort " + c.id + ": target_prevalence must lie in (0, 1)");
      }
    }
  }
  for (Factor f : kAllFactors) {
    const double o = cfg.odds_ratios[index_of(f)];
    if (!(o > 0.0) || !std::isfinite(o)) {
      throw DataError("odds ratio of " + std::string(name_of(f)) + " must be finite and > 0");
    }
  }
  for (const auto& v : cfg.validation_cohorts) {
    if (!ids.contains(v)) throw DataError("validation cohort " + v + " is not a configured cohort");
  }
  if (std::set<std::string>(cfg.validation_cohorts.begin(), cfg.validation_cohorts.end()).size() ==
      ids.size()) {
    throw DataError("every cohort is a validation cohort; nothing left for training");
  }
  validate(cfg.missingness);
  for (const auto& [id, m] : cfg.missingness.cohorts) {
    if (!ids.contains(id)) throw DataError("missingness plan references unknown cohort " + id);
  }
  if (cfg.calibration_draws < 100) throw DataError("calibration_draws must be >= 100");
}

GeneratorConfig resolve_intercepts(const GeneratorConfig& cfg) {
  validate(cfg);
  GeneratorConfig out = cfg;
  for (std::size_t c = 0; c < out.cohorts.size(); ++c) {
    auto& spec = out.cohorts[c];
    if (spec.intercept) continue;
    Rng rng(derive_seed(cfg.seed, kCalibrationStream + c));
    CovariateSampler sampler(spec);
    std::vector<double> eta(cfg.calibration_draws);
    for (auto& e : eta) e = covariate_eta(cfg, spec, sampler.draw(rng));
    const auto mean_risk = [&](double a) {
      double s = 0.0;
      for (double e : eta) s += sigmoid(a + e);
      return s / static_cast<double>(eta.size());
    };
    double lo = -60.0;
    double hi = 60.0;
    const double target = *spec.target_prevalence;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_risk(mid) < target ? lo : hi) = mid;
    }
    spec.intercept = 0.5 * (lo + hi);
  }
  return out;
}

Dataset generate_cohorts(const GeneratorConfig& cfg_in) {
  const GeneratorConfig cfg = resolve_intercepts(cfg_in);
  std::vector<PatientRecord> records;
  std::size_t total = 0;
  for (const auto& c : cfg.cohorts) total += c.size;
  records.reserve(total);
  for (std::size_t c = 0; c < cfg.cohorts.size(); ++c) {
    const auto& spec = cfg.cohorts[c];
    Rng rng(derive_seed(cfg.seed, c));
    CovariateSampler sampler(spec);
    for (std::size_t i = 0; i < spec.size; ++i) {
      PatientRecord r = sampler.draw(rng);
      const double p = sigmoid(*spec.intercept + covariate_eta(cfg, spec, r));
      r.outcome = uniform01(rng) < p ? 1 : 0;
      records.push_back(std::move(r));
    }
  }
  return Dataset(std::move(records));
}

Dataset apply_missingness(const Dataset& d, const MissingnessPlan& plan, std::uint64_t seed) {
  validate(plan);
  for (const auto& [id, m] : plan.cohorts) {
    if (!d.cohort_index(id)) throw DataError("missingness plan references unknown cohort " + id);
  }
  if (plan.empty()) return d;
  std::vector<PatientRecord> out(d.records().begin(), d.records().end());
  const CohortMissingness none{};
  for (std::size_t c = 0; c < d.cohorts().size(); ++c) {
    const auto it = plan.cohorts.find(d.cohorts()[c]);
    const CohortMissingness& m = it == plan.cohorts.end() ? none : it->second;
    Rng rng(derive_seed(seed, kMissingnessStream + c));
    for (std::size_t row : d.cohort_rows(c)) {
      PatientRecord& r = out[row];
      std::array<bool, kOptionalCount> drop{};
      for (std::size_t b = 0; b < kOptionalCount; ++b) {
        const double u = uniform01(rng);
        drop[b] = m.omitted.contains(optional_factor(b)) || u < m.mcar[b];
      }
      for (const auto& rule : m.mar) {
        const double z = rule.predictor == MarPredictor::psa   ? std::log2(r.psa)
                         : rule.predictor == MarPredictor::age ? r.age
                                                               : static_cast<double>(r.outcome);
        if (uniform01(rng) < sigmoid(rule.intercept + rule.slope * z)) {
          drop[static_cast<std::size_t>(optional_bit(rule.factor))] = true;
        }
      }
      for (std::size_t b = 0; b < kOptionalCount; ++b) {
        if (drop[b]) r.optional[b].reset();
      }
    }
  }
  return Dataset(std::move(out));
}

double true_risk(const GeneratorConfig& cfg, const PatientRecord& r) {
  const CohortSpec* c = find_cohort(cfg, r.cohort);
  if (c == nullptr) throw DataError("true_risk: unknown cohort " + r.cohort);
  if (!c->intercept) throw DataError("true_risk: intercept of cohort " + r.cohort + " is not resolved");
  return sigmoid(*c->intercept + covariate_eta(cfg, *c, r));
}

GeneratorConfig pbcg_preset(double scale) {
  if (!(scale > 0.0)) throw DataError("preset scale must be > 0");
  struct Row {
    const char* id;
    std::size_t size;
    double prevalence;
    double age_mean, age_sd, psa_mean, psa_sd, vol_mean, vol_sd;
    // dre, prior_biopsy, five_ari, prior_psa_screen, african, hispanic, fh1, fh2, fh_breast
    std::array<double, 9> binary;
  };
  static const Row rows[] = {
      {"c01", 2650, 0.20, 63.0, 7.5, 2.55, 1.00, 5.60, 0.55, {0.16, 0.24, 0.05, 0.72, 0.08, 0.05, 0.14, 0.10, 0.13}},
      {"c02", 2100, 0.24, 64.5, 7.8, 2.60, 1.05, 5.55, 0.55, {0.20, 0.20, 0.06, 0.65, 0.22, 0.08, 0.15, 0.11, 0.12}},
      {"c03", 1800, 0.27, 62.5, 7.2, 2.45, 0.95, 5.50, 0.50, {0.18, 0.15, 0.04, 0.80, 0.05, 0.18, 0.17, 0.09, 0.14}},
      {"c04", 1500, 0.29, 65.0, 7.9, 2.70, 1.05, 5.45, 0.55, {0.22, 0.18, 0.07, 0.60, 0.30, 0.04, 0.12, 0.10, 0.11}},
      {"c05", 1300, 0.31, 63.5, 7.0, 2.65, 1.00, 5.50, 0.60, {0.19, 0.12, 0.05, 0.68, 0.12, 0.12, 0.16, 0.12, 0.15}},
      {"c06", 1100, 0.33, 66.0, 8.0, 2.75, 1.10, 5.40, 0.55, {0.25, 0.10, 0.08, 0.55, 0.35, 0.03, 0.11, 0.08, 0.10}},
      {"c07", 900, 0.35, 64.0, 7.4, 2.80, 1.05, 5.45, 0.50, {0.21, 0.14, 0.06, 0.62, 0.18, 0.20, 0.13, 0.10, 0.12}},
      {"c08", 700, 0.37, 65.5, 7.6, 2.85, 1.10, 5.35, 0.55, {0.24, 0.09, 0.05, 0.58, 0.10, 0.06, 0.18, 0.11, 0.13}},
      {"c09", 410, 0.40, 66.5, 8.2, 2.90, 1.15, 5.30, 0.60, {0.27, 0.08, 0.07, 0.50, 0.25, 0.09, 0.15, 0.09, 0.14}},
      {"c10", 243, 0.44, 67.0, 8.0, 3.00, 1.15, 5.30, 0.55, {0.30, 0.06, 0.08, 0.45, 0.40, 0.05, 0.14, 0.12, 0.11}},
      {"v01", 5540, 0.32, 64.5, 7.7, 2.70, 1.05, 5.45, 0.55, {0.21, 0.16, 0.06, 0.62, 0.15, 0.10, 0.15, 0.10, 0.12}},
  };
  static constexpr std::array<Factor, 9> binaries = {
      Factor::dre,         Factor::prior_biopsy,     Factor::five_ari,
      Factor::prior_psa_screen, Factor::african_ancestry, Factor::hispanic,
      Factor::fh_pca_first, Factor::fh_pca_second,    Factor::fh_breast_first,
  };

  GeneratorConfig cfg;
  cfg.seed = 20240611;
  for (const Row& row : rows) {
    CohortSpec c;
    c.id = row.id;
    c.size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(row.size) * scale)));
    c.target_prevalence = row.prevalence;
    c.age = {row.age_mean, row.age_sd};
    c.log2_psa = {row.psa_mean, row.psa_sd};
    c.log2_volume = {row.vol_mean, row.vol_sd};
    for (std::size_t k = 0; k < binaries.size(); ++k) c.prevalence[index_of(binaries[k])] = row.binary[k];
    cfg.cohorts.push_back(std::move(c));
  }
  cfg.validation_cohorts = {"v01"};

  const auto plan = [&](const char* id, std::initializer_list<Factor> omit,
                        std::initializer_list<std::pair<Factor, double>> mcar) {
    CohortMissingness m;
    for (Factor f : omit) m.omitted = m.omitted.with(f);
    for (const auto& [f, rate] : mcar) m.mcar[static_cast<std::size_t>(optional_bit(f))] = rate;
    cfg.missingness.cohorts[id] = m;
  };
  using F = Factor;
  plan("c01", {}, {{F::dre, 0.04}, {F::volume, 0.08}});
  plan("c02", {}, {{F::volume, 0.05}});
  plan("c03", {}, {{F::dre, 0.03}, {F::prior_biopsy, 0.02}});
  plan("c04", {F::fh_pca_second, F::fh_breast_first}, {{F::dre, 0.05}});
  plan("c05", {F::fh_pca_second, F::fh_breast_first}, {{F::volume, 0.10}});
  plan("c06", {F::prior_psa_screen, F::fh_pca_second, F::fh_breast_first}, {{F::volume, 0.12}});
  plan("c07", {F::prior_psa_screen, F::fh_pca_second, F::fh_breast_first}, {{F::dre, 0.06}});
  plan("c08", {F::volume, F::fh_pca_second, F::fh_breast_first}, {});
  plan("c09", {F::volume, F::prior_psa_screen}, {{F::dre, 0.05}});
  plan("c10", {F::volume, F::five_ari, F::prior_psa_screen, F::fh_pca_second, F::fh_breast_first}, {});
  plan("v01", {F::volume, F::prior_psa_screen, F::fh_pca_second, F::fh_breast_first}, {{F::dre, 0.05}});
  return cfg;
}

namespace {

json normal_to_json(const NormalParams& p) { return json{{"mean", p.mean}, {"sd", p.sd}}; }

NormalParams normal_from_json(const json& j, const std::string& what) {
  if (!j.is_object()) throw DataError(what + " must be an object with mean and sd");
  for (const auto& [k, v] : j.items()) {
    if (k != "mean" && k != "sd") throw DataError(what + ": unknown key " + k);
  }
  NormalParams p;
  p.mean = j.at("mean").get<double>();
  p.sd = j.at("sd").get<double>();
  return p;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& what) {
  if (!j.is_object()) throw DataError(what + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw DataError(what + ": unknown key " + k);
  }
}

MarPredictor parse_predictor(const std::string& s) {
  if (s == "psa") return MarPredictor::psa;
  if (s == "age") return MarPredictor::age;
  if (s == "outcome") return MarPredictor::outcome;
  throw DataError("MAR predictor must be psa, age or outcome (got " + s + ")");
}

std::string_view predictor_name(MarPredictor p) {
  switch (p) {
    case MarPredictor::psa: return "psa";
    case MarPredictor::age: return "age";
    case MarPredictor::outcome: return "outcome";
  }
  return "";
}

Factor parse_deletable(const std::string& name) {
  if (name == "outcome") throw DataError("cannot delete the outcome");
  const Factor f = parse_factor(name);
  if (is_mandatory(f)) throw DataError("cannot delete mandatory factor " + name);
  return f;
}

}  // namespace

GeneratorConfig parse_generator_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("generator config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j, {"seed", "odds_ratios", "coefficient_heterogeneity", "calibration_draws", "cohorts",
                   "validation_cohorts", "missingness"},
               "generator config");
    GeneratorConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.coefficient_heterogeneity = j.value("coefficient_heterogeneity", false);
    cfg.calibration_draws = j.value("calibration_draws", cfg.calibration_draws);
    if (j.contains("odds_ratios")) {
      if (!j["odds_ratios"].is_object()) throw DataError("odds_ratios must be an object");
      for (const auto& [k, v] : j["odds_ratios"].items()) {
        cfg.odds_ratios[index_of(parse_factor(k))] = v.get<double>();
      }
    }
    for (const auto& cj : j.at("cohorts")) {
      check_keys(cj, {"id", "size", "intercept", "target_prevalence", "age", "log2_psa", "log2_volume",
                      "prevalence", "log_or_shift"},
                 "cohort");
      CohortSpec c;
      c.id = cj.at("id").get<std::string>();
      const auto size = cj.at("size").get<std::int64_t>();
      if (size < 1) throw DataError("cohort " + c.id + ": size must be >= 1");
      c.size = static_cast<std::size_t>(size);
      if (cj.contains("intercept")) c.intercept = cj["intercept"].get<double>();
      if (cj.contains("target_prevalence")) c.target_prevalence = cj["target_prevalence"].get<double>();
      if (cj.contains("age")) c.age = normal_from_json(cj["age"], "cohort " + c.id + " age");
      if (cj.contains("log2_psa")) c.log2_psa = normal_from_json(cj["log2_psa"], "cohort " + c.id + " log2_psa");
      if (cj.contains("log2_volume")) {
        c.log2_volume = normal_from_json(cj["log2_volume"], "cohort " + c.id + " log2_volume");
      }
      if (cj.contains("prevalence")) {
        for (const auto& [k, v] : cj["prevalence"].items()) {
          const Factor f = parse_factor(k);
          if (!is_binary_like(f)) throw DataError("prevalence given for non-binary factor " + k);
          c.prevalence[index_of(f)] = v.get<double>();
        }
      }
      if (cj.contains("log_or_shift")) {
        for (const auto& [k, v] : cj["log_or_shift"].items()) {
          c.coefficient_shift[index_of(parse_factor(k))] = v.get<double>();
        }
      }
      cfg.cohorts.push_back(std::move(c));
    }
    if (j.contains("validation_cohorts")) {
      cfg.validation_cohorts = j["validation_cohorts"].get<std::vector<std::string>>();
    }
    if (j.contains("missingness")) {
      for (const auto& [id, mj] : j["missingness"].items()) {
        check_keys(mj, {"omit", "mcar", "mar"}, "missingness for cohort " + id);
        CohortMissingness m;
        for (const auto& name : mj.value("omit", std::vector<std::string>{})) {
          m.omitted = m.omitted.with(parse_deletable(name));
        }
        if (mj.contains("mcar")) {
          for (const auto& [k, v] : mj["mcar"].items()) {
            m.mcar[static_cast<std::size_t>(optional_bit(parse_deletable(k)))] = v.get<double>();
          }
        }
        if (mj.contains("mar")) {
          for (const auto& rj : mj["mar"]) {
            check_keys(rj, {"factor", "predictor", "intercept", "slope"}, "MAR rule");
            MarRule rule;
            rule.factor = parse_deletable(rj.at("factor").get<std::string>());
            rule.predictor = parse_predictor(rj.at("predictor").get<std::string>());
            rule.intercept = rj.value("intercept", 0.0);
            rule.slope = rj.at("slope").get<double>();
            m.mar.push_back(rule);
          }
        }
        cfg.missingness.cohorts[id] = std::move(m);
      }
    }
    validate(cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("generator config: ") + e.what());
  }
}

std::string generator_config_to_json(const GeneratorConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["coefficient_heterogeneity"] = cfg.coefficient_heterogeneity;
  j["calibration_draws"] = cfg.calibration_draws;
  json ors = json::object();
  for (Factor f : kAllFactors) ors[std::string(name_of(f))] = cfg.odds_ratios[index_of(f)];
  j["odds_ratios"] = ors;
  json cohorts = json::array();
  for (const auto& c : cfg.cohorts) {
    json cj;
    cj["id"] = c.id;
    cj["size"] = c.size;
    if (c.intercept) cj["intercept"] = *c.intercept;
    if (c.target_prevalence) cj["target_prevalence"] = *c.target_prevalence;
    cj["age"] = normal_to_json(c.age);
    cj["log2_psa"] = normal_to_json(c.log2_psa);
    cj["log2_volume"] = normal_to_json(c.log2_volume);
    json prev = json::object();
    for (Factor f : kAllFactors) {
      if (is_binary_like(f)) prev[std::string(name_of(f))] = c.prevalence[index_of(f)];
    }
    cj["prevalence"] = prev;
    json shift = json::object();
    for (Factor f : kAllFactors) {
      if (c.coefficient_shift[index_of(f)] != 0.0) shift[std::string(name_of(f))] = c.coefficient_shift[index_of(f)];
    }
    if (!shift.empty()) cj["log_or_shift"] = shift;
    cohorts.push_back(cj);
  }
  j["cohorts"] = cohorts;
  j["validation_cohorts"] = cfg.validation_cohorts;
  json miss = json::object();
  for (const auto& [id, m] : cfg.missingness.cohorts) {
    json mj;
    std::vector<std::string> omit;
    for (Factor f : m.omitted.factors()) omit.emplace_back(name_of(f));
    mj["omit"] = omit;
    json mcar = json::object();
    for (std::size_t b = 0; b < kOptionalCount; ++b) {
      if (m.mcar[b] != 0.0) mcar[std::string(name_of(optional_factor(b)))] = m.mcar[b];
    }
    mj["mcar"] = mcar;
    if (!m.mar.empty()) {
      json rules = json::array();
      for (const auto& r : m.mar) {
        rules.push_back({{"factor", std::string(name_of(r.factor))},
                         {"predictor", std::string(predictor_name(r.predictor))},
                         {"intercept", r.intercept},
                         {"slope", r.slope}});
      }
      mj["mar"] = rules;
    }
    miss[id] = mj;
  }
  j["missingness"] = miss;
  return j.dump(2) + "\n";
}

SimulatedData simulate(const GeneratorConfig& cfg) {
  const Dataset full = generate_cohorts(cfg);
  const Dataset masked = apply_missingness(full, cfg.missingness, cfg.seed);
  SimulatedData out;
  out.validation = masked.filter_cohorts(cfg.validation_cohorts);
  std::vector<std::string> train_ids;
  for (const auto& id : masked.cohorts()) {
    if (std::find(cfg.validation_cohorts.begin(), cfg.validation_cohorts.end(), id) ==
        cfg.validation_cohorts.end()) {
      train_ids.push_back(id);
    }
  }
  out.training = masked.filter_cohorts(train_ids);
  return out;
}

}  // namespace hetrisk
