#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/factors.hpp"

namespace hetrisk {

struct NormalParams {
  double mean = 0.0;
  double sd = 1.0;
};

/// Covariate distribution and baseline risk of one synthetic cohort.
struct CohortSpec {
  std::string id;
  std::size_t size = 0;
  /// Logit-scale intercept. When absent it is calibrated from target_prevalence.
  std::optional<double> intercept;
  std::optional<double> target_prevalence;
  NormalParams age{64.0, 7.5};         // years, rounded to whole years
  NormalParams log2_psa{2.5, 1.0};
  NormalParams log2_volume{5.5, 0.55};
  /// P(value = 1) for dre (abnormal) and the binary factors, indexed by Factor.
  std::array<double, kFactorCount> prevalence{};
  /// Per-cohort additive shift of the log odds ratios (used only when
  /// GeneratorConfig::coefficient_heterogeneity is set).
  std::array<double, kFactorCount> coefficient_shift{};
};

/// Odds ratios of the true model indexed by Factor: age per year, psa and
/// volume per doubling, dre abnormal and binaries "yes" versus reference.
using OddsRatios = std::array<double, kFactorCount>;

/// Full-model odds ratios of the 12-factor reference model.
OddsRatios default_odds_ratios();

enum class MarPredictor : std::uint8_t { psa, age, outcome };

/// P(missing) = sigmoid(intercept + slope * z) with z = log2(psa), age or outcome.
struct MarRule {
  Factor factor = Factor::volume;
  MarPredictor predictor = MarPredictor::psa;
  double intercept = 0.0;
  double slope = 0.0;
};

struct CohortMissingness {
  PatternMask omitted;                          // never collected in this cohort
  std::array<double, kOptionalCount> mcar{};    // by PatternMask bit
  std::vector<MarRule> mar;
};

struct MissingnessPlan {
  std::map<std::string, CohortMissingness> cohorts;
  bool empty() const { return cohorts.empty(); }
};

void validate(const MissingnessPlan& plan);

struct GeneratorConfig {
  std::vector<CohortSpec> cohorts;
  OddsRatios odds_ratios = default_odds_ratios();
  bool coefficient_heterogeneity = false;
  std::uint64_t seed = 0;
  /// Cohorts written to the validation CSV by `simulate`.
  std::vector<std::string> validation_cohorts;
  MissingnessPlan missingness;
  /// Monte-Carlo sample size used to calibrate intercepts.
  std::size_t calibration_draws = 20000;
};

void validate(const GeneratorConfig& cfg);

/// Fills every absent intercept by bisection so that the mean true risk over a
/// fixed Monte-Carlo sample of the cohort's covariates equals its target prevalence.
GeneratorConfig resolve_intercepts(const GeneratorConfig& cfg);

/// Fully observed dataset. Cohort c draws from Rng(derive_seed(seed, c)).
Dataset generate_cohorts(const GeneratorConfig& cfg);

/// Deletes values per the plan. Cohort c draws from
/// Rng(derive_seed(seed, kMissingnessStream + c)); every optional factor
/// consumes one uniform per record plus one per MAR rule, regardless of rates.
Dataset apply_missingness(const Dataset& d, const MissingnessPlan& plan, std::uint64_t seed);
inline constexpr std::uint64_t kMissingnessStream = 0x10000;

/// sigmoid(intercept_c + beta_c . x) for a fully observed record of a cohort in `cfg`.
/// `cfg` must have resolved intercepts.
double true_risk(const GeneratorConfig& cfg, const PatientRecord& r);

/// 10 training cohorts (12,703 records, pooled prevalence ~28%) plus a held-out
/// validation cohort of 5,540 at 32%, with cohort-systematic omissions.
/// `scale` multiplies every cohort size.
GeneratorConfig pbcg_preset(double scale = 1.0);

GeneratorConfig parse_generator_config(std::string_view json_text);
std::string generator_config_to_json(const GeneratorConfig& cfg);

struct SimulatedData {
  Dataset training;
  Dataset validation;
};

/// generate + missingness + split by cfg.validation_cohorts.
SimulatedData simulate(const GeneratorConfig& cfg);

}  // namespace hetrisk
