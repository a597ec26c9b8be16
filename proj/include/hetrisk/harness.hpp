#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/metrics.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/strategies.hpp"

namespace hetrisk {

/// Next pattern of the greedy fallback: drops the factor of `p` with the
/// highest missing rate (ties go to the higher bit). `p` must be non-empty.
PatternMask drop_most_missing(PatternMask p, const std::array<double, kFactorCount>& missing_rates);

struct HarnessConfig {
  StrategyConfig strategy;
  std::uint64_t seed = 0;
  /// Worker threads for LOCO folds; 0 uses the hardware concurrency.
  unsigned threads = 0;
};

/// Result of fitting a pattern-tailored strategy for one requested pattern,
/// after any fallback.
struct PatternFit {
  PatternMask requested;
  PatternMask used;
  RiskModel model;
  /// One entry per pattern tried and rejected, with the reason.
  std::vector<std::string> rejected;
};

struct StrategyPredictions {
  Strategy strategy = Strategy::available_cases;
  std::vector<double> risk;  // aligned with the validation records
  /// Pattern of the model used per record (pattern-tailored strategies only).
  std::vector<PatternMask> used_pattern;
  std::size_t models_fitted = 0;
  std::size_t fallback_records = 0;
  std::vector<std::string> warnings;
};

/// Fits on `training` and predicts every validation record. Fitting never
/// sees the validation set; prediction never reads validation outcomes.
/// The imputation seed is `cfg.seed`.
std::vector<StrategyPredictions> predict_validation(const Dataset& training, const Dataset& validation,
                                                    const std::vector<Strategy>& strategies,
                                                    const HarnessConfig& cfg);

struct StrategyValidation {
  Strategy strategy = Strategy::available_cases;
  std::size_t n = 0;
  double prevalence = 0.0;
  AucInterval auc;
  /// Percentage points.
  CilInterval cil;
  std::vector<CalibrationBin> calibration;
  std::size_t models_fitted = 0;
  std::size_t fallback_records = 0;
  std::vector<std::string> warnings;
};

struct OutcomeSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

struct StrategySummary {
  Strategy strategy = Strategy::available_cases;
  OutcomeSummary cases;
  OutcomeSummary non_cases;
};

struct MethodComparison {
  std::vector<Strategy> strategies;
  /// Pearson correlations; nullopt when either prediction vector is constant.
  std::vector<std::vector<std::optional<double>>> correlation;
  std::vector<StrategySummary> summaries;
};

struct DataSummary {
  std::string fingerprint;
  std::size_t n = 0;
  std::vector<std::string> cohorts;
};

struct ValidationReport {
  std::uint64_t seed = 0;
  DataSummary training;
  DataSummary validation;
  std::vector<StrategyValidation> strategies;
  MethodComparison comparison;
};

/// Metrics and comparison from already computed predictions.
ValidationReport assemble_validation(const Dataset& training, const Dataset& validation,
                                     const std::vector<StrategyPredictions>& predictions, std::uint64_t seed);

/// Throws DataError when training and validation share a cohort id or the
/// validation set lacks cases or non-cases.
ValidationReport external_validate(const Dataset& training, const Dataset& validation,
                                   const std::vector<Strategy>& strategies, const HarnessConfig& cfg);

MethodComparison method_comparison(const Dataset& training, const Dataset& validation,
                                   const std::vector<Strategy>& strategies, const HarnessConfig& cfg);
MethodComparison compare_predictions(const std::vector<StrategyPredictions>& predictions,
                                     const Dataset& validation);

/// Sample Pearson correlation; nullopt when either vector is constant.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
/// Linear-interpolation quantile (R type 7) of unsorted data.
double quantile(std::vector<double> v, double q);

struct CvCell {
  Strategy strategy = Strategy::available_cases;
  std::string held_out;
  std::string training_fingerprint;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string reason;  // set when !ok
  std::size_t n = 0;
  double prevalence = 0.0;
  double auc = 0.0;
  double cil = 0.0;  // percentage points
};

struct SpreadSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

struct CvStrategySummary {
  Strategy strategy = Strategy::available_cases;
  std::size_t cells_ok = 0;
  std::optional<SpreadSummary> auc;
  std::optional<SpreadSummary> cil;
};

struct CvReport {
  std::uint64_t seed = 0;
  DataSummary training;
  std::vector<Strategy> strategies;
  /// Row-major by cohort, then strategy.
  std::vector<CvCell> cells;
  std::vector<CvStrategySummary> summary;
};

/// Seed of LOCO fold `fold`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

/// Holds out each cohort in turn. Throws DataError for fewer than 2 cohorts.
CvReport loco_cv(const Dataset& training, const std::vector<Strategy>& strategies, const HarnessConfig& cfg);

DataSummary summarize(const Dataset& d);

inline constexpr int kReportVersion = 1;

Json to_json(const ValidationReport& r, const Provenance& p, const HarnessConfig& cfg);
Json to_json(const CvReport& r, const Provenance& p, const HarnessConfig& cfg);
/// Flattened tables with "# " provenance lines.
std::string validation_csv(const ValidationReport& r, const Provenance& p);
std::string cv_csv(const CvReport& r, const Provenance& p);
/// One row per validation record: cohort, outcome and each strategy's risk.
std::string predictions_csv(const std::vector<StrategyPredictions>& predictions, const Dataset& validation,
                            const Provenance& p);

}  // namespace hetrisk
