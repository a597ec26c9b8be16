#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/encoding.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/impute.hpp"
#include "hetrisk/stepwise.hpp"

namespace hetrisk {

enum class Strategy : std::uint8_t {
  available_cases,
  iterative_bic,
  cohort_ensemble,
  categorization,
  missing_indicator,
  imputation,
};

inline constexpr std::array<Strategy, 6> kAllStrategies = {
    Strategy::available_cases, Strategy::iterative_bic,     Strategy::cohort_ensemble,
    Strategy::categorization,  Strategy::missing_indicator, Strategy::imputation,
};

std::string_view name_of(Strategy s);
Strategy parse_strategy(std::string_view name);
/// "all" or a comma separated list; duplicates rejected.
std::vector<Strategy> parse_strategy_list(std::string_view text);
/// Strategies fitted per validation pattern rather than once.
bool is_pattern_tailored(Strategy s);

/// One fitted logistic model: retained terms and their coefficients.
struct ComponentModel {
  std::string cohort;  // ensemble member cohort, empty otherwise
  EncodingSpec spec;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;  // empty for averaged imputation coefficients
  std::size_t n = 0;
  std::vector<std::string> cohorts;
  std::vector<DroppedTerm> dropped;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = true;

  double predict(const PatientRecord& r) const;
  bool operator==(const ComponentModel&) const = default;
};

struct ImputationFitDiagnostics {
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = true;
  bool operator==(const ImputationFitDiagnostics&) const = default;
};

struct RiskModel {
  Strategy strategy = Strategy::available_cases;
  /// Target pattern of pattern-tailored models.
  std::optional<PatternMask> pattern;
  /// One component, or the members of an ensemble.
  std::vector<ComponentModel> components;
  /// Rows of the fitted design (summed over ensemble members).
  std::size_t n = 0;
  std::vector<std::string> cohorts;
  std::vector<std::string> warnings;
  /// iterative_bic: one line per loop iteration; stepwise moves otherwise.
  std::vector<std::string> selection_trace;
  /// imputation only: training summaries for prediction-time mean imputation.
  std::optional<TrainingMeans> means;
  std::vector<ImputationFitDiagnostics> imputation_fits;

  bool operator==(const RiskModel&) const = default;
};

struct StrategyConfig {
  FitConfig fit;
  StepwiseConfig stepwise;
  ImputationConfig imputation;
  /// cohort_ensemble keeps a factor for a cohort when its missing rate is below this.
  double ensemble_max_missing = 0.6;
};

RiskModel fit_available_cases(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg = {});
RiskModel fit_iterative_bic(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg = {});
RiskModel fit_cohort_ensemble(const Dataset& training, PatternMask pattern, const StrategyConfig& cfg = {});
RiskModel fit_categorization(const Dataset& training, const StrategyConfig& cfg = {});
RiskModel fit_missing_indicator(const Dataset& training, const StrategyConfig& cfg = {});
RiskModel fit_imputation(const Dataset& training, const StrategyConfig& cfg = {});

/// Dispatch; `pattern` is ignored by pattern-free strategies.
RiskModel fit_strategy(Strategy s, const Dataset& training, PatternMask pattern, const StrategyConfig& cfg = {});

/// Term specs of the pattern-free global models.
EncodingSpec categorization_spec();
EncodingSpec missing_indicator_spec();

struct Prediction {
  double risk = 0.5;
  Strategy strategy = Strategy::available_cases;
  std::size_t n = 0;
  std::vector<std::string> cohorts;
  std::optional<PatternMask> pattern;
};

/// Throws DataError when a pattern-tailored model gets a record lacking one of
/// the pattern's factors.
Prediction predict(const RiskModel& model, const PatientRecord& r);
double predict_risk(const RiskModel& model, const PatientRecord& r);

}  // namespace hetrisk
