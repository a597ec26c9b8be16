#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/encoding.hpp"

namespace hetrisk {

struct ImputationConfig {
  int imputations = 30;
  int cycles = 10;
  int donors = 5;
  std::uint64_t seed = 0;
};

void validate(const ImputationConfig& cfg);

/// Observed-value summaries of a training set, used to fill missing factors
/// of prediction-time records.
struct TrainingMeans {
  /// Mean of observed values on the identity and log2 scales (indexed by Factor).
  std::array<double, kFactorCount> mean_identity{};
  std::array<double, kFactorCount> mean_log2{};
  /// For dre and binaries: observed proportion of level 0 and level 1.
  std::array<std::array<double, 2>, kFactorCount> raw_proportions{};
  std::array<double, 3> volume_bin_proportions{};
  std::array<double, 4> fh_extended_proportions{};
  std::array<std::size_t, kFactorCount> observed{};

  bool operator==(const TrainingMeans&) const = default;
};

TrainingMeans training_means(std::span<const PatientRecord* const> records);
TrainingMeans training_means(const Dataset& d);

/// Prediction-time completion of a record for `spec`: missing continuous
/// factors take their training mean on the transformed scale and missing
/// categorical dummies take the training level proportion. Observed values
/// are encoded as usual.
Eigen::VectorXd mean_impute_target(const PatientRecord& r, const EncodingSpec& spec,
                                   const TrainingMeans& means);

struct ImputationResult {
  std::vector<Dataset> datasets;
  std::vector<std::string> warnings;
};

/// Multiple imputation by chained equations over the pooled training set.
/// Records are visited in (cohort, original index) order so the random
/// stream does not depend on the input row order; completed datasets keep
/// the input order. Binary factors (dre included) are imputed from a
/// logistic conditional with a posterior parameter draw; volume by
/// predictive mean matching on log2(volume).
ImputationResult chained_impute(const Dataset& training, const ImputationConfig& cfg);

}  // namespace hetrisk
