#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetrisk {

/// Throws DataError unless the spans have equal length, predictions are
/// finite in [0, 1] and outcomes are 0/1.
void check_pairs(std::span<const double> predicted, std::span<const int> outcome);

/// Probability that a random case outranks a random non-case (ties count 1/2),
/// from mid-ranks in O(n log n). Needs at least one of each class.
double auc(std::span<const double> predicted, std::span<const int> outcome);

struct AucInterval {
  double auc = 0.5;
  double lo = 0.5;
  double hi = 0.5;
  double std_error = 0.0;
  std::optional<std::string> warning;
};

/// DeLong interval (normal approximation, clipped to [0, 1]). Needs at least
/// two of each class. A zero variance collapses the interval onto the estimate.
AucInterval auc_ci(std::span<const double> predicted, std::span<const int> outcome);

struct CilInterval {
  double value = 0.0;  // mean predicted minus prevalence, as a proportion
  double lo = 0.0;
  double hi = 0.0;
};

/// Calibration in the large with value +/- 1.96 sd(p - y) / sqrt(n). Needs n >= 2.
CilInterval cil(std::span<const double> predicted, std::span<const int> outcome);

struct CalibrationBin {
  std::size_t n = 0;
  double mean_predicted = 0.0;
  double observed = 0.0;
  double ci_low = 0.0;   // Wilson 95%
  double ci_high = 0.0;
};

/// Ten bins of consecutive sorted predictions (stable on ties). Sizes differ by
/// at most one; the first n % 10 bins hold the extra record. Needs n >= 10.
std::vector<CalibrationBin> calibration_deciles(std::span<const double> predicted,
                                                std::span<const int> outcome);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054);

}  // namespace hetrisk
