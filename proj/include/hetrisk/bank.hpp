#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/impute.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/strategies.hpp"

namespace hetrisk {

inline constexpr int kBankVersion = 1;

struct BankEntry {
  PatternMask pattern;
  /// Absent for unfittable patterns.
  std::optional<RiskModel> model;
  std::string unfittable_reason;
  bool operator==(const BankEntry&) const = default;
};

/// Available-cases models for all 1,024 optional-factor patterns.
struct ModelBank {
  std::string training_fingerprint;
  std::size_t training_n = 0;
  std::vector<std::string> cohorts;
  TrainingMeans means;
  /// Pooled training missing rates (indexed by Factor); drive the fallback order.
  std::array<double, kFactorCount> missing_rates{};
  FitConfig fit;
  Provenance provenance;
  /// Indexed by PatternMask bits.
  std::vector<BankEntry> entries;

  bool operator==(const ModelBank&) const = default;
};

struct BankConfig {
  FitConfig fit;
  /// 0 uses the hardware concurrency.
  unsigned threads = 0;
};

ModelBank build_bank(const Dataset& training, const BankConfig& cfg = {}, const Provenance& provenance = {});

struct BankPrediction {
  double risk = 0.5;
  PatternMask observed;
  PatternMask used;
  bool fallback = false;
  std::size_t n = 0;
  std::vector<std::string> cohorts;
  std::vector<std::string> warnings;
};

/// Routes the record to its observed pattern's model, falling back along the
/// greedy most-missing-first rule past unfittable entries.
PatternMask resolve_pattern(const ModelBank& bank, PatternMask observed, std::vector<std::string>* warnings = nullptr);
BankPrediction bank_predict(const ModelBank& bank, const PatientRecord& r);

/// "hetrisk-bank v1 sha256:<hex of payload>\n" followed by the canonical JSON payload.
std::string save_bank(const ModelBank& bank);
/// Validates header version, checksum, entry count and fingerprint.
ModelBank load_bank(std::string_view bytes);

/// Hex SHA-256 of the saved bytes; identifies the bank version in responses.
std::string bank_id(std::string_view saved_bytes);

/// Odds-ratio table (Wald 95% intervals) for one entry.
std::vector<WaldRow> entry_odds_ratios(const ModelBank& bank, PatternMask pattern);
std::string format_inspection(const ModelBank& bank, PatternMask pattern);

}  // namespace hetrisk
