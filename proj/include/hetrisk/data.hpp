#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetrisk/factors.hpp"

namespace hetrisk {

/// One biopsy. Optional factors are indexed by their PatternMask bit. Binary
/// factors hold 0/1; dre holds 1 for abnormal and 0 for normal.
struct PatientRecord {
  std::string cohort;
  double age = 0.0;
  double psa = 0.0;
  std::array<std::optional<double>, kOptionalCount> optional{};
  int outcome = 0;

  std::optional<double> get(Factor f) const;
  bool has(Factor f) const { return get(f).has_value(); }
  void set(Factor f, std::optional<double> value);

  bool operator==(const PatientRecord&) const = default;
};

/// Throws DataError when the record violates the schema.
void validate_record(const PatientRecord& r);

/// Bit i set iff optional factor i has a value.
PatternMask observed_pattern(const PatientRecord& r);

/// Non-owning list of records (subsets, folds, complete-case selections).
using RecordRefs = std::vector<const PatientRecord*>;

/// Immutable multi-cohort dataset. Record order is preserved; cohorts are
/// listed in order of first appearance.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<PatientRecord> records);

  std::span<const PatientRecord> records() const { return records_; }
  const PatientRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<std::string>& cohorts() const { return cohorts_; }
  const std::vector<std::size_t>& cohort_rows(std::size_t cohort_index) const {
    return cohort_rows_[cohort_index];
  }
  std::optional<std::size_t> cohort_index(std::string_view id) const;

  RecordRefs refs() const;
  Dataset filter_cohorts(std::span<const std::string> keep) const;
  Dataset without_cohort(std::string_view id) const;
  Dataset only_cohort(std::string_view id) const;

  bool operator==(const Dataset& o) const { return records_ == o.records_; }

 private:
  std::vector<PatientRecord> records_;
  std::vector<std::string> cohorts_;
  std::vector<std::vector<std::size_t>> cohort_rows_;
};

/// Per-cohort, per-factor missing fraction (indexed by Factor).
struct MissingProfile {
  std::vector<std::string> cohorts;
  std::vector<std::array<double, kFactorCount>> fractions;
};

MissingProfile cohort_missing_profile(const Dataset& d);

/// Missing fraction of each factor over the given records (pooled).
std::array<double, kFactorCount> missing_rates(std::span<const PatientRecord* const> records);
std::array<double, kFactorCount> missing_rates(const Dataset& d);

inline constexpr std::string_view kCsvHeader =
    "cohort,age,psa,dre,volume,prior_biopsy,five_ari,prior_psa_screen,"
    "african_ancestry,hispanic,fh_pca_first,fh_pca_second,fh_breast_first,outcome";

/// Parses the cohort CSV format. Leading lines starting with '#' are
/// provenance comments and are skipped. Errors name the 1-based data row.
Dataset parse_cohort_csv(std::string_view text);

/// Canonical writer: shortest round-trip floats, "NA" for missing. Each line
/// of `provenance` is emitted as a leading "# " comment.
std::string write_cohort_csv(const Dataset& d, std::string_view provenance = {});

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Hex SHA-256 of the canonical CSV serialization (without provenance).
std::string fingerprint(const Dataset& d);

}  // namespace hetrisk
