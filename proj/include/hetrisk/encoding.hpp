#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/factors.hpp"

namespace hetrisk {

struct TrainingMeans;

enum class Transform : std::uint8_t { identity, log2 };

/// How a dummy's categorical variable is derived from the record.
///  - raw:         a binary factor or dre; levels {no, yes} / {normal, abnormal}
///  - volume_bins: volume binned to {<30, 30-50, >50}; 30 and 50 belong to the middle bin
///  - fh_extended: fh_pca_second x fh_breast_first combined to
///                 {none, second_only, breast_only, both}
/// With `missing_level` an extra trailing level "missing" absorbs records that
/// lack the variable (for fh_extended: lack either component).
enum class Grouping : std::uint8_t { raw, volume_bins, fh_extended };

struct Term;

struct Intercept {
  bool operator==(const Intercept&) const = default;
};

/// A continuous factor. With `observed_part` the value is 0 when the factor is
/// missing, i.e. the (1 - M) * x term of the missing-indicator basis.
struct Continuous {
  Factor factor = Factor::age;
  Transform transform = Transform::identity;
  bool observed_part = false;
  bool operator==(const Continuous&) const = default;
};

/// Treatment-coded dummy for `level` (level 0 is the reference and never a term).
struct Dummy {
  Factor factor = Factor::dre;  // anchor: the factor, volume, or fh_pca_second
  Grouping grouping = Grouping::raw;
  bool missing_level = false;
  int level = 1;
  bool operator==(const Dummy&) const = default;
};

/// 1 when the factor is missing.
struct MissingIndicator {
  Factor factor = Factor::volume;
  bool operator==(const MissingIndicator&) const = default;
};

struct Product {
  std::vector<Term> parts;
  bool operator==(const Product&) const;
};

struct Term {
  std::variant<Intercept, Continuous, Dummy, MissingIndicator, Product> node;

  Term() = default;
  template <class T>
    requires(!std::is_same_v<std::decay_t<T>, Term>)
  Term(T t) : node(std::move(t)) {}  // NOLINT(google-explicit-constructor)

  bool is_intercept() const { return std::holds_alternative<Intercept>(node); }
  std::string name() const;
  /// Factors whose values the term reads (both fh factors for fh_extended).
  std::vector<Factor> factors() const;
  /// Factors that must be present for the term to be evaluated without imputation.
  std::vector<Factor> required_factors() const;

  bool operator==(const Term& o) const { return node == o.node; }
};

inline bool Product::operator==(const Product& o) const { return parts == o.parts; }

/// Number of levels of a grouping, excluding any missing level.
int level_count(Grouping g);
std::string level_name(const Dummy& d, int level);
/// Level of `r` for the dummy's variable; nullopt when missing and the
/// dummy has no missing level.
std::optional<int> level_of(const Dummy& d, const PatientRecord& r);

/// Bin index for volume in cc: 0 for <30, 1 for [30,50], 2 for >50.
int volume_bin(double volume_cc);
/// Combined extended family history level for two 0/1 values.
int fh_extended_level(double fh_pca_second, double fh_breast_first);

/// Ordered term list. Exactly one intercept, always first; products refer to
/// terms listed before them.
struct EncodingSpec {
  std::vector<Term> terms;

  std::vector<std::string> names() const;
  /// Every factor read by any term.
  std::vector<Factor> factors() const;
  /// Factors that must be present (missing-level dummies and indicators
  /// consume missingness instead).
  std::vector<Factor> required_factors() const;
  bool complete_for(const PatientRecord& r) const;
  bool operator==(const EncodingSpec&) const = default;
};

/// Throws DataError when the structural invariants fail.
void validate_spec(const EncodingSpec& spec);

/// Main-effect terms for one factor: age identity, psa/volume log2, dre and
/// binaries as a single treatment dummy.
std::vector<Term> main_effect_terms(Factor f);

/// Intercept + age + log2(psa) + main effects of the pattern's factors. When
/// `combine_extended_history` and both fh_pca_second and fh_breast_first are
/// in the pattern they enter as the combined four-level variable.
EncodingSpec main_effects_spec(PatternMask pattern, bool combine_extended_history);

/// Value of a term for a record; nullopt when a required factor is missing.
std::optional<double> term_value(const Term& t, const PatientRecord& r);
/// Value with training-mean substitution for missing factors: continuous
/// factors get their transformed-scale mean, dummies the level proportion.
double term_value_imputed(const Term& t, const PatientRecord& r, const TrainingMeans& means);

enum class DropReason : std::uint8_t { constant, duplicate };

struct DroppedTerm {
  std::string name;
  DropReason reason = DropReason::constant;
  bool operator==(const DroppedTerm&) const = default;
};

std::string_view to_string(DropReason r);

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  EncodingSpec spec;  // retained terms, one per column
  std::vector<DroppedTerm> dropped;
};

/// One row per record, one column per retained term. Non-intercept constant
/// columns and exact duplicates of an earlier column are dropped and reported.
/// Throws DataError naming the record and factor when a required value is missing.
Design encode_design(std::span<const PatientRecord* const> records, const EncodingSpec& spec);

/// Single row for prediction (no column dropping).
Eigen::VectorXd encode_row(const PatientRecord& r, const EncodingSpec& spec);
Eigen::VectorXd encode_row_imputed(const PatientRecord& r, const EncodingSpec& spec,
                                   const TrainingMeans& means);

/// Records that are complete for the given factors.
RecordRefs complete_cases(std::span<const PatientRecord* const> records,
                          std::span<const Factor> factors);

}  // namespace hetrisk
