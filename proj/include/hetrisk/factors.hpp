#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetrisk {

/// The twelve risk factors. psa and age are mandatory; the remaining ten are
/// optional and their declaration order is the canonical PatternMask bit order.
enum class Factor : std::uint8_t {
  psa,
  age,
  dre,
  volume,
  prior_biopsy,
  five_ari,
  prior_psa_screen,
  african_ancestry,
  hispanic,
  fh_pca_first,
  fh_pca_second,
  fh_breast_first,
};

enum class FactorKind : std::uint8_t { continuous, categorical, binary };

inline constexpr std::size_t kFactorCount = 12;
inline constexpr std::size_t kOptionalCount = 10;
inline constexpr std::size_t kPatternCount = 1024;

inline constexpr std::array<Factor, kFactorCount> kAllFactors = {
    Factor::psa,           Factor::age,          Factor::dre,
    Factor::volume,        Factor::prior_biopsy, Factor::five_ari,
    Factor::prior_psa_screen, Factor::african_ancestry, Factor::hispanic,
    Factor::fh_pca_first,  Factor::fh_pca_second, Factor::fh_breast_first,
};

inline constexpr std::array<Factor, kOptionalCount> kOptionalFactors = {
    Factor::dre,          Factor::volume,        Factor::prior_biopsy,
    Factor::five_ari,     Factor::prior_psa_screen, Factor::african_ancestry,
    Factor::hispanic,     Factor::fh_pca_first,  Factor::fh_pca_second,
    Factor::fh_breast_first,
};

constexpr std::size_t index_of(Factor f) { return static_cast<std::size_t>(f); }
constexpr bool is_mandatory(Factor f) { return f == Factor::psa || f == Factor::age; }

/// Bit position of an optional factor; psa and age have none.
constexpr int optional_bit(Factor f) {
  return is_mandatory(f) ? -1 : static_cast<int>(index_of(f)) - 2;
}
constexpr Factor optional_factor(std::size_t bit) { return kOptionalFactors[bit]; }

FactorKind kind_of(Factor f);
std::string_view name_of(Factor f);
/// Human readable label used by the service schema.
std::string_view label_of(Factor f);
/// Throws DataError for unknown names.
Factor parse_factor(std::string_view name);
std::optional<Factor> try_parse_factor(std::string_view name);

/// A subset of the ten optional factors (bit set = factor available / included).
class PatternMask {
 public:
  constexpr PatternMask() = default;
  constexpr explicit PatternMask(std::uint16_t bits) : bits_(bits & 0x3FF) {}

  static constexpr PatternMask none() { return PatternMask{0}; }
  static constexpr PatternMask all() { return PatternMask{0x3FF}; }

  constexpr std::uint16_t bits() const { return bits_; }
  constexpr bool contains(Factor f) const {
    const int b = optional_bit(f);
    return b >= 0 && ((bits_ >> b) & 1U) != 0;
  }
  constexpr PatternMask with(Factor f) const {
    const int b = optional_bit(f);
    return b < 0 ? *this : PatternMask(static_cast<std::uint16_t>(bits_ | (1U << b)));
  }
  constexpr PatternMask without(Factor f) const {
    const int b = optional_bit(f);
    return b < 0 ? *this : PatternMask(static_cast<std::uint16_t>(bits_ & ~(1U << b)));
  }
  constexpr bool is_subset_of(PatternMask other) const {
    return (bits_ & ~other.bits_) == 0;
  }
  constexpr PatternMask operator&(PatternMask o) const {
    return PatternMask(static_cast<std::uint16_t>(bits_ & o.bits_));
  }
  constexpr PatternMask operator|(PatternMask o) const {
    return PatternMask(static_cast<std::uint16_t>(bits_ | o.bits_));
  }
  int count() const;
  /// Included optional factors in canonical order.
  std::vector<Factor> factors() const;
  /// Comma separated factor names, "" for the empty pattern.
  std::string to_string() const;

  constexpr auto operator<=>(const PatternMask&) const = default;

 private:
  std::uint16_t bits_ = 0;
};

/// Parses either an integer 0..1023 or a comma separated list of optional
/// factor names ("" or "none" for the empty pattern).
PatternMask parse_pattern(std::string_view text);

}  // namespace hetrisk
