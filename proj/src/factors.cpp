#include "hetrisk/factors.hpp"

#include <bit>
#include <charconv>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

constexpr std::array<std::string_view, kFactorCount> kNames = {
    "psa",           "age",      "dre",
    "volume",        "prior_biopsy", "five_ari",
    "prior_psa_screen", "african_ancestry", "hispanic",
    "fh_pca_first",  "fh_pca_second", "fh_breast_first",
};

constexpr std::array<std::string_view, kFactorCount> kLabels = {
    "PSA (ng/mL)",
    "Age (years)",
    "Digital rectal exam",
    "Prostate volume (cc)",
    "Prior negative biopsy",
    "5-alpha-reductase-inhibitor use",
    "Prior PSA screen",
    "African ancestry",
    "Hispanic ethnicity",
    "First-degree prostate cancer family history",
    "Second-degree prostate cancer family history",
    "First-degree breast cancer family history",
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

FactorKind kind_of(Factor f) {
  switch (f) {
    case Factor::psa:
    case Factor::age:
    case Factor::volume:
      return FactorKind::continuous;
    case Factor::dre:
      return FactorKind::categorical;
    default:
      return FactorKind::binary;
  }
}

std::string_view name_of(Factor f) { return kNames[index_of(f)]; }
std::string_view label_of(Factor f) { return kLabels[index_of(f)]; }

std::optional<Factor> try_parse_factor(std::string_view name) {
  for (std::size_t i = 0; i < kFactorCount; ++i) {
    if (kNames[i] == name) return static_cast<Factor>(i);
  }
  return std::nullopt;
}

Factor parse_factor(std::string_view name) {
  if (auto f = try_parse_factor(name)) return *f;
  throw DataError("unknown risk factor: " + std::string(name));
}

int PatternMask::count() const { return std::popcount(bits_); }

std::vector<Factor> PatternMask::factors() const {
  std::vector<Factor> out;
  for (std::size_t b = 0; b < kOptionalCount; ++b) {
    if ((bits_ >> b) & 1U) out.push_back(kOptionalFactors[b]);
  }
  return out;
}

std::string PatternMask::to_string() const {
  std::string out;
  for (Factor f : factors()) {
    if (!out.empty()) out += ',';
    out += name_of(f);
  }
  return out;
}

PatternMask parse_pattern(std::string_view text) {
  text = trim(text);
  if (text.empty() || text == "none") return PatternMask::none();
  if (text == "all") return PatternMask::all();
  if (text.front() >= '0' && text.front() <= '9') {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value >= kPatternCount) {
      throw DataError("invalid pattern mask: " + std::string(text));
    }
    return PatternMask(static_cast<std::uint16_t>(value));
  }
  PatternMask mask;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto token = trim(text.substr(0, comma));
    // psa and age are implicit in every pattern; with() ignores them
    mask = mask.with(parse_factor(token));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return mask;
}

}  // namespace hetrisk
