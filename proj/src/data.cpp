#include "hetrisk/data.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>

#include "hetrisk/digest.hpp"
#include "hetrisk/error.hpp"

namespace hetrisk {

std::optional<double> PatientRecord::get(Factor f) const {
  switch (f) {
    case Factor::psa:
      return psa;
    case Factor::age:
      return age;
    default:
      return optional[static_cast<std::size_t>(optional_bit(f))];
  }
}

void PatientRecord::set(Factor f, std::optional<double> value) {
  switch (f) {
    case Factor::psa:
      psa = value.value_or(0.0);
      break;
    case Factor::age:
      age = value.value_or(0.0);
      break;
    default:
      optional[static_cast<std::size_t>(optional_bit(f))] = value;
  }
}

void validate_record(const PatientRecord& r) {
  if (r.cohort.empty()) throw DataError("empty cohort id");
  if (r.cohort.find_first_of(",\"\r\n") != std::string::npos) {
    throw DataError("cohort id contains a reserved character: " + r.cohort);
  }
  if (!std::isfinite(r.psa) || r.psa <= 0.0) {
    throw DataError("psa must be > 0, got " + format_double(r.psa));
  }
  if (!std::isfinite(r.age) || r.age < 18.0 || r.age > 120.0) {
    throw DataError("age must be within [18, 120], got " + format_double(r.age));
  }
  if (r.outcome != 0 && r.outcome != 1) throw DataError("outcome must be 0 or 1");
  for (std::size_t b = 0; b < kOptionalCount; ++b) {
    const auto& v = r.optional[b];
    if (!v) continue;
    const Factor f = kOptionalFactors[b];
    if (f == Factor::volume) {
      if (!std::isfinite(*v) || *v <= 0.0) {
        throw DataError("volume must be > 0, got " + format_double(*v));
      }
    } else if (*v != 0.0 && *v != 1.0) {
      throw DataError(std::string(name_of(f)) + " must be 0 or 1");
    }
  }
}

PatternMask observed_pattern(const PatientRecord& r) {
  std::uint16_t bits = 0;
  for (std::size_t b = 0; b < kOptionalCount; ++b) {
    if (r.optional[b]) bits |= static_cast<std::uint16_t>(1U << b);
  }
  return PatternMask(bits);
}

Dataset::Dataset(std::vector<PatientRecord> records) : records_(std::move(records)) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i]);
    auto [it, inserted] = index.try_emplace(records_[i].cohort, cohorts_.size());
    if (inserted) {
      cohorts_.push_back(records_[i].cohort);
      cohort_rows_.emplace_back();
    }
    cohort_rows_[it->second].push_back(i);
  }
}

std::optional<std::size_t> Dataset::cohort_index(std::string_view id) const {
  for (std::size_t c = 0; c < cohorts_.size(); ++c) {
    if (cohorts_[c] == id) return c;
  }
  return std::nullopt;
}

RecordRefs Dataset::refs() const {
  RecordRefs out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(&r);
  return out;
}

Dataset Dataset::filter_cohorts(std::span<const std::string> keep) const {
  std::vector<PatientRecord> out;
  for (const auto& r : records_) {
    for (const auto& k : keep) {
      if (r.cohort == k) {
        out.push_back(r);
        break;
      }
    }
  }
  return Dataset(std::move(out));
}

Dataset Dataset::without_cohort(std::string_view id) const {
  std::vector<PatientRecord> out;
  for (const auto& r : records_) {
    if (r.cohort != id) out.push_back(r);
  }
  return Dataset(std::move(out));
}

Dataset Dataset::only_cohort(std::string_view id) const {
  std::vector<PatientRecord> out;
  for (const auto& r : records_) {
    if (r.cohort == id) out.push_back(r);
  }
  return Dataset(std::move(out));
}

MissingProfile cohort_missing_profile(const Dataset& d) {
  if (d.empty()) throw DataError("missing profile of an empty dataset");
  MissingProfile p;
  p.cohorts = d.cohorts();
  for (std::size_t c = 0; c < d.cohorts().size(); ++c) {
    const auto& rows = d.cohort_rows(c);
    if (rows.empty()) throw DataError("empty cohort: " + d.cohorts()[c]);
    std::array<double, kFactorCount> frac{};
    for (std::size_t b = 0; b < kOptionalCount; ++b) {
      std::size_t missing = 0;
      for (std::size_t i : rows) missing += d[i].optional[b] ? 0 : 1;
      frac[index_of(kOptionalFactors[b])] =
          static_cast<double>(missing) / static_cast<double>(rows.size());
    }
    p.fractions.push_back(frac);
  }
  return p;
}

std::array<double, kFactorCount> missing_rates(std::span<const PatientRecord* const> records) {
  std::array<double, kFactorCount> out{};
  if (records.empty()) return out;
  for (std::size_t b = 0; b < kOptionalCount; ++b) {
    std::size_t missing = 0;
    for (const auto* r : records) missing += r->optional[b] ? 0 : 1;
    out[index_of(kOptionalFactors[b])] =
        static_cast<double>(missing) / static_cast<double>(records.size());
  }
  return out;
}

std::array<double, kFactorCount> missing_rates(const Dataset& d) {
  const auto refs = d.refs();
  return missing_rates(refs);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("float formatting failed");
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool is_missing(std::string_view field) { return field.empty() || field == "NA"; }

double parse_number(std::string_view field, std::string_view column, std::size_t row) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw DataError("row " + std::to_string(row) + ": non-numeric value '" +
                    std::string(field) + "' in column " + std::string(column));
  }
  return value;
}

}  // namespace

Dataset parse_cohort_csv(std::string_view text) {
  // column order after the cohort id
  static constexpr std::array<Factor, kFactorCount> kColumns = {
      Factor::age,          Factor::psa,           Factor::dre,
      Factor::volume,       Factor::prior_biopsy,  Factor::five_ari,
      Factor::prior_psa_screen, Factor::african_ancestry, Factor::hispanic,
      Factor::fh_pca_first, Factor::fh_pca_second, Factor::fh_breast_first,
  };

  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }

  std::size_t pos = 0;
  while (pos < lines.size() && !lines[pos].empty() && lines[pos].front() == '#') ++pos;
  if (pos >= lines.size()) throw DataError("malformed header: input is empty");
  if (lines[pos] != kCsvHeader) {
    throw DataError("malformed header: expected '" + std::string(kCsvHeader) + "'");
  }
  ++pos;

  std::vector<PatientRecord> records;
  std::size_t row = 0;
  for (; pos < lines.size(); ++pos) {
    const auto line = lines[pos];
    if (line.empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != kFactorCount + 2) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(kFactorCount + 2) + " fields, got " +
                      std::to_string(fields.size()));
    }
    PatientRecord r;
    r.cohort = std::string(fields[0]);
    if (r.cohort.empty()) throw DataError("row " + std::to_string(row) + ": empty cohort id");
    for (std::size_t c = 0; c < kFactorCount; ++c) {
      const Factor f = kColumns[c];
      const auto field = fields[c + 1];
      if (is_missing(field)) {
        if (is_mandatory(f)) {
          throw DataError("row " + std::to_string(row) +
                          ": mandatory factor missing: " + std::string(name_of(f)));
        }
        continue;
      }
      if (f == Factor::dre) {
        if (field == "normal") {
          r.set(f, 0.0);
        } else if (field == "abnormal") {
          r.set(f, 1.0);
        } else {
          throw DataError("row " + std::to_string(row) + ": dre must be normal/abnormal/NA, got '" +
                          std::string(field) + "'");
        }
        continue;
      }
      const double v = parse_number(field, name_of(f), row);
      if (kind_of(f) == FactorKind::binary && v != 0.0 && v != 1.0) {
        throw DataError("row " + std::to_string(row) + ": " + std::string(name_of(f)) +
                        " must be 0 or 1");
      }
      r.set(f, v);
    }
    const auto outcome = fields[kFactorCount + 1];
    if (outcome == "0") {
      r.outcome = 0;
    } else if (outcome == "1") {
      r.outcome = 1;
    } else if (is_missing(outcome)) {
      throw DataError("row " + std::to_string(row) + ": mandatory field missing: outcome");
    } else {
      throw DataError("row " + std::to_string(row) + ": outcome must be 0 or 1");
    }
    try {
      validate_record(r);
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(row) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

std::string write_cohort_csv(const Dataset& d, std::string_view provenance) {
  std::string out;
  while (!provenance.empty()) {
    const auto nl = provenance.find('\n');
    out += "# ";
    out += provenance.substr(0, nl);
    out += '\n';
    if (nl == std::string_view::npos) break;
    provenance.remove_prefix(nl + 1);
  }
  out += kCsvHeader;
  out += '\n';
  for (const auto& r : d.records()) {
    out += r.cohort;
    out += ',';
    out += format_double(r.age);
    out += ',';
    out += format_double(r.psa);
    for (std::size_t b = 0; b < kOptionalCount; ++b) {
      out += ',';
      const auto& v = r.optional[b];
      if (!v) {
        out += "NA";
      } else if (kOptionalFactors[b] == Factor::dre) {
        out += *v != 0.0 ? "abnormal" : "normal";
      } else {
        out += format_double(*v);
      }
    }
    out += ',';
    out += r.outcome != 0 ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string fingerprint(const Dataset& d) { return sha256_hex(write_cohort_csv(d)); }

}  // namespace hetrisk
