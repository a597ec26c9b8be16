#include "hetrisk/encoding.hpp"

#include <algorithm>
#include <cmath>

#include "hetrisk/error.hpp"
#include "hetrisk/impute.hpp"

namespace hetrisk {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void add_unique(std::vector<Factor>& out, Factor f) {
  if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
}

void sort_canonical(std::vector<Factor>& v) {
  std::sort(v.begin(), v.end(), [](Factor a, Factor b) { return index_of(a) < index_of(b); });
}

std::string grouping_name(const Dummy& d) {
  switch (d.grouping) {
    case Grouping::volume_bins:
      return "volume_cat";
    case Grouping::fh_extended:
      return "fh_extended";
    case Grouping::raw:
      break;
  }
  return std::string(name_of(d.factor));
}

}  // namespace

int level_count(Grouping g) {
  switch (g) {
    case Grouping::raw:
      return 2;
    case Grouping::volume_bins:
      return 3;
    case Grouping::fh_extended:
      return 4;
  }
  return 0;
}

std::string level_name(const Dummy& d, int level) {
  if (d.missing_level && level == level_count(d.grouping)) return "missing";
  switch (d.grouping) {
    case Grouping::raw:
      if (d.factor == Factor::dre) return level == 0 ? "normal" : "abnormal";
      return level == 0 ? "no" : "yes";
    case Grouping::volume_bins: {
      static constexpr const char* kBins[] = {"<30", "30-50", ">50"};
      return kBins[level];
    }
    case Grouping::fh_extended: {
      static constexpr const char* kLevels[] = {"none", "second_only", "breast_only", "both"};
      return kLevels[level];
    }
  }
  return {};
}

int volume_bin(double volume_cc) {
  if (volume_cc < 30.0) return 0;
  if (volume_cc <= 50.0) return 1;
  return 2;
}

int fh_extended_level(double fh_pca_second, double fh_breast_first) {
  const bool second = fh_pca_second != 0.0;
  const bool breast = fh_breast_first != 0.0;
  if (second && breast) return 3;
  if (breast) return 2;
  if (second) return 1;
  return 0;
}

std::optional<int> level_of(const Dummy& d, const PatientRecord& r) {
  std::optional<int> level;
  switch (d.grouping) {
    case Grouping::raw:
      if (auto v = r.get(d.factor)) level = static_cast<int>(*v);
      break;
    case Grouping::volume_bins:
      if (auto v = r.get(Factor::volume)) level = volume_bin(*v);
      break;
    case Grouping::fh_extended: {
      auto second = r.get(Factor::fh_pca_second);
      auto breast = r.get(Factor::fh_breast_first);
      if (second && breast) level = fh_extended_level(*second, *breast);
      break;
    }
  }
  if (!level && d.missing_level) level = level_count(d.grouping);
  return level;
}

std::string Term::name() const {
  return std::visit(
      Overloaded{
          [](const Intercept&) { return std::string("(Intercept)"); },
          [](const Continuous& c) {
            std::string n(name_of(c.factor));
            if (c.transform == Transform::log2) n = "log2(" + n + ")";
            if (c.observed_part) n += "[observed]";
            return n;
          },
          [](const Dummy& d) { return grouping_name(d) + "[" + level_name(d, d.level) + "]"; },
          [](const MissingIndicator& m) {
            return "missing(" + std::string(name_of(m.factor)) + ")";
          },
          [](const Product& p) {
            std::string n;
            for (const auto& part : p.parts) {
              if (!n.empty()) n += ':';
              n += part.name();
            }
            return n;
          },
      },
      node);
}

std::vector<Factor> Term::factors() const {
  std::vector<Factor> out;
  std::visit(Overloaded{
                 [](const Intercept&) {},
                 [&](const Continuous& c) { add_unique(out, c.factor); },
                 [&](const Dummy& d) {
                   switch (d.grouping) {
                     case Grouping::raw:
                       add_unique(out, d.factor);
                       break;
                     case Grouping::volume_bins:
                       add_unique(out, Factor::volume);
                       break;
                     case Grouping::fh_extended:
                       add_unique(out, Factor::fh_pca_second);
                       add_unique(out, Factor::fh_breast_first);
                       break;
                   }
                 },
                 [&](const MissingIndicator& m) { add_unique(out, m.factor); },
                 [&](const Product& p) {
                   for (const auto& part : p.parts) {
                     for (Factor f : part.factors()) add_unique(out, f);
                   }
                 },
             },
             node);
  sort_canonical(out);
  return out;
}

std::vector<Factor> Term::required_factors() const {
  std::vector<Factor> out;
  std::visit(Overloaded{
                 [](const Intercept&) {},
                 [&](const Continuous& c) {
                   if (!c.observed_part) add_unique(out, c.factor);
                 },
                 [&](const Dummy& d) {
                   if (!d.missing_level) out = Term(d).factors();
                 },
                 [](const MissingIndicator&) {},
                 [&](const Product& p) {
                   for (const auto& part : p.parts) {
                     for (Factor f : part.required_factors()) add_unique(out, f);
                   }
                 },
             },
             node);
  sort_canonical(out);
  return out;
}

std::vector<std::string> EncodingSpec::names() const {
  std::vector<std::string> out;
  out.reserve(terms.size());
  for (const auto& t : terms) out.push_back(t.name());
  return out;
}

std::vector<Factor> EncodingSpec::factors() const {
  std::vector<Factor> out;
  for (const auto& t : terms) {
    for (Factor f : t.factors()) add_unique(out, f);
  }
  sort_canonical(out);
  return out;
}

std::vector<Factor> EncodingSpec::required_factors() const {
  std::vector<Factor> out;
  for (const auto& t : terms) {
    for (Factor f : t.required_factors()) add_unique(out, f);
  }
  sort_canonical(out);
  return out;
}

bool EncodingSpec::complete_for(const PatientRecord& r) const {
  for (Factor f : required_factors()) {
    if (!r.has(f)) return false;
  }
  return true;
}

void validate_spec(const EncodingSpec& spec) {
  if (spec.terms.empty() || !spec.terms.front().is_intercept()) {
    throw DataError("encoding must start with the intercept");
  }
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const auto& t = spec.terms[i];
    if (i > 0 && t.is_intercept()) throw DataError("encoding has more than one intercept");
    for (std::size_t j = 0; j < i; ++j) {
      if (spec.terms[j] == t) throw DataError("duplicate term: " + t.name());
    }
    if (const auto* c = std::get_if<Continuous>(&t.node)) {
      if (kind_of(c->factor) != FactorKind::continuous) {
        throw DataError("continuous term on a categorical factor: " + t.name());
      }
      const Transform expected = c->factor == Factor::age ? Transform::identity : Transform::log2;
      if (c->transform != expected) throw DataError("wrong transform for " + t.name());
      if (c->observed_part && is_mandatory(c->factor)) {
        throw DataError("observed-part term on a mandatory factor: " + t.name());
      }
    } else if (const auto* d = std::get_if<Dummy>(&t.node)) {
      const int max_level = level_count(d->grouping) - (d->missing_level ? 0 : 1);
      if (d->level < 1 || d->level > max_level) throw DataError("invalid dummy level");
      const bool anchor_ok =
          (d->grouping == Grouping::raw && kind_of(d->factor) != FactorKind::continuous) ||
          (d->grouping == Grouping::volume_bins && d->factor == Factor::volume) ||
          (d->grouping == Grouping::fh_extended && d->factor == Factor::fh_pca_second);
      if (!anchor_ok) throw DataError("invalid dummy variable: " + t.name());
    } else if (const auto* m = std::get_if<MissingIndicator>(&t.node)) {
      if (is_mandatory(m->factor)) {
        throw DataError("missing indicator on a mandatory factor: " + t.name());
      }
    } else if (const auto* p = std::get_if<Product>(&t.node)) {
      if (p->parts.size() != 2) throw DataError("product terms must have two parts");
      for (const auto& part : p->parts) {
        if (part.is_intercept() || std::holds_alternative<Product>(part.node)) {
          throw DataError("product parts must be main-effect terms: " + t.name());
        }
        const auto begin = spec.terms.begin();
        if (std::find(begin, begin + static_cast<std::ptrdiff_t>(i), part) ==
            begin + static_cast<std::ptrdiff_t>(i)) {
          throw DataError("product refers to a term not listed before it: " + t.name());
        }
      }
    }
  }
}

std::vector<Term> main_effect_terms(Factor f) {
  switch (f) {
    case Factor::age:
      return {Continuous{Factor::age, Transform::identity, false}};
    case Factor::psa:
    case Factor::volume:
      return {Continuous{f, Transform::log2, false}};
    default:
      return {Dummy{f, Grouping::raw, false, 1}};
  }
}

EncodingSpec main_effects_spec(PatternMask pattern, bool combine_extended_history) {
  EncodingSpec spec;
  spec.terms.emplace_back(Intercept{});
  for (Factor f : {Factor::age, Factor::psa}) {
    for (auto& t : main_effect_terms(f)) spec.terms.push_back(std::move(t));
  }
  const bool combined = combine_extended_history && pattern.contains(Factor::fh_pca_second) &&
                        pattern.contains(Factor::fh_breast_first);
  for (Factor f : pattern.factors()) {
    if (combined && f == Factor::fh_breast_first) continue;
    if (combined && f == Factor::fh_pca_second) {
      for (int level = 1; level <= 3; ++level) {
        spec.terms.emplace_back(Dummy{Factor::fh_pca_second, Grouping::fh_extended, false, level});
      }
      continue;
    }
    for (auto& t : main_effect_terms(f)) spec.terms.push_back(std::move(t));
  }
  return spec;
}

std::optional<double> term_value(const Term& t, const PatientRecord& r) {
  return std::visit(
      Overloaded{
          [](const Intercept&) -> std::optional<double> { return 1.0; },
          [&](const Continuous& c) -> std::optional<double> {
            const auto v = r.get(c.factor);
            if (!v) {
              if (c.observed_part) return 0.0;
              return std::nullopt;
            }
            return c.transform == Transform::log2 ? std::log2(*v) : *v;
          },
          [&](const Dummy& d) -> std::optional<double> {
            const auto level = level_of(d, r);
            if (!level) return std::nullopt;
            return *level == d.level ? 1.0 : 0.0;
          },
          [&](const MissingIndicator& m) -> std::optional<double> {
            return r.has(m.factor) ? 0.0 : 1.0;
          },
          [&](const Product& p) -> std::optional<double> {
            double v = 1.0;
            for (const auto& part : p.parts) {
              const auto pv = term_value(part, r);
              if (!pv) return std::nullopt;
              v *= *pv;
            }
            return v;
          },
      },
      t.node);
}

double term_value_imputed(const Term& t, const PatientRecord& r, const TrainingMeans& means) {
  if (auto v = term_value(t, r)) return *v;
  return std::visit(
      Overloaded{
          [](const Intercept&) { return 1.0; },
          [&](const Continuous& c) {
            return c.transform == Transform::log2 ? means.mean_log2[index_of(c.factor)]
                                                  : means.mean_identity[index_of(c.factor)];
          },
          [&](const Dummy& d) {
            switch (d.grouping) {
              case Grouping::raw:
                return means.raw_proportions[index_of(d.factor)][static_cast<std::size_t>(d.level)];
              case Grouping::volume_bins:
                return means.volume_bin_proportions[static_cast<std::size_t>(d.level)];
              case Grouping::fh_extended:
                return means.fh_extended_proportions[static_cast<std::size_t>(d.level)];
            }
            return 0.0;
          },
          [&](const MissingIndicator&) { return 1.0; },
          [&](const Product& p) {
            double v = 1.0;
            for (const auto& part : p.parts) v *= term_value_imputed(part, r, means);
            return v;
          },
      },
      t.node);
}

std::string_view to_string(DropReason r) {
  return r == DropReason::constant ? "constant" : "duplicate";
}

namespace {

[[noreturn]] void throw_missing(const Term& t, const PatientRecord& r, std::size_t row) {
  std::string factor;
  for (Factor f : t.required_factors()) {
    if (!r.has(f)) {
      factor = std::string(name_of(f));
      break;
    }
  }
  throw DataError("record " + std::to_string(row) + " (cohort " + r.cohort +
                  "): missing required factor " + factor + " for term " + t.name());
}

}  // namespace

Design encode_design(std::span<const PatientRecord* const> records, const EncodingSpec& spec) {
  validate_spec(spec);
  if (records.empty()) throw DataError("cannot encode an empty record set");
  const auto n = static_cast<Eigen::Index>(records.size());
  const auto t_count = static_cast<Eigen::Index>(spec.terms.size());

  Eigen::MatrixXd full(n, t_count);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *records[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < t_count; ++j) {
      const auto& term = spec.terms[static_cast<std::size_t>(j)];
      const auto v = term_value(term, r);
      if (!v) throw_missing(term, r, static_cast<std::size_t>(i));
      full(i, j) = *v;
    }
    y(i) = r.outcome;
  }

  Design d;
  std::vector<Eigen::Index> keep{0};
  d.spec.terms.push_back(spec.terms.front());
  for (Eigen::Index j = 1; j < t_count; ++j) {
    const auto& term = spec.terms[static_cast<std::size_t>(j)];
    const auto col = full.col(j);
    if ((col.array() == col(0)).all()) {
      d.dropped.push_back({term.name(), DropReason::constant});
      continue;
    }
    bool duplicate = false;
    for (std::size_t k = 1; k < keep.size() && !duplicate; ++k) {
      duplicate = (full.col(keep[k]).array() == col.array()).all();
    }
    if (duplicate) {
      d.dropped.push_back({term.name(), DropReason::duplicate});
      continue;
    }
    keep.push_back(j);
    d.spec.terms.push_back(term);
  }

  d.x.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    d.x.col(static_cast<Eigen::Index>(k)) = full.col(keep[k]);
  }
  d.y = std::move(y);
  return d;
}

Eigen::VectorXd encode_row(const PatientRecord& r, const EncodingSpec& spec) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(spec.terms.size()));
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    const auto v = term_value(spec.terms[j], r);
    if (!v) throw_missing(spec.terms[j], r, 0);
    row(static_cast<Eigen::Index>(j)) = *v;
  }
  return row;
}

Eigen::VectorXd encode_row_imputed(const PatientRecord& r, const EncodingSpec& spec,
                                   const TrainingMeans& means) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(spec.terms.size()));
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    row(static_cast<Eigen::Index>(j)) = term_value_imputed(spec.terms[j], r, means);
  }
  return row;
}

RecordRefs complete_cases(std::span<const PatientRecord* const> records,
                          std::span<const Factor> factors) {
  RecordRefs out;
  out.reserve(records.size());
  for (const auto* r : records) {
    bool complete = true;
    for (Factor f : factors) {
      if (!r->has(f)) {
        complete = false;
        break;
      }
    }
    if (complete) out.push_back(r);
  }
  return out;
}

}  // namespace hetrisk
