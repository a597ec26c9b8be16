#include "hetrisk/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

std::string_view grouping_id(Grouping g) {
  switch (g) {
    case Grouping::raw: return "raw";
    case Grouping::volume_bins: return "volume_bins";
    case Grouping::fh_extended: return "fh_extended";
  }
  return "";
}

Grouping parse_grouping(const std::string& s) {
  if (s == "raw") return Grouping::raw;
  if (s == "volume_bins") return Grouping::volume_bins;
  if (s == "fh_extended") return Grouping::fh_extended;
  throw DataError("unknown grouping '" + s + "'");
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError("non-finite value in model coefficients");
    out.push_back(v[i]);
  }
  return out;
}

Eigen::VectorXd vector_from(const Json& j, std::string_view where) {
  if (!j.is_array()) throw DataError(std::string(where) + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(std::string(where) + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

template <class T>
T get_as(const Json& j, std::string_view key, std::string_view where) {
  const Json& v = require_key(j, key, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string(where) + ": field '" + std::string(key) + "' has the wrong type");
  }
}

}  // namespace

const Json& require_key(const Json& j, std::string_view key, std::string_view where) {
  if (!j.is_object()) throw DataError(std::string(where) + ": expected an object");
  const auto it = j.find(std::string(key));
  if (it == j.end()) throw DataError(std::string(where) + ": missing field '" + std::string(key) + "'");
  return *it;
}

Json parse_json(std::string_view text, std::string_view where) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string(where) + ": malformed JSON: " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

Json to_json(const Provenance& p) {
  Json j;
  j["command"] = p.command;
  j["seed"] = p.seed ? Json(*p.seed) : Json(nullptr);
  return j;
}

Provenance provenance_from_json(const Json& j) {
  Provenance p;
  p.command = get_as<std::string>(j, "command", "provenance");
  const Json& s = require_key(j, "seed", "provenance");
  if (!s.is_null()) p.seed = get_as<std::uint64_t>(j, "seed", "provenance");
  return p;
}

Json to_json(const Term& t) {
  return std::visit(
      [](const auto& node) -> Json {
        using T = std::decay_t<decltype(node)>;
        Json j;
        if constexpr (std::is_same_v<T, Intercept>) {
          j["kind"] = "intercept";
        } else if constexpr (std::is_same_v<T, Continuous>) {
          j["kind"] = "continuous";
          j["factor"] = name_of(node.factor);
          j["transform"] = node.transform == Transform::log2 ? "log2" : "identity";
          j["observed_part"] = node.observed_part;
        } else if constexpr (std::is_same_v<T, Dummy>) {
          j["kind"] = "dummy";
          j["factor"] = name_of(node.factor);
          j["grouping"] = grouping_id(node.grouping);
          j["missing_level"] = node.missing_level;
          j["level"] = node.level;
        } else if constexpr (std::is_same_v<T, MissingIndicator>) {
          j["kind"] = "missing_indicator";
          j["factor"] = name_of(node.factor);
        } else {
          j["kind"] = "product";
          j["parts"] = Json::array();
          for (const auto& p : node.parts) j["parts"].push_back(to_json(p));
        }
        return j;
      },
      t.node);
}

Term term_from_json(const Json& j) {
  const auto kind = get_as<std::string>(j, "kind", "term");
  if (kind == "intercept") return Intercept{};
  if (kind == "continuous") {
    const auto transform = get_as<std::string>(j, "transform", "term");
    if (transform != "log2" && transform != "identity") throw DataError("term: unknown transform '" + transform + "'");
    return Continuous{parse_factor(get_as<std::string>(j, "factor", "term")),
                      transform == "log2" ? Transform::log2 : Transform::identity,
                      get_as<bool>(j, "observed_part", "term")};
  }
  if (kind == "dummy") {
    return Dummy{parse_factor(get_as<std::string>(j, "factor", "term")),
                 parse_grouping(get_as<std::string>(j, "grouping", "term")),
                 get_as<bool>(j, "missing_level", "term"), get_as<int>(j, "level", "term")};
  }
  if (kind == "missing_indicator") {
    return MissingIndicator{parse_factor(get_as<std::string>(j, "factor", "term"))};
  }
  if (kind == "product") {
    Product p;
    const Json& parts = require_key(j, "parts", "term");
    if (!parts.is_array()) throw DataError("term: parts must be an array");
    for (const auto& x : parts) p.parts.push_back(term_from_json(x));
    return p;
  }
  throw DataError("term: unknown kind '" + kind + "'");
}

Json to_json(const EncodingSpec& spec) {
  Json out = Json::array();
  for (const auto& t : spec.terms) out.push_back(to_json(t));
  return out;
}

EncodingSpec spec_from_json(const Json& j) {
  if (!j.is_array()) throw DataError("terms: expected an array");
  EncodingSpec spec;
  for (const auto& t : j) spec.terms.push_back(term_from_json(t));
  validate_spec(spec);
  return spec;
}

Json to_json(const TrainingMeans& m) {
  Json j;
  j["mean_identity"] = m.mean_identity;
  j["mean_log2"] = m.mean_log2;
  j["raw_proportions"] = m.raw_proportions;
  j["volume_bin_proportions"] = m.volume_bin_proportions;
  j["fh_extended_proportions"] = m.fh_extended_proportions;
  j["observed"] = m.observed;
  return j;
}

TrainingMeans training_means_from_json(const Json& j) {
  TrainingMeans m;
  m.mean_identity = get_as<decltype(m.mean_identity)>(j, "mean_identity", "training_means");
  m.mean_log2 = get_as<decltype(m.mean_log2)>(j, "mean_log2", "training_means");
  m.raw_proportions = get_as<decltype(m.raw_proportions)>(j, "raw_proportions", "training_means");
  m.volume_bin_proportions =
      get_as<decltype(m.volume_bin_proportions)>(j, "volume_bin_proportions", "training_means");
  m.fh_extended_proportions =
      get_as<decltype(m.fh_extended_proportions)>(j, "fh_extended_proportions", "training_means");
  m.observed = get_as<decltype(m.observed)>(j, "observed", "training_means");
  return m;
}

Json to_json(const ComponentModel& c) {
  Json j;
  j["cohort"] = c.cohort;
  j["terms"] = to_json(c.spec);
  j["term_names"] = c.spec.names();
  j["coefficients"] = vector_json(c.coefficients);
  j["std_errors"] = vector_json(c.std_errors);
  j["n"] = c.n;
  j["cohorts"] = c.cohorts;
  j["dropped"] = Json::array();
  for (const auto& d : c.dropped) {
    j["dropped"].push_back({{"name", d.name}, {"reason", to_string(d.reason)}});
  }
  j["log_likelihood"] = c.log_likelihood;
  j["iterations"] = c.iterations;
  j["converged"] = c.converged;
  return j;
}

ComponentModel component_from_json(const Json& j) {
  ComponentModel c;
  c.cohort = get_as<std::string>(j, "cohort", "component");
  c.spec = spec_from_json(require_key(j, "terms", "component"));
  c.coefficients = vector_from(require_key(j, "coefficients", "component"), "coefficients");
  c.std_errors = vector_from(require_key(j, "std_errors", "component"), "std_errors");
  if (c.coefficients.size() != static_cast<Eigen::Index>(c.spec.terms.size())) {
    throw DataError("component: " + std::to_string(c.coefficients.size()) + " coefficients for " +
                    std::to_string(c.spec.terms.size()) + " terms");
  }
  if (c.std_errors.size() != 0 && c.std_errors.size() != c.coefficients.size()) {
    throw DataError("component: std_errors length does not match coefficients");
  }
  c.n = get_as<std::size_t>(j, "n", "component");
  c.cohorts = get_as<std::vector<std::string>>(j, "cohorts", "component");
  const Json& dropped = require_key(j, "dropped", "component");
  if (!dropped.is_array()) throw DataError("component: dropped must be an array");
  for (const auto& d : dropped) {
    const auto reason = get_as<std::string>(d, "reason", "dropped term");
    if (reason != "constant" && reason != "duplicate") throw DataError("dropped term: unknown reason '" + reason + "'");
    c.dropped.push_back({get_as<std::string>(d, "name", "dropped term"),
                         reason == "constant" ? DropReason::constant : DropReason::duplicate});
  }
  c.log_likelihood = get_as<double>(j, "log_likelihood", "component");
  c.iterations = get_as<int>(j, "iterations", "component");
  c.converged = get_as<bool>(j, "converged", "component");
  return c;
}

Json to_json(const RiskModel& m) {
  Json j;
  j["strategy"] = name_of(m.strategy);
  if (m.pattern) {
    j["pattern"] = m.pattern->bits();
    j["pattern_factors"] = m.pattern->to_string();
  } else {
    j["pattern"] = nullptr;
  }
  j["components"] = Json::array();
  for (const auto& c : m.components) j["components"].push_back(to_json(c));
  j["n"] = m.n;
  j["cohorts"] = m.cohorts;
  j["warnings"] = m.warnings;
  j["selection_trace"] = m.selection_trace;
  j["training_means"] = m.means ? to_json(*m.means) : Json(nullptr);
  j["imputation_fits"] = Json::array();
  for (const auto& d : m.imputation_fits) {
    j["imputation_fits"].push_back(
        {{"log_likelihood", d.log_likelihood}, {"iterations", d.iterations}, {"converged", d.converged}});
  }
  return j;
}

RiskModel risk_model_from_json(const Json& j) {
  RiskModel m;
  m.strategy = parse_strategy(get_as<std::string>(j, "strategy", "model"));
  const Json& pattern = require_key(j, "pattern", "model");
  if (!pattern.is_null()) {
    const auto bits = get_as<int>(j, "pattern", "model");
    if (bits < 0 || bits > 1023) throw DataError("model: pattern out of range");
    m.pattern = PatternMask(static_cast<std::uint16_t>(bits));
  }
  if (m.pattern.has_value() != is_pattern_tailored(m.strategy)) {
    throw DataError("model: pattern presence does not match strategy " + std::string(name_of(m.strategy)));
  }
  const Json& comps = require_key(j, "components", "model");
  if (!comps.is_array() || comps.empty()) throw DataError("model: components must be a non-empty array");
  for (const auto& c : comps) m.components.push_back(component_from_json(c));
  m.n = get_as<std::size_t>(j, "n", "model");
  m.cohorts = get_as<std::vector<std::string>>(j, "cohorts", "model");
  m.warnings = get_as<std::vector<std::string>>(j, "warnings", "model");
  m.selection_trace = get_as<std::vector<std::string>>(j, "selection_trace", "model");
  const Json& means = require_key(j, "training_means", "model");
  if (!means.is_null()) m.means = training_means_from_json(means);
  if (m.strategy == Strategy::imputation && !m.means) throw DataError("model: imputation model lacks training_means");
  const Json& fits = require_key(j, "imputation_fits", "model");
  if (!fits.is_array()) throw DataError("model: imputation_fits must be an array");
  for (const auto& d : fits) {
    m.imputation_fits.push_back({get_as<double>(d, "log_likelihood", "imputation fit"),
                                 get_as<int>(d, "iterations", "imputation fit"),
                                 get_as<bool>(d, "converged", "imputation fit")});
  }
  return m;
}

std::string save_model(const RiskModel& m, const Provenance& p) {
  Json j;
  j["format"] = kModelFormat;
  j["provenance"] = to_json(p);
  j["model"] = to_json(m);
  return j.dump() + "\n";
}

RiskModel load_model(std::string_view text) {
  const Json j = parse_json(text, "model file");
  const auto format = get_as<std::string>(j, "format", "model file");
  if (format != kModelFormat) {
    throw DataError("model file format '" + format + "' is not supported (expected '" + std::string(kModelFormat) + "')");
  }
  return risk_model_from_json(require_key(j, "model", "model file"));
}

}  // namespace hetrisk
