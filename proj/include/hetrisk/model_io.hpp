#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "hetrisk/encoding.hpp"
#include "hetrisk/impute.hpp"
#include "hetrisk/strategies.hpp"

namespace hetrisk {

/// Sorted-key JSON; dump() of this type is the canonical serialization.
using Json = nlohmann::json;

/// Producing command line and seed, embedded in every artifact file.
struct Provenance {
  std::string command;
  std::optional<std::uint64_t> seed;
  bool operator==(const Provenance&) const = default;
};

Json to_json(const Provenance& p);
Provenance provenance_from_json(const Json& j);

Json to_json(const Term& t);
Term term_from_json(const Json& j);
Json to_json(const EncodingSpec& spec);
EncodingSpec spec_from_json(const Json& j);

Json to_json(const TrainingMeans& m);
TrainingMeans training_means_from_json(const Json& j);

Json to_json(const ComponentModel& c);
ComponentModel component_from_json(const Json& j);
Json to_json(const RiskModel& m);
RiskModel risk_model_from_json(const Json& j);

inline constexpr std::string_view kModelFormat = "hetrisk-model v1";

/// Model file: {"format", "provenance", "model"} as canonical JSON plus a newline.
std::string save_model(const RiskModel& m, const Provenance& p);
RiskModel load_model(std::string_view text);

/// Reads the whole file; throws DataError naming the path on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

/// Helpers for strict JSON readers; errors are DataError naming `where`.
const Json& require_key(const Json& j, std::string_view key, std::string_view where);
Json parse_json(std::string_view text, std::string_view where);

}  // namespace hetrisk
