#include "hetrisk/bank.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include "hetrisk/digest.hpp"
#include "hetrisk/error.hpp"
#include "hetrisk/harness.hpp"

namespace hetrisk {

namespace {

constexpr std::string_view kHeaderPrefix = "hetrisk-bank ";

Json fit_config_json(const FitConfig& f) {
  return {{"max_iter", f.max_iter},
          {"tol", f.tol},
          {"deviance_tol", f.deviance_tol},
          {"ridge", f.ridge},
          {"max_halvings", f.max_halvings}};
}

FitConfig fit_config_from(const Json& j) {
  FitConfig f;
  f.max_iter = require_key(j, "max_iter", "fit_config").get<int>();
  f.tol = require_key(j, "tol", "fit_config").get<double>();
  f.deviance_tol = require_key(j, "deviance_tol", "fit_config").get<double>();
  f.ridge = require_key(j, "ridge", "fit_config").get<double>();
  f.max_halvings = require_key(j, "max_halvings", "fit_config").get<int>();
  return f;
}

bool is_hex64(const std::string& s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

std::string pattern_text(PatternMask p) {
  return std::to_string(p.bits()) + " {" + p.to_string() + "}";
}

}  // namespace

ModelBank build_bank(const Dataset& training, const BankConfig& cfg, const Provenance& provenance) {
  if (training.empty()) throw DataError("training data is empty");
  ModelBank bank;
  bank.training_fingerprint = fingerprint(training);
  bank.training_n = training.size();
  bank.cohorts = training.cohorts();
  bank.means = training_means(training);
  bank.missing_rates = missing_rates(training);
  bank.fit = cfg.fit;
  bank.provenance = provenance;
  bank.entries.resize(kPatternCount);

  StrategyConfig scfg;
  scfg.fit = cfg.fit;
  auto fit_one = [&](std::size_t bits) {
    BankEntry& e = bank.entries[bits];
    e.pattern = PatternMask(static_cast<std::uint16_t>(bits));
    try {
      e.model = fit_available_cases(training, e.pattern, scfg);
    } catch (const Error& err) {
      e.unfittable_reason = err.what();
    }
  };

  unsigned threads = cfg.threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg.threads;
  if (threads <= 1) {
    for (std::size_t b = 0; b < kPatternCount; ++b) fit_one(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < kPatternCount; b = next++) {
          try {
            fit_one(b);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  if (!bank.entries[0].model) {
    throw NumericError("the psa and age model cannot be fitted: " + bank.entries[0].unfittable_reason);
  }
  return bank;
}

PatternMask resolve_pattern(const ModelBank& bank, PatternMask observed, std::vector<std::string>* warnings) {
  PatternMask p = observed;
  while (!bank.entries.at(p.bits()).model) {
    const PatternMask next = drop_most_missing(p, bank.missing_rates);
    if (warnings) {
      warnings->push_back("pattern " + pattern_text(p) + " is unfittable (" +
                          bank.entries[p.bits()].unfittable_reason + "); trying " + pattern_text(next));
    }
    p = next;
  }
  return p;
}

BankPrediction bank_predict(const ModelBank& bank, const PatientRecord& r) {
  validate_record(r);
  BankPrediction out;
  out.observed = observed_pattern(r);
  out.used = resolve_pattern(bank, out.observed, &out.warnings);
  out.fallback = out.used != out.observed;
  const RiskModel& m = *bank.entries[out.used.bits()].model;
  out.risk = predict_risk(m, r);
  out.n = m.n;
  out.cohorts = m.cohorts;
  return out;
}

std::string save_bank(const ModelBank& bank) {
  if (bank.entries.size() != kPatternCount) throw DataError("bank must hold 1024 entries");
  Json j;
  j["format_version"] = kBankVersion;
  j["factor_order"] = Json::array();
  for (Factor f : kAllFactors) j["factor_order"].push_back(name_of(f));
  j["training"] = {{"fingerprint", bank.training_fingerprint}, {"n", bank.training_n}, {"cohorts", bank.cohorts}};
  j["training_means"] = to_json(bank.means);
  j["missing_rates"] = bank.missing_rates;
  j["fit_config"] = fit_config_json(bank.fit);
  j["provenance"] = to_json(bank.provenance);
  j["entries"] = Json::array();
  for (std::size_t b = 0; b < kPatternCount; ++b) {
    const BankEntry& e = bank.entries[b];
    if (e.pattern.bits() != b) throw DataError("bank entry " + std::to_string(b) + " is out of place");
    Json entry;
    entry["pattern"] = b;
    if (e.model) {
      entry["status"] = "ok";
      entry["model"] = to_json(*e.model);
    } else {
      entry["status"] = "unfittable";
      entry["reason"] = e.unfittable_reason;
    }
    j["entries"].push_back(std::move(entry));
  }
  const std::string payload = j.dump() + "\n";
  return std::string(kHeaderPrefix) + "v" + std::to_string(kBankVersion) + " sha256:" + sha256_hex(payload) + "\n" +
         payload;
}

ModelBank load_bank(std::string_view bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos || bytes.substr(0, kHeaderPrefix.size()) != kHeaderPrefix) {
    throw DataError("not a model bank file (missing 'hetrisk-bank' header)");
  }
  const std::string_view header = bytes.substr(kHeaderPrefix.size(), eol - kHeaderPrefix.size());
  const auto space = header.find(' ');
  const std::string_view version = header.substr(0, space);
  const std::string expected = "v" + std::to_string(kBankVersion);
  if (version != expected) {
    throw DataError("bank format version '" + std::string(version) + "' is not supported (expected '" + expected +
                    "')");
  }
  if (space == std::string_view::npos || header.substr(space + 1, 7) != "sha256:") {
    throw DataError("bank header lacks a sha256 checksum");
  }
  const std::string_view checksum = header.substr(space + 8);
  const std::string_view payload = bytes.substr(eol + 1);
  if (sha256_hex(payload) != checksum) throw DataError("bank checksum mismatch: file is corrupt or truncated");

  const Json j = parse_json(payload, "bank");
  if (require_key(j, "format_version", "bank") != kBankVersion) {
    throw DataError("bank payload version does not match its header");
  }
  ModelBank bank;
  try {
    const auto order = require_key(j, "factor_order", "bank").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < kFactorCount; ++i) {
      if (order.size() != kFactorCount || order[i] != name_of(kAllFactors[i])) {
        throw DataError("bank factor order does not match this build");
      }
    }
    const Json& training = require_key(j, "training", "bank");
    bank.training_fingerprint = require_key(training, "fingerprint", "bank training").get<std::string>();
    bank.training_n = require_key(training, "n", "bank training").get<std::size_t>();
    bank.cohorts = require_key(training, "cohorts", "bank training").get<std::vector<std::string>>();
    bank.means = training_means_from_json(require_key(j, "training_means", "bank"));
    bank.missing_rates = require_key(j, "missing_rates", "bank").get<std::array<double, kFactorCount>>();
    bank.fit = fit_config_from(require_key(j, "fit_config", "bank"));
    bank.provenance = provenance_from_json(require_key(j, "provenance", "bank"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bank: malformed field: ") + e.what());
  }
  if (!is_hex64(bank.training_fingerprint)) throw DataError("bank training fingerprint is not a sha256 digest");

  const Json& entries = require_key(j, "entries", "bank");
  if (!entries.is_array() || entries.size() != kPatternCount) {
    throw DataError("bank must hold 1024 entries, found " + std::to_string(entries.is_array() ? entries.size() : 0));
  }
  bank.entries.resize(kPatternCount);
  for (std::size_t b = 0; b < kPatternCount; ++b) {
    const Json& e = entries[b];
    const Json& pattern = require_key(e, "pattern", "bank entry");
    if (!pattern.is_number_unsigned() || pattern.get<std::size_t>() != b) {
      throw DataError("bank entry " + std::to_string(b) + " has the wrong pattern key");
    }
    BankEntry& out = bank.entries[b];
    out.pattern = PatternMask(static_cast<std::uint16_t>(b));
    const Json& status = require_key(e, "status", "bank entry");
    if (status == "ok") {
      out.model = risk_model_from_json(require_key(e, "model", "bank entry"));
      if (out.model->strategy != Strategy::available_cases || out.model->pattern != out.pattern) {
        throw DataError("bank entry " + std::to_string(b) + " is not an available-cases model for its pattern");
      }
    } else if (status == "unfittable") {
      out.unfittable_reason = require_key(e, "reason", "bank entry").get<std::string>();
    } else {
      throw DataError("bank entry " + std::to_string(b) + " has an unknown status");
    }
  }
  if (!bank.entries[0].model) throw DataError("bank entry 0 must be fittable");
  return bank;
}

std::string bank_id(std::string_view saved_bytes) { return sha256_hex(saved_bytes); }

std::vector<WaldRow> entry_odds_ratios(const ModelBank& bank, PatternMask pattern) {
  const BankEntry& e = bank.entries.at(pattern.bits());
  if (!e.model) throw DataError("pattern " + pattern_text(pattern) + " is unfittable: " + e.unfittable_reason);
  const ComponentModel& c = e.model->components.front();
  const auto names = c.spec.names();
  std::vector<WaldRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    rows.push_back(wald_row(names[i], c.coefficients[k], c.std_errors[k]));
  }
  return rows;
}

std::string format_inspection(const ModelBank& bank, PatternMask pattern) {
  const BankEntry& e = bank.entries.at(pattern.bits());
  std::string out = "pattern " + pattern_text(pattern) + "\n";
  if (!e.model) return out + "status: unfittable (" + e.unfittable_reason + ")\n";
  const RiskModel& m = *e.model;
  out += "n: " + std::to_string(m.n) + "\ncohorts (" + std::to_string(m.cohorts.size()) + "):";
  for (const auto& c : m.cohorts) out += " " + c;
  out += "\n";
  const auto& dropped = m.components.front().dropped;
  for (const auto& d : dropped) out += "dropped: " + d.name + " (" + std::string(to_string(d.reason)) + ")\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %10s %10s %10s %10s %10s\n", "term", "estimate", "odds_ratio", "ci_low",
                "ci_high", "p_value");
  out += line;
  for (const auto& r : entry_odds_ratios(bank, pattern)) {
    if (r.term == "(Intercept)") {
      std::snprintf(line, sizeof line, "%-28s %10.4f %10s %10s %10s %10.3g\n", r.term.c_str(), r.estimate, "", "", "",
                    r.p_value);
    } else {
      std::snprintf(line, sizeof line, "%-28s %10.4f %10.3f %10.3f %10.3f %10.3g\n", r.term.c_str(), r.estimate,
                    r.odds_ratio, r.ci_low, r.ci_high, r.p_value);
    }
    out += line;
  }
  return out;
}

}  // namespace hetrisk
