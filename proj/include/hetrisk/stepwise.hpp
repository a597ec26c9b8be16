#pragma once

#include <span>
#include <string>
#include <vector>

#include "hetrisk/data.hpp"
#include "hetrisk/encoding.hpp"
#include "hetrisk/glm.hpp"

namespace hetrisk {

struct StepwiseConfig {
  FitConfig fit;
  BicConvention convention = BicConvention::log_likelihood_penalty;
  bool interactions = true;
  int max_steps = 500;
};

struct StepwiseResult {
  EncodingSpec spec;   // retained terms of the selected model
  LogisticFit fit;
  double score = 0.0;
  double start_score = 0.0;
  /// Accepted moves in order, e.g. "drop hispanic", "add age:log2(psa)".
  std::vector<std::string> steps;
  std::vector<std::string> warnings;
};

/// Greedy best-first BIC search. Starts from all main effects of psa, age and
/// `candidates`; each step evaluates every move (drop a main effect that no
/// interaction uses, re-add a dropped main effect, add a two-way interaction
/// of included main effects, drop an interaction) and takes the best one if it
/// strictly improves bic_score. psa and age are never dropped. A move whose fit
/// fails is skipped with a warning; a failing start model throws.
StepwiseResult stepwise_bic(std::span<const PatientRecord* const> records,
                            std::span<const Factor> candidates, const StepwiseConfig& cfg = {});

/// Optional factors read by any term of the spec.
PatternMask used_pattern(const EncodingSpec& spec);

}  // namespace hetrisk
