#include "hetrisk/stepwise.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

/// Factors in model order: age, psa, then the optional factors in bit order.
constexpr std::array<Factor, kFactorCount> kModelOrder = {
    Factor::age,          Factor::psa,          Factor::dre,
    Factor::volume,       Factor::prior_biopsy, Factor::five_ari,
    Factor::prior_psa_screen, Factor::african_ancestry, Factor::hispanic,
    Factor::fh_pca_first, Factor::fh_pca_second, Factor::fh_breast_first,
};

int position(Factor f) {
  return static_cast<int>(std::find(kModelOrder.begin(), kModelOrder.end(), f) - kModelOrder.begin());
}

Term main_term(Factor f) { return main_effect_terms(f).front(); }

struct State {
  std::array<bool, kFactorCount> main{};  // by model position
  std::set<std::pair<int, int>> interactions;
  bool operator==(const State&) const = default;
};

struct Evaluation {
  State state;
  EncodingSpec spec;
  std::vector<DroppedTerm> dropped;
  LogisticFit fit;
  double score = 0.0;
};

class Search {
 public:
  Search(std::span<const PatientRecord* const> records, const StepwiseConfig& cfg)
      : records_(records), cfg_(cfg), n_(static_cast<Eigen::Index>(records.size())) {
    y_.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i) y_(i) = records[static_cast<std::size_t>(i)]->outcome;
  }

  const Eigen::VectorXd& main_column(int pos) {
    auto it = columns_.find(pos);
    if (it != columns_.end()) return it->second;
    const Term t = main_term(kModelOrder[static_cast<std::size_t>(pos)]);
    Eigen::VectorXd c(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const auto& r = *records_[static_cast<std::size_t>(i)];
      const auto v = term_value(t, r);
      if (!v) {
        throw DataError("record " + std::to_string(i) + " (cohort " + r.cohort +
                        "): missing required factor " + std::string(name_of(kModelOrder[static_cast<std::size_t>(pos)])) +
                        " for term " + t.name());
      }
      c(i) = *v;
    }
    return columns_.emplace(pos, std::move(c)).first->second;
  }

  EncodingSpec spec_of(const State& s) const {
    EncodingSpec spec;
    spec.terms.push_back(Intercept{});
    for (std::size_t p = 0; p < kFactorCount; ++p) {
      if (s.main[p]) spec.terms.push_back(main_term(kModelOrder[p]));
    }
    for (const auto& [a, b] : s.interactions) {
      spec.terms.push_back(Product{{main_term(kModelOrder[static_cast<std::size_t>(a)]),
                                    main_term(kModelOrder[static_cast<std::size_t>(b)])}});
    }
    return spec;
  }

  Evaluation evaluate(const State& s, const Evaluation* parent) {
    Evaluation e;
    e.state = s;
    const EncodingSpec full = spec_of(s);
    std::vector<Eigen::VectorXd> cols;
    cols.emplace_back(Eigen::VectorXd::Ones(n_));
    std::vector<Eigen::VectorXd> candidates;
    for (std::size_t p = 0; p < kFactorCount; ++p) {
      if (s.main[p]) candidates.push_back(main_column(static_cast<int>(p)));
    }
    for (const auto& [a, b] : s.interactions) {
      candidates.push_back(main_column(a).cwiseProduct(main_column(b)));
    }
    e.spec.terms.push_back(full.terms.front());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const Term& term = full.terms[j + 1];
      const auto& c = candidates[j];
      if ((c.array() == c(0)).all()) {
        e.dropped.push_back({term.name(), DropReason::constant});
        continue;
      }
      bool duplicate = false;
      for (std::size_t k = 1; k < cols.size() && !duplicate; ++k) duplicate = cols[k] == c;
      if (duplicate) {
        e.dropped.push_back({term.name(), DropReason::duplicate});
        continue;
      }
      cols.push_back(c);
      e.spec.terms.push_back(term);
    }
    Eigen::MatrixXd x(n_, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = cols[j];

    Eigen::VectorXd start;
    if (parent != nullptr) {
      std::map<std::string, double> prev;
      for (std::size_t j = 0; j < parent->spec.terms.size(); ++j) {
        prev[parent->fit.terms[j]] = parent->fit.coefficients(static_cast<Eigen::Index>(j));
      }
      start = Eigen::VectorXd::Zero(x.cols());
      const auto names = e.spec.names();
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (auto it = prev.find(names[j]); it != prev.end()) start(static_cast<Eigen::Index>(j)) = it->second;
      }
    }
    e.fit = fit_logistic(x, y_, cfg_.fit, parent != nullptr ? &start : nullptr);
    if (!e.fit.converged) throw NumericError("fit did not converge");
    e.fit.terms = e.spec.names();
    e.fit.dropped = e.dropped;
    e.score = bic_score(e.fit.log_likelihood, static_cast<std::size_t>(x.cols() - 1),
                        static_cast<std::size_t>(n_), cfg_.convention);
    return e;
  }

 private:
  std::span<const PatientRecord* const> records_;
  const StepwiseConfig& cfg_;
  Eigen::Index n_;
  Eigen::VectorXd y_;
  std::map<int, Eigen::VectorXd> columns_;
};

struct Move {
  State state;
  std::string label;
};

std::string main_name(int pos) { return std::string(name_of(kModelOrder[static_cast<std::size_t>(pos)])); }

std::vector<Move> moves_from(const State& s, const std::array<bool, kFactorCount>& candidate,
                             bool interactions) {
  std::vector<Move> out;
  const auto used_by_interaction = [&](int p) {
    for (const auto& [a, b] : s.interactions) {
      if (a == p || b == p) return true;
    }
    return false;
  };
  for (int p = 2; p < static_cast<int>(kFactorCount); ++p) {
    if (s.main[static_cast<std::size_t>(p)] && !used_by_interaction(p)) {
      State t = s;
      t.main[static_cast<std::size_t>(p)] = false;
      out.push_back({t, "drop " + main_name(p)});
    }
  }
  for (int p = 2; p < static_cast<int>(kFactorCount); ++p) {
    if (candidate[static_cast<std::size_t>(p)] && !s.main[static_cast<std::size_t>(p)]) {
      State t = s;
      t.main[static_cast<std::size_t>(p)] = true;
      out.push_back({t, "add " + main_name(p)});
    }
  }
  if (interactions) {
    for (int a = 0; a < static_cast<int>(kFactorCount); ++a) {
      for (int b = a + 1; b < static_cast<int>(kFactorCount); ++b) {
        if (!s.main[static_cast<std::size_t>(a)] || !s.main[static_cast<std::size_t>(b)]) continue;
        if (s.interactions.contains({a, b})) continue;
        State t = s;
        t.interactions.insert({a, b});
        out.push_back({t, "add " + main_name(a) + ":" + main_name(b)});
      }
    }
    for (const auto& pr : s.interactions) {
      State t = s;
      t.interactions.erase(pr);
      out.push_back({t, "drop " + main_name(pr.first) + ":" + main_name(pr.second)});
    }
  }
  return out;
}

}  // namespace

StepwiseResult stepwise_bic(std::span<const PatientRecord* const> records,
                            std::span<const Factor> candidates, const StepwiseConfig& cfg) {
  if (records.empty()) throw DataError("stepwise selection needs at least one record");
  std::array<bool, kFactorCount> candidate{};
  candidate[0] = candidate[1] = true;
  for (Factor f : candidates) candidate[static_cast<std::size_t>(position(f))] = true;

  Search search(records, cfg);
  State start;
  start.main = candidate;
  Evaluation current = search.evaluate(start, nullptr);

  StepwiseResult result;
  result.start_score = current.score;
  std::set<std::string> warned;
  for (int step = 0; step < cfg.max_steps; ++step) {
    std::optional<Evaluation> best;
    std::string best_label;
    for (const auto& move : moves_from(current.state, candidate, cfg.interactions)) {
      try {
        Evaluation e = search.evaluate(move.state, &current);
        if (!best || e.score > best->score) {
          best = std::move(e);
          best_label = move.label;
        }
      } catch (const Error& err) {
        if (warned.insert(move.label).second) {
          result.warnings.push_back("stepwise move '" + move.label + "' skipped: " + err.what());
        }
      }
    }
    if (!best || !(best->score > current.score + 1e-9 * (1.0 + std::abs(current.score)))) break;
    current = std::move(*best);
    result.steps.push_back(best_label);
  }
  result.spec = current.spec;
  result.fit = std::move(current.fit);
  result.score = current.score;
  return result;
}

PatternMask used_pattern(const EncodingSpec& spec) {
  PatternMask m;
  for (const auto& t : spec.terms) {
    for (Factor f : t.factors()) m = m.with(f);
  }
  return m;
}

}  // namespace hetrisk
