#pragma once

// Evaluation of all four policies over a candidate set, with correlation
// analysis, as JSON and CSV.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtrerank/common.hpp"
#include "mtrerank/rerank/pearson.hpp"
#include "mtrerank/rerank/policies.hpp"

namespace mtrerank::rerank {

struct PolicyResult {
  std::string name;
  double corpus_bleu = 0.0;
  double mean_sentence_bleu = 0.0;
};

struct ScorerCorrelation {
  std::string name;
  std::optional<PearsonSummary> summary;  // nullopt when undefined
};

struct RerankReport {
  std::string split;
  int n = 0;
  double alpha = 0.0;
  std::vector<PolicyResult> policies;  // Baseline, BLEUR, Hybrid, Oracle
  std::vector<ScorerCorrelation> correlations;
  long sentences = 0;

  const PolicyResult& policy(const std::string& name) const {
    for (const auto& p : policies) {
      if (p.name == name) return p;
    }
    throw InvalidInput("report: no policy " + name);
  }
  const ScorerCorrelation& correlation(const std::string& name) const {
    for (const auto& c : correlations) {
      if (c.name == name) return c;
    }
    throw InvalidInput("report: no scorer " + name);
  }
};

inline std::optional<PearsonSummary> try_averaged_pearson(const std::vector<std::vector<double>>& scores,
                                                          const std::vector<std::vector<double>>& bleus) {
  try {
    return averaged_pearson(scores, bleus);
  } catch (const UndefinedCorrelation&) {
    return std::nullopt;
  }
}

/// Throws Error if the oracle's mean sentence BLEU falls below any other
/// policy's, which would indicate a bookkeeping bug.
inline void check_oracle_dominance(const RerankReport& r) {
  const double oracle = r.policy("Oracle").mean_sentence_bleu;
  for (const auto& p : r.policies) {
    if (p.mean_sentence_bleu > oracle) throw Error("oracle dominance violated by " + p.name);
  }
}

inline RerankReport evaluate_policies(std::span<const EvalItem> items, double alpha, const std::string& split, int n) {
  for (const auto& it : items) {
    if (it.pr.size() != it.candidates.size()) throw InvalidInput("evaluate: reranker scores missing");
  }
  RerankReport r;
  r.split = split;
  r.n = n;
  r.alpha = alpha;
  r.sentences = static_cast<long>(items.size());
  auto add = [&](const std::string& name, const std::vector<std::size_t>& picks) {
    const auto s = score_selection(items, picks);
    r.policies.push_back({name, s.corpus_bleu, s.mean_sentence_bleu});
  };
  add("Baseline", baseline_picks(items));
  add("BLEUR", bleur_picks(items));
  add("Hybrid", hybrid_picks(items, alpha));
  add("Oracle", oracle_picks(items));
  check_oracle_dominance(r);

  std::vector<std::vector<double>> base, bleur, hybrid, truth;
  for (const auto& it : items) {
    base.push_back(token_avg_scores(it.candidates));
    bleur.push_back(it.pr);
    hybrid.push_back(hybrid_scores(it.candidates, it.pr, alpha));
    truth.push_back(it.bleu);
  }
  r.correlations.push_back({"Baseline", try_averaged_pearson(base, truth)});
  r.correlations.push_back({"BLEUR", try_averaged_pearson(bleur, truth)});
  r.correlations.push_back({"Hybrid", try_averaged_pearson(hybrid, truth)});
  return r;
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline nlohmann::json to_json(const RerankReport& r) {
  nlohmann::json pol = nlohmann::json::array(), cor = nlohmann::json::array();
  for (const auto& p : r.policies) {
    pol.push_back({{"system", p.name}, {"corpus_bleu", p.corpus_bleu}, {"mean_sentence_bleu", p.mean_sentence_bleu}});
  }
  for (const auto& c : r.correlations) {
    nlohmann::json j{{"scorer", c.name}};
    if (c.summary) {
      j["averaged_pearson"] = c.summary->mean;
      j["included"] = c.summary->included;
      j["excluded"] = c.summary->excluded;
    } else {
      j["averaged_pearson"] = nullptr;
    }
    cor.push_back(std::move(j));
  }
  return {{"split", r.split}, {"n", r.n},          {"alpha", r.alpha},
          {"sentences", r.sentences}, {"systems", pol}, {"correlations", cor}};
}

/// Table rows: system, corpus BLEU, mean sentence BLEU (BLEU as a fraction).
inline void write_table_csv(std::ostream& out, const RerankReport& r) {
  out << "system,corpus_bleu,mean_sentence_bleu\n";
  for (const auto& p : r.policies) {
    out << p.name << ',' << format_fixed(p.corpus_bleu) << ',' << format_fixed(p.mean_sentence_bleu) << '\n';
  }
}

inline void write_correlation_csv(std::ostream& out, const RerankReport& r) {
  out << "scorer,averaged_pearson,included,excluded\n";
  for (const auto& c : r.correlations) {
    out << c.name << ',';
    if (c.summary) out << format_fixed(c.summary->mean) << ',' << c.summary->included << ',' << c.summary->excluded;
    else out << "nan,0," << r.sentences;
    out << '\n';
  }
}

inline void write_alpha_csv(std::ostream& out, const AlphaTuning& t) {
  out << "alpha,dev_corpus_bleu,eligible\n";
  for (const auto& row : t.table) {
    out << format_fixed(row.alpha, 2) << ',' << format_fixed(row.corpus_bleu) << ',' << (row.eligible ? 1 : 0) << '\n';
  }
}

}  // namespace mtrerank::rerank
