#pragma once

// The four reranking policies and hybrid weight tuning. Every ranking is a
// stable descending sort, so ties keep the original beam order.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "mtrerank/bleu.hpp"
#include "mtrerank/common.hpp"
#include "mtrerank/decode/candidate.hpp"
#include "mtrerank/optim/losses.hpp"
#include "mtrerank/rerank/dataset.hpp"

namespace mtrerank::rerank {

using decode::Candidate;
using Permutation = std::vector<std::size_t>;

inline Permutation rank_descending(std::span<const double> scores) {
  Permutation order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline std::vector<double> token_avg_scores(std::span<const Candidate> cands) {
  std::vector<double> s;
  for (const auto& c : cands) s.push_back(c.token_avg);
  return s;
}

inline Permutation rank_baseline(std::span<const Candidate> cands) {
  if (cands.empty()) throw InvalidInput("rank_baseline: no candidates");
  return rank_descending(token_avg_scores(cands));
}

/// `pr[i]` is P_r of candidate i.
inline Permutation rank_bleur(std::span<const double> pr) { return rank_descending(pr); }

inline double hybrid_score(const Candidate& c, double pr, double alpha) {
  const double q = std::clamp(pr, optim::kProbClamp, 1.0 - optim::kProbClamp);
  return (1.0 - alpha) * c.token_avg + alpha * std::log(q);
}

inline std::vector<double> hybrid_scores(std::span<const Candidate> cands, std::span<const double> pr, double alpha) {
  if (cands.size() != pr.size()) throw InvalidInput("hybrid: score count mismatch");
  std::vector<double> s;
  for (std::size_t i = 0; i < cands.size(); ++i) s.push_back(hybrid_score(cands[i], pr[i], alpha));
  return s;
}

inline Permutation rank_hybrid(std::span<const Candidate> cands, std::span<const double> pr, double alpha) {
  return rank_descending(hybrid_scores(cands, pr, alpha));
}

inline std::vector<double> oracle_scores(std::span<const Candidate> cands, const TokenIds& reference) {
  std::vector<double> s;
  for (const auto& c : cands) s.push_back(target_score(c.tokens, reference));
  return s;
}

inline Permutation rank_oracle(std::span<const Candidate> cands, const TokenIds& reference) {
  return rank_descending(oracle_scores(cands, reference));
}

/// One evaluation sentence: the beam candidates with everything the
/// policies need precomputed.
struct EvalItem {
  TokenIds source;
  TokenIds reference;
  std::vector<Candidate> candidates;
  std::vector<double> pr;    // reranker P_r per candidate; empty without a reranker
  std::vector<double> bleu;  // true sentence BLEU per candidate
};

inline EvalItem make_eval_item(TokenIds source, TokenIds reference, std::vector<Candidate> candidates,
                               std::vector<double> pr = {}) {
  if (candidates.empty()) throw InvalidInput("eval item: no candidates");
  EvalItem it{std::move(source), std::move(reference), std::move(candidates), std::move(pr), {}};
  it.bleu = oracle_scores(it.candidates, it.reference);
  return it;
}

/// Index of the chosen candidate per item.
template <class Pick>
std::vector<std::size_t> choose(std::span<const EvalItem> items, Pick&& pick) {
  std::vector<std::size_t> out;
  for (const auto& it : items) out.push_back(pick(it).front());
  return out;
}

struct SelectionScore {
  double corpus_bleu = 0.0;
  double mean_sentence_bleu = 0.0;
};

inline SelectionScore score_selection(std::span<const EvalItem> items, std::span<const std::size_t> picks) {
  if (items.empty()) throw InvalidInput("score_selection: no items");
  std::vector<bleu::Pair> pairs;
  double sum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    pairs.emplace_back(bleu::strip_eos(it.candidates[picks[i]].tokens, textdata::kEos),
                       bleu::strip_eos(it.reference, textdata::kEos));
    sum += it.bleu[picks[i]];
  }
  return {bleu::corpus_bleu(pairs), sum / static_cast<double>(items.size())};
}

inline std::vector<std::size_t> baseline_picks(std::span<const EvalItem> items) {
  return choose(items, [](const EvalItem& it) { return rank_baseline(it.candidates); });
}
inline std::vector<std::size_t> bleur_picks(std::span<const EvalItem> items) {
  return choose(items, [](const EvalItem& it) { return rank_bleur(it.pr); });
}
inline std::vector<std::size_t> hybrid_picks(std::span<const EvalItem> items, double alpha) {
  return choose(items, [alpha](const EvalItem& it) { return rank_hybrid(it.candidates, it.pr, alpha); });
}
inline std::vector<std::size_t> oracle_picks(std::span<const EvalItem> items) {
  return choose(items, [](const EvalItem& it) { return rank_descending(it.bleu); });
}

inline std::vector<double> default_alpha_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct AlphaRow {
  double alpha = 0.0;
  double corpus_bleu = 0.0;
  bool eligible = true;
};

struct AlphaTuning {
  double alpha = 0.0;
  double best_bleu = 0.0;
  std::vector<AlphaRow> table;
};

/// Dev corpus BLEU of the hybrid for each grid value; the best grid value
/// wins, the smallest on ties. The endpoints 0 and 1 are added to the table
/// as ineligible diagnostics when `diagnostics` is set.
inline AlphaTuning tune_alpha(std::span<const EvalItem> dev, const std::vector<double>& grid, bool diagnostics = true) {
  if (grid.empty()) throw InvalidInput("tune_alpha: empty grid");
  AlphaTuning out;
  bool first = true;
  for (double a : grid) {
    const double b = score_selection(dev, hybrid_picks(dev, a)).corpus_bleu;
    out.table.push_back({a, b, true});
    if (first || b > out.best_bleu || (b == out.best_bleu && a < out.alpha)) {
      out.alpha = a;
      out.best_bleu = b;
      first = false;
    }
  }
  if (diagnostics) {
    for (double a : {0.0, 1.0}) {
      if (std::find(grid.begin(), grid.end(), a) != grid.end()) continue;
      out.table.push_back({a, score_selection(dev, hybrid_picks(dev, a)).corpus_bleu, false});
    }
    std::stable_sort(out.table.begin(), out.table.end(),
                     [](const AlphaRow& x, const AlphaRow& y) { return x.alpha < y.alpha; });
  }
  return out;
}

}  // namespace mtrerank::rerank
