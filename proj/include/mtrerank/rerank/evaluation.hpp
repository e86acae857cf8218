#pragma once

#include <span>
#include <vector>

#include "mtrerank/decode/search.hpp"
#include "mtrerank/nnmodel/transformer.hpp"
#include "mtrerank/rerank/policies.hpp"
#include "mtrerank/textdata/corpus.hpp"

namespace mtrerank::rerank {

/// Top candidates_k beam outputs for every source of `corpus`.
template <decode::StepModel M>
std::vector<std::vector<Candidate>> beam_candidates(const M& model, const textdata::Corpus& corpus,
                                                    const decode::DecodeConfig& cfg) {
  std::vector<std::vector<Candidate>> out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus) out.push_back(decode::beam(model, pair.source, cfg));
  return out;
}

inline std::vector<EvalItem> make_eval_items(const textdata::Corpus& corpus,
                                             const std::vector<std::vector<Candidate>>& candidates) {
  if (corpus.size() != candidates.size()) throw InvalidInput("eval items: corpus/candidate count mismatch");
  std::vector<EvalItem> items;
  items.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    items.push_back(make_eval_item(corpus[i].source, corpus[i].reference, candidates[i]));
  }
  return items;
}

/// Fills `pr` of every item with the reranker's P_r.
template <class T>
void attach_reranker_scores(std::vector<EvalItem>& items, const nnmodel::ModelParams<T>& reranker) {
  for (auto& it : items) {
    std::vector<TokenIds> cands;
    for (const auto& c : it.candidates) cands.push_back(c.tokens);
    it.pr = nnmodel::score_candidates(reranker, it.source, cands);
  }
}

/// Corpus BLEU of the token-averaged choice over beam candidates.
inline double baseline_corpus_bleu(std::span<const EvalItem> items) {
  return score_selection(items, baseline_picks(items)).corpus_bleu;
}

inline double bleur_corpus_bleu(std::span<const EvalItem> items) {
  return score_selection(items, bleur_picks(items)).corpus_bleu;
}

}  // namespace mtrerank::rerank
