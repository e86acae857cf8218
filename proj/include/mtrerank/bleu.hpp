#pragma once

// Sentence- and corpus-level BLEU over token-id sequences, n = 1..4.
//
// Sentence BLEU smooths any order with zero clipped matches as
// (matched + 1) / (total + 1); orders with matches are left alone. Corpus
// BLEU aggregates counts first and only smooths an order whose corpus-level
// match count is zero.

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "mtrerank/common.hpp"

namespace mtrerank::bleu {

inline constexpr int kMaxOrder = 4;

struct BleuBreakdown {
  std::array<long, kMaxOrder> matched{};
  std::array<long, kMaxOrder> total{};
  long hyp_len = 0;
  long ref_len = 0;
  double brevity_penalty = 0.0;
  double score = 0.0;
};

/// Removes a single trailing EOS, if present.
inline std::span<const TokenId> strip_eos(std::span<const TokenId> seq, TokenId eos) {
  if (!seq.empty() && seq.back() == eos) return seq.first(seq.size() - 1);
  return seq;
}

namespace detail {

using NgramCounts = std::map<std::vector<TokenId>, long>;

inline NgramCounts count_ngrams(std::span<const TokenId> seq, int n) {
  NgramCounts counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<TokenId>(seq.begin() + i, seq.begin() + i + n)];
  }
  return counts;
}

inline void accumulate_counts(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                              std::array<long, kMaxOrder>& matched,
                              std::array<long, kMaxOrder>& total) {
  for (int n = 1; n <= kMaxOrder; ++n) {
    const auto hyp_counts = count_ngrams(hyp, n);
    const auto ref_counts = count_ngrams(ref, n);
    long m = 0;
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    matched[n - 1] += m;
    total[n - 1] += hyp.size() >= static_cast<std::size_t>(n) ? static_cast<long>(hyp.size()) - n + 1 : 0;
  }
}

inline double brevity_penalty(long hyp_len, long ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

inline double combine(const std::array<long, kMaxOrder>& matched, const std::array<long, kMaxOrder>& total,
                      double bp) {
  if (bp == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    const double prec = matched[n] > 0 ? static_cast<double>(matched[n]) / static_cast<double>(total[n])
                                       : 1.0 / (static_cast<double>(total[n]) + 1.0);
    log_sum += std::log(prec);
  }
  return bp * std::exp(log_sum / kMaxOrder);
}

}  // namespace detail

/// Sentence BLEU of `hypothesis` against `reference`. Both sequences must
/// already have EOS stripped (see strip_eos).
inline BleuBreakdown sentence_bleu(std::span<const TokenId> hypothesis, std::span<const TokenId> reference) {
  if (reference.empty()) throw InvalidInput("sentence_bleu: empty reference");
  BleuBreakdown b;
  detail::accumulate_counts(hypothesis, reference, b.matched, b.total);
  b.hyp_len = static_cast<long>(hypothesis.size());
  b.ref_len = static_cast<long>(reference.size());
  b.brevity_penalty = detail::brevity_penalty(b.hyp_len, b.ref_len);
  b.score = detail::combine(b.matched, b.total, b.brevity_penalty);
  return b;
}

using Pair = std::pair<std::span<const TokenId>, std::span<const TokenId>>;

inline BleuBreakdown corpus_bleu_breakdown(std::span<const Pair> pairs) {
  if (pairs.empty()) throw InvalidInput("corpus_bleu: empty corpus");
  BleuBreakdown b;
  for (const auto& [hyp, ref] : pairs) {
    if (ref.empty()) throw InvalidInput("corpus_bleu: empty reference");
    detail::accumulate_counts(hyp, ref, b.matched, b.total);
    b.hyp_len += static_cast<long>(hyp.size());
    b.ref_len += static_cast<long>(ref.size());
  }
  b.brevity_penalty = detail::brevity_penalty(b.hyp_len, b.ref_len);
  b.score = detail::combine(b.matched, b.total, b.brevity_penalty);
  return b;
}

inline double corpus_bleu(std::span<const Pair> pairs) { return corpus_bleu_breakdown(pairs).score; }

inline double mean_sentence_bleu(std::span<const Pair> pairs) {
  if (pairs.empty()) throw InvalidInput("mean_sentence_bleu: empty list");
  double sum = 0.0;
  for (const auto& [hyp, ref] : pairs) sum += sentence_bleu(hyp, ref).score;
  return sum / static_cast<double>(pairs.size());
}

}  // namespace mtrerank::bleu
