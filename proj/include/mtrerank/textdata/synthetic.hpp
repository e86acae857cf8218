#pragma once

// Seeded synthetic transduction task.
//
// Every source word has `synonym_fanout` valid target words drawn from a
// seeded dictionary. A reference picks one synonym per source word (weights
// decay geometrically with the synonym slot, `synonym_decay` = 1 gives a
// uniform pick), then adjacent swaps and deletions are applied. Synonym
// ambiguity leaves several plausible translations per source, so beam
// candidates differ in BLEU.

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/rng.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::textdata {

struct SyntheticTaskSpec {
  std::uint64_t seed = 1;
  int source_vocab_size = 50;
  int min_length = 4;
  int max_length = 10;
  int synonym_fanout = 2;
  double synonym_decay = 0.5;
  double reorder_prob = 0.1;
  double drop_prob = 0.0;
  int train_size = 2000;
  int dev_size = 200;
  int test_size = 200;

  void validate() const {
    if (min_length < 1) throw InvalidInput("synthetic: length_range.min must be >= 1");
    if (max_length < min_length) throw InvalidInput("synthetic: length_range.max < min");
    if (source_vocab_size < 1) throw InvalidInput("synthetic: source_vocab_size must be >= 1");
    if (synonym_fanout < 1) throw InvalidInput("synthetic: synonym_fanout must be >= 1");
    if (synonym_decay <= 0.0) throw InvalidInput("synthetic: synonym_decay must be > 0");
    if (reorder_prob < 0.0 || reorder_prob > 1.0 || drop_prob < 0.0 || drop_prob >= 1.0) {
      throw InvalidInput("synthetic: probabilities out of range");
    }
    if (train_size < 0 || dev_size < 0 || test_size < 0) throw InvalidInput("synthetic: negative split size");
  }
};

struct SyntheticCorpora {
  Vocab vocab;
  /// dictionary[s][j] = target token id of synonym slot j for source word s.
  std::vector<std::vector<TokenId>> dictionary;
  Corpus train, dev, test;
};

inline std::string synthetic_source_word(int i) { return "s" + std::to_string(i); }
inline std::string synthetic_target_word(int i) { return "t" + std::to_string(i); }

inline SyntheticCorpora gen_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticCorpora out;
  const int nsrc = spec.source_vocab_size;
  const int ntgt = nsrc * spec.synonym_fanout;
  std::vector<TokenId> src_ids(nsrc), tgt_ids(ntgt);
  for (int i = 0; i < nsrc; ++i) src_ids[i] = out.vocab.add(synthetic_source_word(i));
  for (int i = 0; i < ntgt; ++i) tgt_ids[i] = out.vocab.add(synthetic_target_word(i));

  {
    Rng rng(spec.seed, "dictionary");
    std::vector<TokenId> perm = tgt_ids;
    rng.shuffle(perm);
    out.dictionary.assign(nsrc, {});
    for (int s = 0; s < nsrc; ++s) {
      for (int j = 0; j < spec.synonym_fanout; ++j) out.dictionary[s].push_back(perm[s * spec.synonym_fanout + j]);
    }
  }

  std::vector<double> slot_weights(spec.synonym_fanout);
  for (int j = 0; j < spec.synonym_fanout; ++j) slot_weights[j] = std::pow(spec.synonym_decay, j);

  const long total = static_cast<long>(spec.train_size) + spec.dev_size + spec.test_size;
  std::set<TokenIds> seen;
  constexpr int kMaxAttempts = 1000;

  for (long i = 0; i < total; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    TokenIds words;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) throw InvalidInput("synthetic: cannot draw enough distinct source sentences");
      Rng rng(spec.seed, "source", {idx, static_cast<std::uint64_t>(attempt)});
      const auto len = rng.between(spec.min_length, spec.max_length);
      words.clear();
      for (long k = 0; k < len; ++k) words.push_back(static_cast<TokenId>(rng.below(nsrc)));
      if (seen.insert(words).second) break;
    }

    TokenizedPair pair;
    for (TokenId w : words) pair.source.push_back(src_ids[w]);
    pair.source.push_back(kEos);

    Rng choose(spec.seed, "reference", {idx});
    TokenIds target;
    for (TokenId w : words) target.push_back(out.dictionary[w][choose.categorical(slot_weights)]);

    Rng reorder(spec.seed, "reorder", {idx});
    for (std::size_t k = 0; k + 1 < target.size(); ++k) {
      if (reorder.bernoulli(spec.reorder_prob)) {
        std::swap(target[k], target[k + 1]);
        ++k;
      }
    }

    Rng drop(spec.seed, "drop", {idx});
    TokenIds kept;
    for (TokenId t : target) {
      if (!drop.bernoulli(spec.drop_prob)) kept.push_back(t);
    }
    if (kept.empty()) kept.push_back(target.front());

    pair.reference = std::move(kept);
    pair.reference.push_back(kEos);

    if (i < spec.train_size) out.train.push_back(std::move(pair));
    else if (i < spec.train_size + spec.dev_size) out.dev.push_back(std::move(pair));
    else out.test.push_back(std::move(pair));
  }
  return out;
}

}  // namespace mtrerank::textdata
