#pragma once

// Byte-pair-encoding subword model.
//
// Pre-tokenization splits a line at whitespace. Every word after the first
// is prefixed with the boundary symbol U+2581 ("▁"), which decodes back to a
// single space. Merges are learned and applied strictly within words.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::textdata {

inline constexpr std::string_view kWordBoundary = "\xE2\x96\x81";

using Symbol = std::string;
using MergePair = std::pair<Symbol, Symbol>;

/// Splits UTF-8 text into code-point strings. Invalid lead bytes become
/// single-byte symbols.
inline std::vector<Symbol> utf8_chars(std::string_view text) {
  std::vector<Symbol> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

/// Whitespace pre-tokenization; returns each word as its list of symbols.
inline std::vector<std::vector<Symbol>> pretokenize(std::string_view line) {
  std::vector<std::vector<Symbol>> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) {
      std::vector<Symbol> word;
      if (!words.empty()) word.emplace_back(kWordBoundary);
      for (auto& ch : utf8_chars(line.substr(i, j - i))) word.push_back(std::move(ch));
      words.push_back(std::move(word));
    }
    i = j;
  }
  return words;
}

struct BpeModel {
  std::vector<MergePair> merges;
  Vocab vocab;

  /// Encodes `text` into subword ids terminated by EOS. Symbols outside the
  /// vocabulary map to UNK.
  TokenIds encode(std::string_view text) const;

  /// Concatenates subwords, turning boundary markers back into spaces.
  std::string decode(const TokenIds& ids) const;

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);

  bool operator==(const BpeModel& other) const { return merges == other.merges && vocab == other.vocab; }
};

namespace detail {

inline void apply_merge(std::vector<Symbol>& word, const MergePair& merge) {
  if (word.size() < 2) return;
  std::vector<Symbol> out;
  out.reserve(word.size());
  std::size_t i = 0;
  while (i < word.size()) {
    if (i + 1 < word.size() && word[i] == merge.first && word[i + 1] == merge.second) {
      out.push_back(word[i] + word[i + 1]);
      i += 2;
    } else {
      out.push_back(std::move(word[i]));
      ++i;
    }
  }
  word = std::move(out);
}

}  // namespace detail

/// Learns merges greedily: each round takes the most frequent adjacent pair
/// (lexicographically smallest on ties) until the vocabulary reaches
/// `target_vocab_size` or no pair remains.
inline BpeModel bpe_train(const std::vector<std::string>& corpus, std::size_t target_vocab_size) {
  if (corpus.empty()) throw InvalidInput("bpe_train: empty corpus");

  std::map<std::vector<Symbol>, long> word_freq;
  std::set<Symbol> alphabet;
  for (const auto& line : corpus) {
    for (auto& word : pretokenize(line)) {
      for (const auto& s : word) alphabet.insert(s);
      ++word_freq[std::move(word)];
    }
  }
  if (word_freq.empty()) throw InvalidInput("bpe_train: corpus has no tokens");
  if (target_vocab_size <= alphabet.size() + kNumReserved) {
    throw InvalidInput("bpe_train: target vocabulary must exceed alphabet size plus reserved tokens");
  }

  BpeModel model;
  for (const auto& s : alphabet) model.vocab.add(s);

  std::vector<std::pair<std::vector<Symbol>, long>> words(word_freq.begin(), word_freq.end());
  while (model.vocab.size() < target_vocab_size) {
    std::map<MergePair, long> pair_counts;
    for (const auto& [word, freq] : words) {
      for (std::size_t i = 0; i + 1 < word.size(); ++i) pair_counts[{word[i], word[i + 1]}] += freq;
    }
    if (pair_counts.empty()) break;
    // std::map iterates in lexicographic order, so strict > keeps the
    // smallest pair among equal counts.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const MergePair merge = best->first;
    model.merges.push_back(merge);
    model.vocab.add(merge.first + merge.second);
    for (auto& [word, freq] : words) detail::apply_merge(word, merge);
  }
  return model;
}

inline TokenIds BpeModel::encode(std::string_view text) const {
  std::map<MergePair, std::size_t> rank;
  for (std::size_t r = 0; r < merges.size(); ++r) rank.emplace(merges[r], r);

  TokenIds ids;
  for (auto& word : pretokenize(text)) {
    // Repeatedly apply the lowest-ranked applicable merge; equivalent to
    // replaying the merge list in order.
    while (word.size() > 1) {
      std::size_t best_rank = merges.size();
      for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        auto it = rank.find({word[i], word[i + 1]});
        if (it != rank.end()) best_rank = std::min(best_rank, it->second);
      }
      if (best_rank == merges.size()) break;
      detail::apply_merge(word, merges[best_rank]);
    }
    for (const auto& s : word) ids.push_back(vocab.id(s));
  }
  ids.push_back(kEos);
  return ids;
}

inline std::string BpeModel::decode(const TokenIds& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out += vocab.token(id);
  }
  std::string result;
  std::size_t pos = 0;
  while (true) {
    auto hit = out.find(kWordBoundary, pos);
    result.append(out, pos, hit == std::string::npos ? std::string::npos : hit - pos);
    if (hit == std::string::npos) break;
    result += ' ';
    pos = hit + kWordBoundary.size();
  }
  return result;
}

// Text format:
//   #bpe 1
//   merges <count>
//   <left> <right>       (one per line)
//   vocab <count>
//   <token>              (one per line, id order, reserved included)
inline void BpeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write BPE model: " + path);
  out << "#bpe 1\n" << "merges " << merges.size() << '\n';
  for (const auto& [a, b] : merges) out << a << ' ' << b << '\n';
  out << "vocab " << vocab.size() << '\n';
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

inline BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read BPE model: " + path);
  std::string line, word;
  std::size_t count = 0;
  if (!std::getline(in, line) || line != "#bpe 1") throw InvalidInput("bad BPE header in " + path);

  BpeModel model;
  auto read_count = [&](const char* key) {
    if (!std::getline(in, line)) throw InvalidInput("truncated BPE model");
    std::istringstream ss(line);
    if (!(ss >> word >> count) || word != key) throw InvalidInput("bad BPE section header");
  };
  read_count("merges");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw InvalidInput("truncated BPE merges");
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw InvalidInput("bad BPE merge line");
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  read_count("vocab");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw InvalidInput("truncated BPE vocab");
    if (i < static_cast<std::size_t>(kNumReserved)) {
      if (model.vocab.token(static_cast<TokenId>(i)) != line) throw InvalidInput("reserved token mismatch");
      continue;
    }
    model.vocab.add(line);
  }
  return model;
}

}  // namespace mtrerank::textdata
