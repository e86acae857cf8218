#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtrerank/common.hpp"

namespace mtrerank::textdata {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumReserved = 4;

/// Token inventory shared by source and target. Reserved tokens always hold
/// ids 0..3 in the order PAD, BOS, EOS, UNK.
class Vocab {
 public:
  Vocab() {
    for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) add(t);
  }

  /// Adds `token` if absent; returns its id either way.
  TokenId add(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw InvalidInput("token id out of range");
    return tokens_[id];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_reserved(TokenId id) { return id >= 0 && id < kNumReserved; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Word-level encoding: whitespace-separated tokens looked up directly.
inline TokenIds encode_words(const Vocab& vocab, std::string_view line) {
  TokenIds ids;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) ids.push_back(vocab.id(line.substr(i, j - i)));
    i = j;
  }
  ids.push_back(kEos);
  return ids;
}

/// Inverse of encode_words: joins non-reserved tokens with single spaces.
inline std::string decode_words(const Vocab& vocab, const TokenIds& ids) {
  std::string out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace mtrerank::textdata
