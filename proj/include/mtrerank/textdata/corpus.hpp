#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::textdata {

/// One aligned sentence pair. Both sides end with EOS.
struct TokenizedPair {
  TokenIds source;
  TokenIds reference;

  bool operator==(const TokenizedPair&) const = default;
};

using Corpus = std::vector<TokenizedPair>;

inline bool is_well_formed(const TokenIds& seq) {
  if (seq.size() < 2 || seq.back() != kEos) return false;
  return std::none_of(seq.begin(), seq.end() - 1, [](TokenId t) { return t == kPad || t == kEos; });
}

inline bool is_well_formed(const TokenizedPair& p) { return is_well_formed(p.source) && is_well_formed(p.reference); }

struct RawParallel {
  std::vector<std::string> sources;
  std::vector<std::string> references;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace detail

/// Reads two aligned UTF-8 files (one sentence per line).
inline RawParallel read_parallel(const std::string& source_path, const std::string& reference_path) {
  RawParallel raw{detail::read_lines(source_path), detail::read_lines(reference_path)};
  if (raw.sources.size() != raw.references.size()) {
    throw InvalidInput("parallel files differ in line count: " + source_path + ", " + reference_path);
  }
  return raw;
}

/// Reads a TSV file with `source<TAB>reference` per line.
inline RawParallel read_tsv(const std::string& path) {
  RawParallel raw;
  std::size_t lineno = 0;
  for (auto& line : detail::read_lines(path)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InvalidInput(path + ":" + std::to_string(lineno) + ": missing TAB");
    raw.sources.push_back(line.substr(0, tab));
    raw.references.push_back(line.substr(tab + 1));
  }
  return raw;
}

inline void write_tsv(const std::string& path, const std::vector<std::string>& sources,
                      const std::vector<std::string>& references) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  for (std::size_t i = 0; i < sources.size(); ++i) out << sources[i] << '\t' << references[i] << '\n';
}

/// Encodes raw text with any `encode(line) -> TokenIds` callable. Pairs
/// where either side is empty are dropped.
template <class Encoder>
Corpus encode_corpus(const RawParallel& raw, const Encoder& encode) {
  Corpus out;
  for (std::size_t i = 0; i < raw.sources.size(); ++i) {
    TokenizedPair p{encode(raw.sources[i]), encode(raw.references[i])};
    if (p.source.size() < 2 || p.reference.size() < 2) continue;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mtrerank::textdata
