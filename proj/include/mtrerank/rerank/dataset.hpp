#pragma once

// Reranker training data: per source sentence the ground truth, the greedy
// output, the top beam, n top-k samples and n nucleus samples, deduplicated
// on token sequence and scored with sentence BLEU against the reference.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtrerank/bleu.hpp"
#include "mtrerank/common.hpp"
#include "mtrerank/decode/search.hpp"
#include "mtrerank/rng.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::rerank {

using decode::Origin;

struct RerankExample {
  std::size_t sentence = 0;
  TokenIds source;
  TokenIds candidate;
  double p = 0.0;
  Origin origin = Origin::kGroundTruth;

  bool operator==(const RerankExample&) const = default;
};

struct RerankDatasetSpec {
  int n = 10;
  /// Beam width used for the "top beam" family.
  int beam_size = 5;
  decode::DecodeConfig decode;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 0) throw ConfigError("rerank data: n must be >= 0");
    if (beam_size < 1) throw ConfigError("rerank data: beam_size must be >= 1");
    decode.validate();
  }

  std::size_t max_per_source() const { return 2 * static_cast<std::size_t>(n) + 3; }
};

/// Sentence BLEU of a candidate against a reference, both EOS-terminated.
inline double target_score(const TokenIds& candidate, const TokenIds& reference) {
  return bleu::sentence_bleu(bleu::strip_eos(candidate, textdata::kEos), bleu::strip_eos(reference, textdata::kEos))
      .score;
}

/// All examples for one sentence, in family order with duplicates removed.
template <decode::StepModel M>
std::vector<RerankExample> examples_for_sentence(const M& model, const textdata::TokenizedPair& pair, std::size_t index,
                                                 const RerankDatasetSpec& spec) {
  std::vector<std::pair<TokenIds, Origin>> raw;
  raw.emplace_back(pair.reference, Origin::kGroundTruth);
  raw.emplace_back(decode::greedy(model, pair.source, spec.decode).tokens, Origin::kGreedy);

  decode::DecodeConfig beam_cfg = spec.decode;
  beam_cfg.beam_size = spec.beam_size;
  beam_cfg.candidates_k = 1;
  const auto top = decode::beam(model, pair.source, beam_cfg);
  if (!top.empty()) raw.emplace_back(top.front().tokens, Origin::kBeam);

  const auto sent = static_cast<std::uint64_t>(index);
  for (int s = 0; s < spec.n; ++s) {
    Rng rng(spec.seed, "top-k", {sent, static_cast<std::uint64_t>(s)});
    raw.emplace_back(decode::sample_topk(model, pair.source, spec.decode, rng).tokens, Origin::kTopK);
  }
  for (int s = 0; s < spec.n; ++s) {
    Rng rng(spec.seed, "nucleus", {sent, static_cast<std::uint64_t>(s)});
    raw.emplace_back(decode::sample_nucleus(model, pair.source, spec.decode, rng).tokens, Origin::kNucleus);
  }

  std::vector<RerankExample> out;
  std::set<TokenIds> seen;
  for (auto& [tokens, origin] : raw) {
    if (!seen.insert(tokens).second) continue;
    out.push_back({index, pair.source, tokens, target_score(tokens, pair.reference), origin});
  }
  return out;
}

/// Builds the dataset over `corpus`. A sentence whose decoding throws is
/// reported to `log` and skipped.
template <decode::StepModel M>
std::vector<RerankExample> build_rerank_dataset(const textdata::Corpus& corpus, const M& model,
                                                const RerankDatasetSpec& spec, std::ostream* log = nullptr) {
  spec.validate();
  std::vector<RerankExample> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      auto ex = examples_for_sentence(model, corpus[i], i, spec);
      out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
    } catch (const std::exception& e) {
      if (log) *log << "skipping sentence " << i << ": " << e.what() << '\n';
    }
  }
  return out;
}

inline nlohmann::json to_json(const RerankExample& ex) {
  return {{"sentence", ex.sentence},
          {"source", ex.source},
          {"candidate", ex.candidate},
          {"p", ex.p},
          {"origin", decode::origin_name(ex.origin)}};
}

inline RerankExample example_from_json(const nlohmann::json& j) {
  RerankExample ex;
  ex.sentence = j.at("sentence").get<std::size_t>();
  ex.source = j.at("source").get<TokenIds>();
  ex.candidate = j.at("candidate").get<TokenIds>();
  ex.p = j.at("p").get<double>();
  ex.origin = decode::parse_origin(j.at("origin").get<std::string>());
  if (!(ex.p >= 0.0 && ex.p <= 1.0)) throw InvalidInput("rerank example: p outside [0, 1]");
  return ex;
}

inline void write_dataset(std::ostream& out, const std::vector<RerankExample>& data) {
  for (const auto& ex : data) out << to_json(ex).dump() << '\n';
}

inline std::vector<RerankExample> read_dataset(std::istream& in) {
  std::vector<RerankExample> data;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) data.push_back(example_from_json(nlohmann::json::parse(line)));
  }
  return data;
}

/// Per-origin counts plus per-source statistics, for the sidecar file.
inline nlohmann::json dataset_summary(const std::vector<RerankExample>& data, const RerankDatasetSpec& spec) {
  std::map<std::string, long> by_origin;
  for (Origin o : {Origin::kGroundTruth, Origin::kGreedy, Origin::kBeam, Origin::kTopK, Origin::kNucleus}) {
    by_origin[std::string(decode::origin_name(o))] = 0;
  }
  std::map<std::size_t, long> per_source;
  double p_sum = 0.0;
  for (const auto& ex : data) {
    ++by_origin[std::string(decode::origin_name(ex.origin))];
    ++per_source[ex.sentence];
    p_sum += ex.p;
  }
  long max_per = 0;
  for (const auto& [s, c] : per_source) max_per = std::max(max_per, c);
  return {{"n", spec.n},
          {"examples", data.size()},
          {"sources", per_source.size()},
          {"max_per_source", max_per},
          {"bound_per_source", spec.max_per_source()},
          {"mean_p", data.empty() ? 0.0 : p_sum / static_cast<double>(data.size())},
          {"by_origin", by_origin}};
}

}  // namespace mtrerank::rerank
