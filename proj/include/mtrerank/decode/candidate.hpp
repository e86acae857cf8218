#pragma once

#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "mtrerank/common.hpp"

namespace mtrerank::decode {

enum class Origin { kGroundTruth, kGreedy, kBeam, kTopK, kNucleus };

inline std::string_view origin_name(Origin o) {
  switch (o) {
    case Origin::kGroundTruth: return "ground-truth";
    case Origin::kGreedy: return "greedy";
    case Origin::kBeam: return "beam";
    case Origin::kTopK: return "top-k";
    case Origin::kNucleus: return "nucleus";
  }
  return "unknown";
}

inline Origin parse_origin(std::string_view s) {
  for (Origin o : {Origin::kGroundTruth, Origin::kGreedy, Origin::kBeam, Origin::kTopK, Origin::kNucleus}) {
    if (origin_name(o) == s) return o;
  }
  throw InvalidInput("unknown candidate origin: " + std::string(s));
}

/// One decoded translation. `token_logprobs` are always the translation
/// model's own log-probabilities, never those of a sampling distribution.
struct Candidate {
  TokenIds tokens;
  std::vector<double> token_logprobs;
  double cumulative = 0.0;
  double token_avg = 0.0;
  Origin origin = Origin::kBeam;
  /// Set when the length cap was hit and EOS was appended.
  bool forced_eos = false;
};

inline Candidate make_candidate(TokenIds tokens, std::vector<double> token_logprobs, Origin origin,
                                bool forced_eos = false) {
  if (tokens.size() != token_logprobs.size()) throw InvalidInput("candidate: tokens/logprobs length mismatch");
  if (tokens.empty()) throw InvalidInput("candidate: empty token sequence");
  Candidate c;
  c.cumulative = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
  c.token_avg = c.cumulative / static_cast<double>(tokens.size());
  c.tokens = std::move(tokens);
  c.token_logprobs = std::move(token_logprobs);
  c.origin = origin;
  c.forced_eos = forced_eos;
  return c;
}

}  // namespace mtrerank::decode
