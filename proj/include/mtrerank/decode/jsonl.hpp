#pragma once

// Candidate lists as JSONL: one record per source sentence.
//   {"index": 3, "source": [...], "candidates": [
//       {"tokens": [...], "token_logprobs": [...], "origin": "beam"}, ...]}

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtrerank/decode/candidate.hpp"

namespace mtrerank::decode {

struct CandidateList {
  std::size_t index = 0;
  TokenIds source;
  std::vector<Candidate> candidates;
};

inline nlohmann::json to_json(const CandidateList& list) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : list.candidates) {
    nlohmann::json j{{"tokens", c.tokens}, {"token_logprobs", c.token_logprobs}, {"origin", origin_name(c.origin)}};
    if (c.forced_eos) j["forced_eos"] = true;
    cands.push_back(std::move(j));
  }
  return {{"index", list.index}, {"source", list.source}, {"candidates", std::move(cands)}};
}

inline CandidateList candidate_list_from_json(const nlohmann::json& j) {
  CandidateList list;
  list.index = j.at("index").get<std::size_t>();
  list.source = j.at("source").get<TokenIds>();
  for (const auto& c : j.at("candidates")) {
    list.candidates.push_back(make_candidate(c.at("tokens").get<TokenIds>(), c.at("token_logprobs").get<std::vector<double>>(),
                                             parse_origin(c.at("origin").get<std::string>()),
                                             c.value("forced_eos", false)));
  }
  return list;
}

inline void write_candidate_lists(std::ostream& out, const std::vector<CandidateList>& lists) {
  for (const auto& l : lists) out << to_json(l).dump() << '\n';
}

inline std::vector<CandidateList> read_candidate_lists(std::istream& in) {
  std::vector<CandidateList> lists;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    lists.push_back(candidate_list_from_json(nlohmann::json::parse(line)));
  }
  return lists;
}

}  // namespace mtrerank::decode
