#pragma once

// Greedy, beam, top-k and nucleus decoding over any StepModel.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/decode/candidate.hpp"
#include "mtrerank/rng.hpp"

namespace mtrerank::decode {

struct DecodeConfig {
  int beam_size = 5;
  int candidates_k = 5;
  int topk_k = 10;
  double nucleus_p = 0.99;
  double temperature = 3.0;
  int max_decode_len = 32;

  void validate() const {
    if (candidates_k < 1 || candidates_k > beam_size) throw ConfigError("decode: need 1 <= candidates_k <= beam_size");
    if (topk_k < 1) throw ConfigError("decode: topk_k must be >= 1");
    if (!(nucleus_p > 0.0 && nucleus_p <= 1.0)) throw ConfigError("decode: nucleus_p must lie in (0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("decode: temperature must be > 0");
    if (max_decode_len < 1) throw ConfigError("decode: max_decode_len must be >= 1");
  }
};

/// A left-to-right model exposing next-token log-probabilities.
/// `blocked` tokens (e.g. PAD, BOS) are never emitted by any decoder.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, const TokenIds& src, TokenId t) {
  { m.start(src) } -> std::same_as<typename M::State>;
  { m.advance(s, t) } -> std::same_as<typename M::State>;
  { m.next_logprobs(s) } -> std::convertible_to<const std::vector<double>&>;
  { m.vocab_size() } -> std::convertible_to<int>;
  { m.eos() } -> std::convertible_to<TokenId>;
  { m.blocked(t) } -> std::convertible_to<bool>;
};

template <StepModel M>
Candidate greedy(const M& model, const TokenIds& source, const DecodeConfig& cfg) {
  auto state = model.start(source);
  TokenIds tokens;
  std::vector<double> lps;
  for (int t = 0; t < cfg.max_decode_len; ++t) {
    const std::vector<double>& lp = model.next_logprobs(state);
    TokenId best = -1;
    for (TokenId v = 0; v < static_cast<TokenId>(lp.size()); ++v) {
      if (model.blocked(v)) continue;
      if (best < 0 || lp[v] > lp[best]) best = v;
    }
    tokens.push_back(best);
    lps.push_back(lp[best]);
    if (best == model.eos()) return make_candidate(std::move(tokens), std::move(lps), Origin::kGreedy);
    state = model.advance(state, best);
  }
  lps.push_back(model.next_logprobs(state)[model.eos()]);
  tokens.push_back(model.eos());
  return make_candidate(std::move(tokens), std::move(lps), Origin::kGreedy, true);
}

/// Beam search ranking prefixes by cumulative log-probability (no length
/// normalization). EOS-terminated hypotheses leave the beam; search stops
/// once beam_size hypotheses have finished, the beam empties, or the length
/// cap forces EOS onto the survivors. Returns the best candidates_k by
/// cumulative score, best first.
template <StepModel M>
std::vector<Candidate> beam(const M& model, const TokenIds& source, const DecodeConfig& cfg) {
  if (cfg.candidates_k > cfg.beam_size) throw ConfigError("beam: candidates_k exceeds beam_size");
  struct Hyp {
    typename M::State state;
    TokenIds tokens;
    std::vector<double> lps;
    double score = 0.0;
  };
  struct Expansion {
    double score;
    std::size_t hyp;
    TokenId token;
  };

  const auto b = static_cast<std::size_t>(cfg.beam_size);
  std::vector<Hyp> active;
  active.push_back({model.start(source), {}, {}, 0.0});
  std::vector<Candidate> finished;

  for (int t = 0; t < cfg.max_decode_len && !active.empty() && finished.size() < b; ++t) {
    std::vector<Expansion> exps;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::vector<double>& lp = model.next_logprobs(active[i].state);
      for (TokenId v = 0; v < static_cast<TokenId>(lp.size()); ++v) {
        if (model.blocked(v) || lp[v] == -std::numeric_limits<double>::infinity()) continue;
        exps.push_back({active[i].score + lp[v], i, v});
      }
    }
    std::stable_sort(exps.begin(), exps.end(), [](const Expansion& a, const Expansion& c) { return a.score > c.score; });

    std::vector<Hyp> next;
    for (const auto& e : exps) {
      if (next.size() >= b) break;
      const Hyp& h = active[e.hyp];
      const double lp = model.next_logprobs(h.state)[e.token];
      if (e.token == model.eos()) {
        if (finished.size() < b) {
          TokenIds toks = h.tokens;
          toks.push_back(e.token);
          std::vector<double> lps = h.lps;
          lps.push_back(lp);
          finished.push_back(make_candidate(std::move(toks), std::move(lps), Origin::kBeam));
        }
        continue;
      }
      Hyp n{model.advance(h.state, e.token), h.tokens, h.lps, e.score};
      n.tokens.push_back(e.token);
      n.lps.push_back(lp);
      next.push_back(std::move(n));
    }
    active = std::move(next);
    if (t + 1 == cfg.max_decode_len && finished.size() < b) {
      for (auto& h : active) {
        h.lps.push_back(model.next_logprobs(h.state)[model.eos()]);
        h.tokens.push_back(model.eos());
        finished.push_back(make_candidate(std::move(h.tokens), std::move(h.lps), Origin::kBeam, true));
      }
      active.clear();
    }
  }

  std::stable_sort(finished.begin(), finished.end(),
                   [](const Candidate& a, const Candidate& c) { return a.cumulative > c.cumulative; });
  if (finished.size() > static_cast<std::size_t>(cfg.candidates_k)) finished.resize(cfg.candidates_k);
  return finished;
}

/// Sampling distribution for top-k: logits divided by `temperature`,
/// restricted to the k highest (lower id wins ties), renormalized.
inline std::vector<double> topk_distribution(const std::vector<double>& logprobs, int k, double temperature,
                                             const std::vector<bool>& blocked = {}) {
  std::vector<TokenId> order;
  for (TokenId v = 0; v < static_cast<TokenId>(logprobs.size()); ++v) {
    if ((blocked.empty() || !blocked[v]) && std::isfinite(logprobs[v])) order.push_back(v);
  }
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId c) { return logprobs[a] > logprobs[c]; });
  if (order.size() > static_cast<std::size_t>(k)) order.resize(k);
  std::vector<double> probs(logprobs.size(), 0.0);
  if (order.empty()) return probs;
  const double mx = logprobs[order.front()] / temperature;
  double z = 0.0;
  for (TokenId v : order) z += (probs[v] = std::exp(logprobs[v] / temperature - mx));
  for (TokenId v : order) probs[v] /= z;
  return probs;
}

/// Sampling distribution for nucleus sampling: the smallest
/// probability-sorted prefix (ties by token id) with mass >= p, renormalized.
inline std::vector<double> nucleus_distribution(const std::vector<double>& logprobs, double p,
                                                const std::vector<bool>& blocked = {}) {
  std::vector<TokenId> order;
  double total = 0.0;
  for (TokenId v = 0; v < static_cast<TokenId>(logprobs.size()); ++v) {
    if ((blocked.empty() || !blocked[v]) && std::isfinite(logprobs[v])) {
      order.push_back(v);
      total += std::exp(logprobs[v]);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId c) { return logprobs[a] > logprobs[c]; });
  std::vector<double> probs(logprobs.size(), 0.0);
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += std::exp(logprobs[order[keep]]) / total;
    ++keep;
    if (mass >= p) break;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < keep; ++i) z += (probs[order[i]] = std::exp(logprobs[order[i]]));
  for (std::size_t i = 0; i < keep; ++i) probs[order[i]] /= z;
  return probs;
}

namespace detail {

template <StepModel M>
std::vector<bool> blocked_mask(const M& model) {
  std::vector<bool> mask(model.vocab_size());
  for (TokenId v = 0; v < model.vocab_size(); ++v) mask[v] = model.blocked(v);
  return mask;
}

template <StepModel M, class Dist>
Candidate sample_with(const M& model, const TokenIds& source, const DecodeConfig& cfg, Rng& rng, Origin origin,
                      Dist&& distribution) {
  const std::vector<bool> blocked = blocked_mask(model);
  auto state = model.start(source);
  TokenIds tokens;
  std::vector<double> lps;
  for (int t = 0; t < cfg.max_decode_len; ++t) {
    const std::vector<double>& lp = model.next_logprobs(state);
    const auto tok = static_cast<TokenId>(rng.categorical(distribution(lp, blocked)));
    tokens.push_back(tok);
    lps.push_back(lp[tok]);
    if (tok == model.eos()) return make_candidate(std::move(tokens), std::move(lps), origin);
    state = model.advance(state, tok);
  }
  lps.push_back(model.next_logprobs(state)[model.eos()]);
  tokens.push_back(model.eos());
  return make_candidate(std::move(tokens), std::move(lps), origin, true);
}

}  // namespace detail

template <StepModel M>
Candidate sample_topk(const M& model, const TokenIds& source, const DecodeConfig& cfg, Rng& rng) {
  if (cfg.topk_k > model.vocab_size()) throw ConfigError("sample_topk: topk_k exceeds vocabulary size");
  return detail::sample_with(model, source, cfg, rng, Origin::kTopK, [&](const auto& lp, const auto& blocked) {
    return topk_distribution(lp, cfg.topk_k, cfg.temperature, blocked);
  });
}

template <StepModel M>
Candidate sample_nucleus(const M& model, const TokenIds& source, const DecodeConfig& cfg, Rng& rng) {
  return detail::sample_with(model, source, cfg, rng, Origin::kNucleus, [&](const auto& lp, const auto& blocked) {
    return nucleus_distribution(lp, cfg.nucleus_p, blocked);
  });
}

}  // namespace mtrerank::decode
