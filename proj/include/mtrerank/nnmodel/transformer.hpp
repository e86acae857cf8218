#pragma once

// Pre-norm encoder-decoder transformer with sinusoidal positions and an
// output projection tied to the shared embedding table.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/layers.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/rng.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::nnmodel {

template <class T>
Matrix<T> sinusoidal_positions(int length, int d_model) {
  Matrix<T> pe(length, d_model);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d_model) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

/// Row-wise log-softmax.
template <class T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    const T lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

/// Dropout settings for one forward pass. Without a seed the pass is
/// deterministic inference.
struct PassOptions {
  std::optional<std::uint64_t> dropout_seed;
};

/// One forward pass over a packed batch, keeping every activation needed by
/// backward(). Sources feed the encoder; decoder inputs are full
/// teacher-forcing sequences (BOS followed by target tokens).
template <class T>
class ForwardPass {
 public:
  ForwardPass(const ModelParams<T>& params, PassOptions options = {}) : params_(params) {
    if (options.dropout_seed && params.config.dropout > 0.0) {
      rng_.emplace(*options.dropout_seed, "dropout");
    }
  }

  /// Runs encoder and decoder; returns the final-layer decoder states, one
  /// row per decoder input position.
  const Matrix<T>& run(std::span<const TokenIds> sources, std::span<const TokenIds> decoder_inputs) {
    if (sources.size() != decoder_inputs.size()) throw InvalidInput("forward: batch size mismatch");
    encode(sources);
    decode(decoder_inputs);
    return states_;
  }

  /// Encoder only; returns the normalized encoder output (memory).
  const Matrix<T>& encode(std::span<const TokenIds> sources) {
    const auto& cfg = params_.config;
    src_segs_ = make_segments(sources);
    src_tokens_ = flatten(sources);
    Matrix<T> x = embed(sources, src_segs_);
    x = enc_embed_drop_.forward(x, cfg.dropout, rng_ptr());
    enc_.assign(params_.encoder.size(), EncoderCache{});
    for (std::size_t l = 0; l < params_.encoder.size(); ++l) {
      const auto& lp = params_.encoder[l];
      auto& c = enc_[l];
      Matrix<T> a = c.ln_attn.forward(lp.ln_attn, x);
      Matrix<T> att = c.attn.forward(lp.attn, a, a, src_segs_, src_segs_, cfg.heads, false);
      x += c.drop_attn.forward(att, cfg.dropout, rng_ptr());
      Matrix<T> b = c.ln_ffn.forward(lp.ln_ffn, x);
      Matrix<T> f = c.ffn.forward(lp.ffn, b);
      x += c.drop_ffn.forward(f, cfg.dropout, rng_ptr());
    }
    memory_ = enc_norm_.forward(params_.encoder_norm, x);
    return memory_;
  }

  void backward(const Matrix<T>& d_states, ModelParams<T>& grads) {
    Matrix<T> dy = dec_norm_.backward(params_.decoder_norm, d_states, grads.decoder_norm);
    Matrix<T> d_memory = Matrix<T>::Zero(memory_.rows(), memory_.cols());
    for (std::size_t li = dec_.size(); li-- > 0;) {
      const auto& lp = params_.decoder[li];
      auto& lg = grads.decoder[li];
      auto& c = dec_[li];
      {
        Matrix<T> df = c.ffn.backward(lp.ffn, c.drop_ffn.backward(dy), lg.ffn);
        dy += c.ln_ffn.backward(lp.ln_ffn, df, lg.ln_ffn);
      }
      {
        auto [dq, dkv] = c.cross_attn.backward(lp.cross_attn, c.drop_cross.backward(dy), lg.cross_attn);
        d_memory += dkv;
        dy += c.ln_cross.backward(lp.ln_cross, dq, lg.ln_cross);
      }
      {
        auto [dq, dkv] = c.self_attn.backward(lp.self_attn, c.drop_self.backward(dy), lg.self_attn);
        dq += dkv;
        dy += c.ln_self.backward(lp.ln_self, dq, lg.ln_self);
      }
    }
    scatter_embedding_grad(dec_embed_drop_.backward(dy), tgt_tokens_, tgt_segs_, grads);

    Matrix<T> dx = enc_norm_.backward(params_.encoder_norm, d_memory, grads.encoder_norm);
    for (std::size_t li = enc_.size(); li-- > 0;) {
      const auto& lp = params_.encoder[li];
      auto& lg = grads.encoder[li];
      auto& c = enc_[li];
      {
        Matrix<T> df = c.ffn.backward(lp.ffn, c.drop_ffn.backward(dx), lg.ffn);
        dx += c.ln_ffn.backward(lp.ln_ffn, df, lg.ln_ffn);
      }
      {
        auto [dq, dkv] = c.attn.backward(lp.attn, c.drop_attn.backward(dx), lg.attn);
        dq += dkv;
        dx += c.ln_attn.backward(lp.ln_attn, dq, lg.ln_attn);
      }
    }
    scatter_embedding_grad(enc_embed_drop_.backward(dx), src_tokens_, src_segs_, grads);
  }

  const std::vector<Segment>& target_segments() const { return tgt_segs_; }
  const std::vector<Segment>& source_segments() const { return src_segs_; }
  const Matrix<T>& states() const { return states_; }
  const Matrix<T>& memory() const { return memory_; }

 private:
  struct EncoderCache {
    LayerNormOp<T> ln_attn, ln_ffn;
    AttentionOp<T> attn;
    FeedForwardOp<T> ffn;
    DropoutOp<T> drop_attn, drop_ffn;
  };
  struct DecoderCache {
    LayerNormOp<T> ln_self, ln_cross, ln_ffn;
    AttentionOp<T> self_attn, cross_attn;
    FeedForwardOp<T> ffn;
    DropoutOp<T> drop_self, drop_cross, drop_ffn;
  };

  Rng* rng_ptr() { return rng_ ? &*rng_ : nullptr; }

  void decode(std::span<const TokenIds> inputs) {
    const auto& cfg = params_.config;
    tgt_segs_ = make_segments(inputs);
    tgt_tokens_ = flatten(inputs);
    Matrix<T> y = embed(inputs, tgt_segs_);
    y = dec_embed_drop_.forward(y, cfg.dropout, rng_ptr());
    dec_.assign(params_.decoder.size(), DecoderCache{});
    for (std::size_t l = 0; l < params_.decoder.size(); ++l) {
      const auto& lp = params_.decoder[l];
      auto& c = dec_[l];
      Matrix<T> a = c.ln_self.forward(lp.ln_self, y);
      Matrix<T> s = c.self_attn.forward(lp.self_attn, a, a, tgt_segs_, tgt_segs_, cfg.heads, true);
      y += c.drop_self.forward(s, cfg.dropout, rng_ptr());
      Matrix<T> b = c.ln_cross.forward(lp.ln_cross, y);
      Matrix<T> x = c.cross_attn.forward(lp.cross_attn, b, memory_, tgt_segs_, src_segs_, cfg.heads, false);
      y += c.drop_cross.forward(x, cfg.dropout, rng_ptr());
      Matrix<T> f = c.ln_ffn.forward(lp.ln_ffn, y);
      y += c.drop_ffn.forward(c.ffn.forward(lp.ffn, f), cfg.dropout, rng_ptr());
    }
    states_ = dec_norm_.forward(params_.decoder_norm, y);
  }

  std::vector<Segment> make_segments(std::span<const TokenIds> seqs) const {
    std::vector<Segment> segs;
    Eigen::Index offset = 0;
    for (const auto& s : seqs) {
      if (s.empty()) throw InvalidInput("forward: empty sequence");
      if (static_cast<int>(s.size()) > params_.config.max_len) throw InvalidInput("forward: sequence exceeds max_len");
      segs.push_back({offset, static_cast<Eigen::Index>(s.size())});
      offset += static_cast<Eigen::Index>(s.size());
    }
    return segs;
  }

  static TokenIds flatten(std::span<const TokenIds> seqs) {
    TokenIds out;
    for (const auto& s : seqs) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  Matrix<T> embed(std::span<const TokenIds> seqs, const std::vector<Segment>& segs) {
    const int d = params_.config.d_model;
    Eigen::Index max_len = 0;
    for (const auto& s : segs) max_len = std::max(max_len, s.length);
    if (positions_.rows() < max_len) positions_ = sinusoidal_positions<T>(static_cast<int>(max_len), d);
    const T scale = std::sqrt(static_cast<T>(d));
    Matrix<T> x(segs.empty() ? 0 : segs.back().offset + segs.back().length, d);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      for (Eigen::Index p = 0; p < segs[i].length; ++p) {
        const TokenId tok = seqs[i][p];
        if (tok < 0 || tok >= params_.config.vocab_size) throw InvalidInput("forward: token id out of range");
        x.row(segs[i].offset + p) = params_.embedding.row(tok) * scale + positions_.row(p);
      }
    }
    return x;
  }

  void scatter_embedding_grad(const Matrix<T>& dx, const TokenIds& tokens, const std::vector<Segment>&,
                              ModelParams<T>& grads) const {
    const T scale = std::sqrt(static_cast<T>(params_.config.d_model));
    for (std::size_t r = 0; r < tokens.size(); ++r) grads.embedding.row(tokens[r]) += dx.row(r) * scale;
  }

  const ModelParams<T>& params_;
  std::optional<Rng> rng_;
  Matrix<T> positions_;
  std::vector<Segment> src_segs_, tgt_segs_;
  TokenIds src_tokens_, tgt_tokens_;
  DropoutOp<T> enc_embed_drop_, dec_embed_drop_;
  std::vector<EncoderCache> enc_;
  std::vector<DecoderCache> dec_;
  LayerNormOp<T> enc_norm_, dec_norm_;
  Matrix<T> memory_, states_;
};

/// Decoder input for teacher forcing over `target`: BOS then target.
inline TokenIds with_bos(std::span<const TokenId> target) {
  TokenIds out;
  out.reserve(target.size() + 1);
  out.push_back(textdata::kBos);
  out.insert(out.end(), target.begin(), target.end());
  return out;
}

/// Per-position log-distributions of the next target token. Row i
/// conditions on the source and target_prefix[0..i).
template <class T>
Matrix<T> forward_logprobs(const ModelParams<T>& params, const TokenIds& source, const TokenIds& target_prefix) {
  if (source.empty() || target_prefix.empty()) throw InvalidInput("forward_logprobs: empty sequence");
  TokenIds input = with_bos(std::span<const TokenId>(target_prefix).first(target_prefix.size() - 1));
  ForwardPass<T> pass(params);
  const TokenIds srcs[] = {source};
  const TokenIds ins[] = {input};
  const Matrix<T>& states = pass.run(srcs, ins);
  Matrix<T> logits = states * params.embedding.transpose();
  return log_softmax_rows(logits);
}

/// Two head logits for a single decoder state row.
template <class T, class Row>
Eigen::Matrix<T, 1, 2> head_logits(const HeadParams<T>& head, const Row& state) {
  Eigen::Matrix<T, 1, 2> z = state * head.weight;
  z += head.bias.row(0);
  return z;
}

/// First component of the two-way softmax, computed stably.
inline double two_way_probability(double z0, double z1) {
  const double m = z0 - z1;
  return m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
}

/// Scores every candidate of one source with the reranker head in a single
/// batched pass. Each candidate must end with EOS.
template <class T>
std::vector<double> score_candidates(const ModelParams<T>& params, const TokenIds& source,
                                     std::span<const TokenIds> candidates) {
  if (!params.head) throw ConfigError("score_candidate: reranker head absent");
  if (candidates.empty()) return {};
  std::vector<TokenIds> sources(candidates.size(), source);
  std::vector<TokenIds> inputs;
  inputs.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.empty() || c.back() != textdata::kEos) throw InvalidInput("score_candidate: candidate must end with EOS");
    inputs.push_back(with_bos(c));
  }
  ForwardPass<T> pass(params);
  const Matrix<T>& states = pass.run(sources, inputs);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& seg : pass.target_segments()) {
    const auto z = head_logits(*params.head, states.row(seg.offset + seg.length - 1));
    out.push_back(two_way_probability(static_cast<double>(z(0)), static_cast<double>(z(1))));
  }
  return out;
}

/// P_r(y|x): the head applied to the final-layer decoder state at the
/// candidate's EOS position.
template <class T>
double score_candidate(const ModelParams<T>& params, const TokenIds& source, const TokenIds& candidate) {
  const TokenIds c[] = {candidate};
  return score_candidates(params, source, std::span<const TokenIds>(c))[0];
}

}  // namespace mtrerank::nnmodel
