#pragma once

#include <memory>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/layers.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/nnmodel/transformer.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::nnmodel {

/// Token-at-a-time decoding with cached self-attention keys/values.
/// Produces the same distributions as forward_logprobs (up to rounding) at
/// O(length) cost per step. Satisfies decode::StepModel.
template <class T>
class StepDecoder {
 public:
  struct Memory {
    std::vector<Matrix<T>> cross_k, cross_v;
  };

  struct State {
    std::shared_ptr<const Memory> memory;
    std::vector<Matrix<T>> self_k, self_v;
    int position = 0;
    std::vector<double> logprobs;
  };

  explicit StepDecoder(const ModelParams<T>& params)
      : params_(params), positions_(sinusoidal_positions<T>(params.config.max_len, params.config.d_model)) {}

  int vocab_size() const { return params_.config.vocab_size; }
  TokenId eos() const { return textdata::kEos; }
  bool blocked(TokenId t) const { return t == textdata::kPad || t == textdata::kBos; }
  int max_positions() const { return params_.config.max_len; }

  /// Encodes the source and feeds BOS; the returned state holds the
  /// distribution of the first target token.
  State start(const TokenIds& source) const {
    ForwardPass<T> pass(params_);
    const TokenIds srcs[] = {source};
    const Matrix<T>& memory = pass.encode(srcs);
    auto mem = std::make_shared<Memory>();
    for (const auto& lp : params_.decoder) {
      Matrix<T> k = memory * lp.cross_attn.wk;
      add_row_bias(k, lp.cross_attn.bk);
      Matrix<T> v = memory * lp.cross_attn.wv;
      add_row_bias(v, lp.cross_attn.bv);
      mem->cross_k.push_back(std::move(k));
      mem->cross_v.push_back(std::move(v));
    }
    State s;
    s.memory = std::move(mem);
    s.self_k.assign(params_.decoder.size(), Matrix<T>(0, params_.config.d_model));
    s.self_v.assign(params_.decoder.size(), Matrix<T>(0, params_.config.d_model));
    return step(std::move(s), textdata::kBos);
  }

  const std::vector<double>& next_logprobs(const State& s) const { return s.logprobs; }

  State advance(const State& s, TokenId token) const { return step(State(s), token); }

 private:
  State step(State s, TokenId token) const {
    const auto& cfg = params_.config;
    if (s.position >= cfg.max_len) throw InvalidInput("decode: sequence exceeds max_len");
    if (token < 0 || token >= cfg.vocab_size) throw InvalidInput("decode: token id out of range");
    Matrix<T> x = params_.embedding.row(token) * std::sqrt(static_cast<T>(cfg.d_model)) + positions_.row(s.position);
    for (std::size_t l = 0; l < params_.decoder.size(); ++l) {
      const auto& lp = params_.decoder[l];
      {
        Matrix<T> a = layer_norm(lp.ln_self, x);
        Matrix<T> q = a * lp.self_attn.wq;
        add_row_bias(q, lp.self_attn.bq);
        Matrix<T> k = a * lp.self_attn.wk;
        add_row_bias(k, lp.self_attn.bk);
        Matrix<T> v = a * lp.self_attn.wv;
        add_row_bias(v, lp.self_attn.bv);
        append_row(s.self_k[l], k);
        append_row(s.self_v[l], v);
        x += attend(lp.self_attn, q, s.self_k[l], s.self_v[l]);
      }
      {
        Matrix<T> b = layer_norm(lp.ln_cross, x);
        Matrix<T> q = b * lp.cross_attn.wq;
        add_row_bias(q, lp.cross_attn.bq);
        x += attend(lp.cross_attn, q, s.memory->cross_k[l], s.memory->cross_v[l]);
      }
      {
        Matrix<T> f = layer_norm(lp.ln_ffn, x);
        FeedForwardOp<T> ffn;
        x += ffn.forward(lp.ffn, f);
      }
    }
    Matrix<T> state = layer_norm(params_.decoder_norm, x);
    Matrix<T> logprobs = log_softmax_rows<T>(state * params_.embedding.transpose());
    s.logprobs.assign(logprobs.size(), 0.0);
    for (Eigen::Index i = 0; i < logprobs.size(); ++i) s.logprobs[i] = static_cast<double>(logprobs(0, i));
    ++s.position;
    return s;
  }

  static void append_row(Matrix<T>& m, const Matrix<T>& row) {
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row.row(0);
  }

  Matrix<T> attend(const AttentionParams<T>& p, const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v) const {
    const int heads = params_.config.heads;
    const Eigen::Index dh = q.cols() / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> ctx(1, q.cols());
    for (int h = 0; h < heads; ++h) {
      Matrix<T> scores = (q.block(0, h * dh, 1, dh) * k.block(0, h * dh, k.rows(), dh).transpose()) * scale;
      softmax_rows(scores);
      ctx.block(0, h * dh, 1, dh).noalias() = scores * v.block(0, h * dh, v.rows(), dh);
    }
    Matrix<T> out = ctx * p.wo;
    add_row_bias(out, p.bo);
    return out;
  }

  const ModelParams<T>& params_;
  Matrix<T> positions_;
};

}  // namespace mtrerank::nnmodel
