#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mtrerank/common.hpp"
#include "mtrerank/rng.hpp"

namespace mtrerank::nnmodel {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int d_ffn = 128;
  int vocab_size = 0;
  double dropout = 0.1;
  int max_len = 64;

  void validate() const {
    if (layers < 1 || heads < 1 || d_model < 1 || d_ffn < 1 || vocab_size < 1 || max_len < 1) {
      throw ConfigError("model config: all counts must be >= 1");
    }
    if (d_model % heads != 0) throw ConfigError("model config: d_model must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must lie in [0, 1)");
  }

  int head_dim() const { return d_model / heads; }

  bool operator==(const ModelConfig&) const = default;
};

// Biases and norm parameters are stored as 1 x n matrices so that every
// tensor shares one type.
template <class T>
struct NormParams {
  Matrix<T> gain, bias;
};

template <class T>
struct AttentionParams {
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class T>
struct FeedForwardParams {
  Matrix<T> w1, b1, w2, b2;
};

template <class T>
struct EncoderLayerParams {
  NormParams<T> ln_attn;
  AttentionParams<T> attn;
  NormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

template <class T>
struct DecoderLayerParams {
  NormParams<T> ln_self;
  AttentionParams<T> self_attn;
  NormParams<T> ln_cross;
  AttentionParams<T> cross_attn;
  NormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

/// The d_model x 2 reranker head. Column 0 scores P_r(y|x), column 1 its
/// complement.
template <class T>
struct HeadParams {
  Matrix<T> weight, bias;
};

/// Every weight of the encoder-decoder. The embedding table is shared by the
/// encoder input, the decoder input and the (tied) output projection.
template <class T>
struct ModelParams {
  ModelConfig config;
  Matrix<T> embedding;
  std::vector<EncoderLayerParams<T>> encoder;
  NormParams<T> encoder_norm;
  std::vector<DecoderLayerParams<T>> decoder;
  NormParams<T> decoder_norm;
  std::optional<HeadParams<T>> head;

  bool has_head() const { return head.has_value(); }
};

template <class T>
using NamedTensor = std::pair<std::string, Matrix<T>*>;

namespace detail {

template <class T, class Out>
void list_norm(NormParams<T>& p, const std::string& prefix, Out& out) {
  out.emplace_back(prefix + ".gain", &p.gain);
  out.emplace_back(prefix + ".bias", &p.bias);
}

template <class T, class Out>
void list_attention(AttentionParams<T>& p, const std::string& prefix, Out& out) {
  out.emplace_back(prefix + ".wq", &p.wq);
  out.emplace_back(prefix + ".bq", &p.bq);
  out.emplace_back(prefix + ".wk", &p.wk);
  out.emplace_back(prefix + ".bk", &p.bk);
  out.emplace_back(prefix + ".wv", &p.wv);
  out.emplace_back(prefix + ".bv", &p.bv);
  out.emplace_back(prefix + ".wo", &p.wo);
  out.emplace_back(prefix + ".bo", &p.bo);
}

template <class T, class Out>
void list_ffn(FeedForwardParams<T>& p, const std::string& prefix, Out& out) {
  out.emplace_back(prefix + ".w1", &p.w1);
  out.emplace_back(prefix + ".b1", &p.b1);
  out.emplace_back(prefix + ".w2", &p.w2);
  out.emplace_back(prefix + ".b2", &p.b2);
}

}  // namespace detail

/// All tensors in a fixed canonical order. Checkpoints, the optimizer and
/// gradient checks all iterate this list.
template <class T>
std::vector<NamedTensor<T>> named_tensors(ModelParams<T>& p) {
  std::vector<NamedTensor<T>> out;
  out.emplace_back("embedding", &p.embedding);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    detail::list_norm(p.encoder[l].ln_attn, pre + ".ln_attn", out);
    detail::list_attention(p.encoder[l].attn, pre + ".attn", out);
    detail::list_norm(p.encoder[l].ln_ffn, pre + ".ln_ffn", out);
    detail::list_ffn(p.encoder[l].ffn, pre + ".ffn", out);
  }
  detail::list_norm(p.encoder_norm, "encoder_norm", out);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    detail::list_norm(p.decoder[l].ln_self, pre + ".ln_self", out);
    detail::list_attention(p.decoder[l].self_attn, pre + ".self_attn", out);
    detail::list_norm(p.decoder[l].ln_cross, pre + ".ln_cross", out);
    detail::list_attention(p.decoder[l].cross_attn, pre + ".cross_attn", out);
    detail::list_norm(p.decoder[l].ln_ffn, pre + ".ln_ffn", out);
    detail::list_ffn(p.decoder[l].ffn, pre + ".ffn", out);
  }
  detail::list_norm(p.decoder_norm, "decoder_norm", out);
  if (p.head) {
    out.emplace_back("head.weight", &p.head->weight);
    out.emplace_back("head.bias", &p.head->bias);
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, const Matrix<T>*>> named_tensors(const ModelParams<T>& p) {
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  for (auto& [name, t] : named_tensors(const_cast<ModelParams<T>&>(p))) out.emplace_back(name, t);
  return out;
}

/// Allocates all tensors with their shapes, zero-filled.
template <class T>
ModelParams<T> zero_params(const ModelConfig& cfg, bool with_head) {
  cfg.validate();
  const int d = cfg.d_model, f = cfg.d_ffn;
  auto z = [](int r, int c) { return Matrix<T>::Zero(r, c); };
  auto norm = [&] { return NormParams<T>{z(1, d), z(1, d)}; };
  auto attn = [&] { return AttentionParams<T>{z(d, d), z(1, d), z(d, d), z(1, d), z(d, d), z(1, d), z(d, d), z(1, d)}; };
  auto ffn = [&] { return FeedForwardParams<T>{z(d, f), z(1, f), z(f, d), z(1, d)}; };

  ModelParams<T> p;
  p.config = cfg;
  p.embedding = z(cfg.vocab_size, d);
  for (int l = 0; l < cfg.layers; ++l) p.encoder.push_back({norm(), attn(), norm(), ffn()});
  p.encoder_norm = norm();
  for (int l = 0; l < cfg.layers; ++l) p.decoder.push_back({norm(), attn(), norm(), attn(), norm(), ffn()});
  p.decoder_norm = norm();
  if (with_head) p.head = HeadParams<T>{z(d, 2), z(1, 2)};
  return p;
}

template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  return zero_params<T>(p.config, p.has_head());
}

template <class T>
void fill_uniform(Matrix<T>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

/// Fresh reranker head: uniform weights in +-0.1/sqrt(d_model), zero bias, so
/// the initial P_r stays close to 0.5.
template <class T>
HeadParams<T> init_head(int d_model, std::uint64_t seed) {
  HeadParams<T> h{Matrix<T>::Zero(d_model, 2), Matrix<T>::Zero(1, 2)};
  Rng rng(seed, "head-init");
  fill_uniform(h.weight, rng, 0.1 / std::sqrt(static_cast<double>(d_model)));
  return h;
}

/// Random initialization. Projections use Xavier-uniform bounds, the
/// embedding table has std d^-1/2, norms start at identity.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed, bool with_head = false) {
  ModelParams<T> p = zero_params<T>(cfg, false);
  std::uint64_t index = 0;
  for (auto& [name, tensor] : named_tensors(p)) {
    Rng rng(seed, "param-init", {index++});
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".bq") || name.ends_with(".bk") ||
                         name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") ||
                         name.ends_with(".b2");
    if (name.ends_with(".gain")) {
      tensor->setOnes();
    } else if (is_bias) {
      tensor->setZero();
    } else if (name == "embedding") {
      fill_uniform(*tensor, rng, std::sqrt(3.0 / cfg.d_model));
    } else {
      fill_uniform(*tensor, rng, std::sqrt(6.0 / static_cast<double>(tensor->rows() + tensor->cols())));
    }
  }
  if (with_head) p.head = init_head<T>(cfg.d_model, seed);
  return p;
}

/// Copies a translator and attaches a freshly initialized head. Every
/// translator tensor is copied verbatim.
template <class T>
ModelParams<T> init_reranker_from_translator(const ModelParams<T>& translator, std::uint64_t seed) {
  ModelParams<T> r = translator;
  r.head = init_head<T>(translator.config.d_model, seed);
  return r;
}

template <class To, class From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> dst = zero_params<To>(src.config, src.has_head());
  auto s = named_tensors(src);
  auto d = named_tensors(dst);
  for (std::size_t i = 0; i < s.size(); ++i) *d[i].second = s[i].second->template cast<To>();
  return dst;
}

template <class T>
bool all_finite(const ModelParams<T>& p) {
  for (const auto& [name, t] : named_tensors(p)) {
    if (!t->allFinite()) return false;
  }
  return true;
}

template <class T>
std::size_t parameter_count(const ModelParams<T>& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors(p)) n += static_cast<std::size_t>(t->size());
  return n;
}

}  // namespace mtrerank::nnmodel
