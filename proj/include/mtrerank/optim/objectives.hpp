#pragma once

// Batch objectives for the translator (label-smoothed cross-entropy over
// the tied output projection) and for the reranker (KL objective on the
// head's two-way softmax at the EOS state). Both optionally accumulate
// parameter gradients of the batch-mean loss.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/transformer.hpp"
#include "mtrerank/optim/losses.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "mtrerank/textdata/vocab.hpp"

namespace mtrerank::optim {

/// One reranker training row as consumed by the objective.
struct ScoredCandidate {
  const TokenIds* source = nullptr;
  const TokenIds* candidate = nullptr;
  double target = 0.0;
};

/// Mean label-smoothed CE of the references given the sources. Decoder input
/// is BOS + reference without its final EOS; every reference token,
/// including EOS, is predicted.
template <class T>
double translator_objective(const nnmodel::ModelParams<T>& params, std::span<const textdata::TokenizedPair* const> batch,
                            double label_smoothing, nnmodel::ModelParams<T>* grads = nullptr,
                            std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  std::vector<TokenIds> sources, inputs;
  TokenIds targets;
  for (const auto* pair : batch) {
    sources.push_back(pair->source);
    const auto& ref = pair->reference;
    inputs.push_back(nnmodel::with_bos(std::span<const TokenId>(ref).first(ref.size() - 1)));
    targets.insert(targets.end(), ref.begin(), ref.end());
  }
  nnmodel::ForwardPass<T> pass(params, {dropout_seed});
  const Matrix<T>& states = pass.run(sources, inputs);
  const Matrix<T> logprobs = nnmodel::log_softmax_rows<T>(states * params.embedding.transpose());
  auto [loss, d_logits] = label_smoothed_ce_with_grad<T>(logprobs, targets, label_smoothing, textdata::kPad);
  if (grads != nullptr) {
    grads->embedding.noalias() += d_logits.transpose() * states;
    const Matrix<T> d_states = d_logits * params.embedding;
    pass.backward(d_states, *grads);
  }
  return loss;
}

/// Mean KL rerank loss over the batch.
template <class T>
double reranker_objective(const nnmodel::ModelParams<T>& params, std::span<const ScoredCandidate> batch,
                          nnmodel::ModelParams<T>* grads = nullptr,
                          std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  if (!params.head) throw ConfigError("reranker objective: head absent");
  std::vector<TokenIds> sources, inputs;
  for (const auto& ex : batch) {
    sources.push_back(*ex.source);
    inputs.push_back(nnmodel::with_bos(*ex.candidate));
  }
  nnmodel::ForwardPass<T> pass(params, {dropout_seed});
  const Matrix<T>& states = pass.run(sources, inputs);
  const auto& segs = pass.target_segments();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Matrix<T> d_states;
  if (grads != nullptr) d_states = Matrix<T>::Zero(states.rows(), states.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::Index row = segs[i].offset + segs[i].length - 1;
    const auto z = nnmodel::head_logits(*params.head, states.row(row));
    const double pr = nnmodel::two_way_probability(static_cast<double>(z(0)), static_cast<double>(z(1)));
    const double p = batch[i].target;
    total += kl_rerank_loss(p, pr);
    if (grads != nullptr) {
      // pr = sigmoid(z0 - z1), so dl/dz0 = dl/dpr * pr (1 - pr) = -dl/dz1.
      const double dz = kl_rerank_grad(p, pr) * pr * (1.0 - pr) * inv_n;
      Eigen::Matrix<T, 1, 2> dlogits;
      dlogits << static_cast<T>(dz), static_cast<T>(-dz);
      grads->head->weight.noalias() += states.row(row).transpose() * dlogits;
      grads->head->bias.row(0) += dlogits;
      d_states.row(row) = dlogits * params.head->weight.transpose();
    }
  }
  if (grads != nullptr) pass.backward(d_states, *grads);
  return total * inv_n;
}

}  // namespace mtrerank::optim
