#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/params.hpp"

namespace mtrerank::optim {

using nnmodel::Matrix;

/// Clamp applied to P_r inside the reranker loss.
inline constexpr double kProbClamp = 1e-7;

/// Label-smoothed cross-entropy averaged over non-PAD positions:
///   -[(1-eps) * logprob(gold) + eps/|V'| * sum_v logprob(v)]
/// where V' is the vocabulary minus `pad` when a PAD id is given, otherwise
/// the whole vocabulary. Also returns the gradient with respect to the
/// logits that produced `logprobs` (already divided by the position count).
template <class T>
std::pair<double, Matrix<T>> label_smoothed_ce_with_grad(const Matrix<T>& logprobs, std::span<const TokenId> reference,
                                                         double eps, std::optional<TokenId> pad = std::nullopt) {
  if (static_cast<std::size_t>(logprobs.rows()) != reference.size()) {
    throw InvalidInput("label_smoothed_ce: reference length does not match distributions");
  }
  if (eps < 0.0 || eps >= 1.0) throw InvalidInput("label_smoothed_ce: smoothing must lie in [0, 1)");
  const Eigen::Index V = logprobs.cols();
  const double smooth_count = static_cast<double>(pad ? V - 1 : V);
  const double smooth_w = eps / smooth_count;

  Matrix<T> grad = Matrix<T>::Zero(logprobs.rows(), V);
  double total = 0.0;
  long count = 0;
  for (Eigen::Index r = 0; r < logprobs.rows(); ++r) {
    const TokenId gold = reference[r];
    if (pad && gold == *pad) continue;
    if (gold < 0 || gold >= V) throw InvalidInput("label_smoothed_ce: token id out of range");
    double smooth_sum = 0.0;
    for (Eigen::Index v = 0; v < V; ++v) {
      if (pad && v == *pad) continue;
      smooth_sum += static_cast<double>(logprobs(r, v));
    }
    total += -((1.0 - eps) * static_cast<double>(logprobs(r, gold)) + smooth_w * smooth_sum);
    ++count;
    // d/dlogits = softmax - target distribution (which sums to one).
    for (Eigen::Index v = 0; v < V; ++v) {
      double target = (pad && v == *pad) ? 0.0 : smooth_w;
      if (v == gold) target += 1.0 - eps;
      grad(r, v) = static_cast<T>(std::exp(static_cast<double>(logprobs(r, v))) - target);
    }
  }
  if (count == 0) return {0.0, grad};
  grad /= static_cast<T>(count);
  return {total / static_cast<double>(count), std::move(grad)};
}

template <class T>
double label_smoothed_ce(const Matrix<T>& logprobs, std::span<const TokenId> reference, double eps,
                         std::optional<TokenId> pad = std::nullopt) {
  return label_smoothed_ce_with_grad(logprobs, reference, eps, pad).first;
}

namespace detail {
inline double xlogx_pair(double p, double q) { return p == 0.0 ? 0.0 : p * std::log(q); }
}  // namespace detail

/// KL objective between a target score p and the predicted probability pr:
///   -[p log pr + (1-p) log(1-pr)] + [p log p + (1-p) log(1-p)],
/// with 0 log 0 = 0 and pr clamped to [kProbClamp, 1 - kProbClamp].
inline double kl_rerank_loss(double p, double pr) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("kl_rerank_loss: target score outside [0, 1]");
  const double q = std::clamp(pr, kProbClamp, 1.0 - kProbClamp);
  const double cross = -(detail::xlogx_pair(p, q) + detail::xlogx_pair(1.0 - p, 1.0 - q));
  const double neg_entropy = detail::xlogx_pair(p, p) + detail::xlogx_pair(1.0 - p, 1.0 - p);
  return cross + neg_entropy;
}

/// d loss / d pr. The entropy term is constant in pr, so this is the plain
/// soft cross-entropy derivative. Zero outside the clamp range.
inline double kl_rerank_grad(double p, double pr) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("kl_rerank_loss: target score outside [0, 1]");
  if (pr < kProbClamp || pr > 1.0 - kProbClamp) return 0.0;
  return -p / pr + (1.0 - p) / (1.0 - pr);
}

}  // namespace mtrerank::optim
