#pragma once

#include <cmath>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/nnmodel/params.hpp"

namespace mtrerank::optim {

using nnmodel::Matrix;

/// Linear warmup to base_lr at warmup_steps, then inverse-square-root decay.
inline double lr_at(long step, double base_lr, long warmup_steps) {
  if (step < 1) step = 1;
  if (warmup_steps < 1) warmup_steps = 1;
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  return base_lr * std::sqrt(static_cast<double>(warmup_steps) / static_cast<double>(step));
}

template <class T>
struct AdamState {
  std::vector<Matrix<T>> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// One Adam update with bias correction and decoupled weight decay
/// (params *= 1 - lr * weight_decay before the Adam step). If any gradient
/// is non-finite nothing changes and NonFiniteGradient is thrown.
template <class T>
void adam_step(const std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads, AdamState<T>& state,
               double lr, double weight_decay) {
  if (params.size() != grads.size()) throw InvalidInput("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
      throw InvalidInput("adam_step: shape mismatch");
    }
    if (!grads[i]->allFinite()) throw NonFiniteGradient("adam_step: non-finite gradient, step skipped");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T decay = static_cast<T>(1.0 - lr * weight_decay);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (weight_decay != 0.0) p *= decay;
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

template <class T>
void adam_step(nnmodel::ModelParams<T>& params, const nnmodel::ModelParams<T>& grads, AdamState<T>& state, double lr,
               double weight_decay) {
  std::vector<Matrix<T>*> ps;
  std::vector<const Matrix<T>*> gs;
  for (auto& [name, t] : nnmodel::named_tensors(params)) ps.push_back(t);
  for (const auto& [name, t] : nnmodel::named_tensors(grads)) gs.push_back(t);
  adam_step(ps, gs, state, lr, weight_decay);
}

}  // namespace mtrerank::optim
