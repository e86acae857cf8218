#pragma once

// Central finite-difference gradient checking over every tensor of a model.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mtrerank/nnmodel/params.hpp"

namespace gradcheck {

struct TensorError {
  std::string name;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

/// `loss(params, grads_or_null)` must return the scalar loss and, when
/// given a gradient buffer, accumulate d loss / d params into it.
/// Relative error per tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||).
template <class LossFn>
std::vector<TensorError> check(mtrerank::nnmodel::ModelParams<double>& params, LossFn&& loss, double h = 1e-5) {
  auto grads = mtrerank::nnmodel::zeros_like(params);
  loss(params, &grads);
  auto analytic = mtrerank::nnmodel::named_tensors(grads);
  auto tensors = mtrerank::nnmodel::named_tensors(params);
  std::vector<TensorError> out;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& w = *tensors[t].second;
    const auto& a = *analytic[t].second;
    double diff2 = 0, a2 = 0, n2 = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = loss(params, nullptr);
      w.data()[i] = saved - h;
      const double down = loss(params, nullptr);
      w.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double an = a.data()[i];
      diff2 += (an - numeric) * (an - numeric);
      a2 += an * an;
      n2 += numeric * numeric;
    }
    TensorError e{tensors[t].first, 0.0, std::sqrt(a2), std::sqrt(n2)};
    const double denom = std::max(e.analytic_norm, e.numeric_norm);
    e.relative_error = denom < 1e-10 ? 0.0 : std::sqrt(diff2) / denom;
    out.push_back(e);
  }
  return out;
}

}  // namespace gradcheck
