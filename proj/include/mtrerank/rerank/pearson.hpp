#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "mtrerank/common.hpp"

namespace mtrerank::rerank {

inline bool is_constant(std::span<const double> v) {
  for (double x : v) {
    if (x != v.front()) return false;
  }
  return true;
}

/// Pearson correlation, or nullopt when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("pearson: length mismatch");
  if (x.size() < 2 || is_constant(x) || is_constant(y)) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct PearsonSummary {
  double mean = 0.0;
  long included = 0;
  long excluded = 0;
};

/// Mean over examples of the per-example correlation between a scorer's
/// candidate scores and the candidates' true BLEU. Examples with zero
/// variance on either side are skipped and counted.
inline PearsonSummary averaged_pearson(const std::vector<std::vector<double>>& scores,
                                       const std::vector<std::vector<double>>& bleus) {
  if (scores.size() != bleus.size()) throw InvalidInput("averaged_pearson: example count mismatch");
  PearsonSummary s;
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (auto r = pearson(scores[i], bleus[i])) {
      sum += *r;
      ++s.included;
    } else {
      ++s.excluded;
    }
  }
  if (s.included == 0) throw UndefinedCorrelation("averaged_pearson: every example has zero variance");
  s.mean = sum / static_cast<double>(s.included);
  return s;
}

}  // namespace mtrerank::rerank
