#pragma once

// Training loops for the translator and the reranker, with length-bucketed
// token-budget batching and best-checkpoint selection on dev BLEU.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtrerank/common.hpp"
#include "mtrerank/decode/search.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/nnmodel/step_decoder.hpp"
#include "mtrerank/optim/adam.hpp"
#include "mtrerank/optim/objectives.hpp"
#include "mtrerank/rerank/dataset.hpp"
#include "mtrerank/rerank/evaluation.hpp"
#include "mtrerank/rerank/report.hpp"
#include "mtrerank/rng.hpp"
#include "mtrerank/textdata/corpus.hpp"

namespace mtrerank::optim {

struct TrainConfig {
  double base_lr = 5e-4;
  long warmup_steps = 1000;
  double weight_decay = 1e-4;
  double dropout = 0.3;
  double label_smoothing = 0.1;
  long max_steps = 40000;
  /// 0 means no epoch limit.
  long max_epochs = 0;
  long batch_token_budget = 4096;
  long eval_interval_steps = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (base_lr < 0 || weight_decay < 0 || max_steps < 0 || max_epochs < 0 || eval_interval_steps < 0) {
      throw ConfigError("train config: values must be nonnegative");
    }
    if (warmup_steps < 1) throw ConfigError("train config: warmup_steps must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("train config: label_smoothing in [0, 1)");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train config: dropout in [0, 1)");
    if (batch_token_budget < 1) throw ConfigError("train config: batch_token_budget must be >= 1");
  }
};

/// Groups example indices into batches of similar length whose padded size
/// (count x longest) stays within `budget`; a single over-long example forms
/// its own batch. Indices are shuffled before the stable length sort and the
/// batch order is shuffled afterwards, both with `rng`.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const int> lengths, long budget, Rng& rng) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  int longest = 0;
  for (std::size_t idx : order) {
    const int l = std::max(longest, lengths[idx]);
    if (!cur.empty() && static_cast<long>(cur.size() + 1) * l > budget) {
      batches.push_back(std::move(cur));
      cur.clear();
      longest = 0;
    }
    cur.push_back(idx);
    longest = std::max(longest, lengths[idx]);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  rng.shuffle(batches);
  return batches;
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Tracks consecutive non-finite losses; two in a row abort training.
struct DivergenceGuard {
  int consecutive = 0;
  bool bad(double loss) {
    if (std::isfinite(loss)) {
      consecutive = 0;
      return false;
    }
    if (++consecutive >= 2) throw TrainingDiverged("training diverged: two consecutive non-finite losses");
    return true;
  }
};

/// Runs one optimizer update; returns false if the step was skipped.
template <class T>
bool apply_update(nnmodel::ModelParams<T>& params, const nnmodel::ModelParams<T>& grads, AdamState<T>& adam,
                  double lr, double wd, DivergenceGuard& guard) {
  try {
    adam_step(params, grads, adam, lr, wd);
    return true;
  } catch (const NonFiniteGradient&) {
    guard.bad(std::nan(""));
    return false;
  }
}

}  // namespace detail

inline double translator_dev_bleu(const nnmodel::ModelParams<float>& params, const textdata::Corpus& dev,
                                  const decode::DecodeConfig& cfg) {
  const nnmodel::StepDecoder<float> dec(params);
  const auto items = rerank::make_eval_items(dev, rerank::beam_candidates(dec, dev, cfg));
  return rerank::baseline_corpus_bleu(items);
}

struct TranslatorResult {
  nnmodel::ModelParams<float> best;
  double initial_dev_bleu = 0.0;
  double best_dev_bleu = 0.0;
  long best_epoch = 0;
  std::vector<double> dev_bleu;  // index = epoch, 0 = before training
  std::vector<double> losses;    // per step
  long steps = 0;
};

/// Label-smoothed cross-entropy training. Dev corpus BLEU (beam search,
/// token-averaged choice) is measured before training and after every
/// epoch; the best epoch's parameters are returned.
inline TranslatorResult train_translator(const textdata::Corpus& train, const textdata::Corpus& dev,
                                         nnmodel::ModelParams<float> params, const TrainConfig& cfg,
                                         const decode::DecodeConfig& eval_decode, std::ostream* metrics = nullptr,
                                         std::ostream* log = nullptr) {
  cfg.validate();
  if (train.empty()) throw InvalidInput("train_translator: empty training corpus");
  if (dev.empty()) throw InvalidInput("train_translator: empty dev corpus");
  params.config.dropout = cfg.dropout;

  std::vector<int> lengths;
  for (const auto& p : train) lengths.push_back(static_cast<int>(std::max(p.source.size(), p.reference.size())));

  TranslatorResult res;
  res.initial_dev_bleu = translator_dev_bleu(params, dev, eval_decode);
  res.dev_bleu.push_back(res.initial_dev_bleu);
  res.best = params;
  res.best_dev_bleu = res.initial_dev_bleu;
  if (metrics) *metrics << "step,epoch,loss,lr,dev_bleu\n0,0,,," << detail::fmt(res.initial_dev_bleu) << '\n';
  if (log) *log << "epoch 0 dev_bleu " << detail::fmt(res.initial_dev_bleu, "%.4f") << '\n';

  AdamState<float> adam;
  detail::DivergenceGuard guard;
  long step = 0;
  for (long epoch = 1; step < cfg.max_steps && (cfg.max_epochs == 0 || epoch <= cfg.max_epochs); ++epoch) {
    Rng order_rng(cfg.seed, "batch-order", {static_cast<std::uint64_t>(epoch)});
    const auto batches = make_batches(lengths, cfg.batch_token_budget, order_rng);
    double loss_sum = 0.0;
    long loss_n = 0;
    std::string last_row;
    for (const auto& b : batches) {
      if (step >= cfg.max_steps) break;
      ++step;
      std::vector<const textdata::TokenizedPair*> batch;
      for (std::size_t i : b) batch.push_back(&train[i]);
      auto grads = nnmodel::zeros_like(params);
      const double lr = lr_at(step, cfg.base_lr, cfg.warmup_steps);
      const double loss = translator_objective<float>(params, batch, cfg.label_smoothing, &grads,
                                                      substream_seed(cfg.seed, "dropout", {static_cast<std::uint64_t>(step)}));
      res.losses.push_back(loss);
      if (!guard.bad(loss) && detail::apply_update(params, grads, adam, lr, cfg.weight_decay, guard)) {
        loss_sum += loss;
        ++loss_n;
      }
      if (metrics) {
        if (!last_row.empty()) *metrics << last_row << ",\n";
        last_row = std::to_string(step) + ',' + std::to_string(epoch) + ',' + detail::fmt(loss) + ',' +
                   detail::fmt(lr, "%.8g");
      }
    }
    const double bleu = translator_dev_bleu(params, dev, eval_decode);
    res.dev_bleu.push_back(bleu);
    if (metrics && !last_row.empty()) *metrics << last_row << ',' << detail::fmt(bleu) << '\n';
    if (log) {
      *log << "epoch " << epoch << " step " << step << " loss "
           << detail::fmt(loss_n ? loss_sum / loss_n : std::nan(""), "%.4f") << " dev_bleu " << detail::fmt(bleu, "%.4f")
           << '\n';
    }
    if (bleu > res.best_dev_bleu) {
      res.best_dev_bleu = bleu;
      res.best_epoch = epoch;
      res.best = params;
    }
  }
  res.steps = step;
  return res;
}

inline int example_length(const rerank::RerankExample& ex) {
  return static_cast<int>(std::max(ex.source.size(), ex.candidate.size() + 1));
}

/// Mean KL objective over `data`, evaluated without dropout.
inline double mean_rerank_loss(const nnmodel::ModelParams<float>& params, std::span<const rerank::RerankExample> data,
                               std::size_t chunk = 64) {
  if (data.empty()) throw InvalidInput("mean_rerank_loss: no examples");
  double total = 0.0;
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    std::vector<ScoredCandidate> batch;
    for (std::size_t i = s; i < std::min(data.size(), s + chunk); ++i) {
      batch.push_back({&data[i].source, &data[i].candidate, data[i].p});
    }
    total += reranker_objective<float>(params, batch) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

struct RerankerResult {
  nnmodel::ModelParams<float> best;
  double best_dev_bleu = -1.0;
  long best_step = 0;
  std::vector<std::pair<long, double>> evals;  // (step, dev BLEU)
  long steps = 0;
};

/// Fine-tunes every parameter with the KL objective. Every
/// eval_interval_steps (and after the final step) the dev beam candidates
/// in `dev` are reranked by P_r; the checkpoint with the best corpus BLEU
/// of the top choice is kept, the earliest on ties.
inline RerankerResult train_reranker(const std::vector<rerank::RerankExample>& data, nnmodel::ModelParams<float> params,
                                     const TrainConfig& cfg, std::vector<rerank::EvalItem> dev,
                                     std::ostream* metrics = nullptr, std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("train_reranker: empty dataset");
  if (!params.head) throw ConfigError("train_reranker: model has no head");
  params.config.dropout = cfg.dropout;

  std::vector<int> lengths;
  for (const auto& ex : data) lengths.push_back(example_length(ex));

  RerankerResult res;
  res.best = params;
  auto evaluate = [&](long step) {
    if (dev.empty()) {
      res.best = params;
      res.best_step = step;
      return std::nan("");
    }
    rerank::attach_reranker_scores(dev, params);
    const double bleu = rerank::bleur_corpus_bleu(dev);
    res.evals.emplace_back(step, bleu);
    if (bleu > res.best_dev_bleu) {
      res.best_dev_bleu = bleu;
      res.best_step = step;
      res.best = params;
    }
    if (log) {
      std::vector<std::vector<double>> pr, truth;
      for (const auto& it : dev) {
        pr.push_back(it.pr);
        truth.push_back(it.bleu);
      }
      const auto r = rerank::try_averaged_pearson(pr, truth);
      *log << "step " << step << " dev_bleu " << detail::fmt(bleu, "%.4f") << " dev_pearson "
           << (r ? detail::fmt(r->mean, "%.4f") : std::string("nan")) << '\n';
    }
    return bleu;
  };

  if (metrics) *metrics << "step,epoch,loss,lr,dev_bleu\n";
  AdamState<float> adam;
  detail::DivergenceGuard guard;
  long step = 0;
  long last_eval = -1;
  for (long epoch = 1; step < cfg.max_steps && (cfg.max_epochs == 0 || epoch <= cfg.max_epochs); ++epoch) {
    Rng order_rng(cfg.seed, "rerank-batch-order", {static_cast<std::uint64_t>(epoch)});
    const auto batches = make_batches(lengths, cfg.batch_token_budget, order_rng);
    for (const auto& b : batches) {
      if (step >= cfg.max_steps) break;
      ++step;
      std::vector<ScoredCandidate> batch;
      for (std::size_t i : b) batch.push_back({&data[i].source, &data[i].candidate, data[i].p});
      auto grads = nnmodel::zeros_like(params);
      const double lr = lr_at(step, cfg.base_lr, cfg.warmup_steps);
      const double loss = reranker_objective<float>(params, batch, &grads,
                                                    substream_seed(cfg.seed, "rerank-dropout", {static_cast<std::uint64_t>(step)}));
      if (!guard.bad(loss)) detail::apply_update(params, grads, adam, lr, cfg.weight_decay, guard);
      std::string bleu_field;
      if (cfg.eval_interval_steps > 0 && step % cfg.eval_interval_steps == 0) {
        bleu_field = detail::fmt(evaluate(step));
        last_eval = step;
      }
      if (metrics) {
        *metrics << step << ',' << epoch << ',' << detail::fmt(loss) << ',' << detail::fmt(lr, "%.8g") << ','
                 << bleu_field << '\n';
      }
    }
  }
  if (last_eval != step) {
    const double bleu = evaluate(step);
    if (metrics) *metrics << step << ",,,," << detail::fmt(bleu) << '\n';
  }
  res.steps = step;
  return res;
}

}  // namespace mtrerank::optim
