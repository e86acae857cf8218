#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/nnmodel/step_decoder.hpp"
#include "mtrerank/optim/train.hpp"
#include "mtrerank/rerank/dataset.hpp"
#include "mtrerank/rerank/evaluation.hpp"
#include "mtrerank/textdata/synthetic.hpp"

using namespace mtrerank;
using nnmodel::ModelConfig;
using optim::TrainConfig;

namespace {

textdata::SyntheticTaskSpec tiny_task(int fanout) {
  textdata::SyntheticTaskSpec s;
  s.source_vocab_size = 10;
  s.min_length = 2;
  s.max_length = 4;
  s.synonym_fanout = fanout;
  s.reorder_prob = 0.0;
  s.train_size = 200;
  s.dev_size = 30;
  s.test_size = 30;
  return s;
}

ModelConfig tiny_model(int vocab) {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 16;
  c.d_ffn = 32;
  c.vocab_size = vocab;
  c.max_len = 16;
  return c;
}

TrainConfig tiny_train(long steps) {
  TrainConfig t;
  t.base_lr = 3e-3;
  t.warmup_steps = 20;
  t.dropout = 0.0;
  t.max_steps = steps;
  t.batch_token_budget = 128;
  t.eval_interval_steps = 25;
  return t;
}

decode::DecodeConfig short_decode() {
  decode::DecodeConfig d;
  d.max_decode_len = 8;
  return d;
}

}  // namespace

TEST(MakeBatches, CoverEveryIndexOnceWithinBudget) {
  Rng gen(3);
  std::vector<int> lengths;
  for (int i = 0; i < 300; ++i) lengths.push_back(static_cast<int>(gen.between(1, 20)));
  lengths.push_back(50);
  Rng rng(9);
  const auto batches = optim::make_batches(lengths, 40, rng);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    int longest = 0;
    for (auto i : b) {
      seen.insert(i);
      longest = std::max(longest, lengths[i]);
    }
    if (b.size() > 1) {
      EXPECT_LE(static_cast<long>(b.size()) * longest, 40);
    }
  }
  EXPECT_EQ(seen.size(), lengths.size());
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), lengths.size());
}

TEST(MakeBatches, SameStreamSameBatches) {
  const std::vector<int> lengths{3, 5, 2, 8, 8, 1, 4, 4, 6};
  Rng a(5), b(5);
  EXPECT_EQ(optim::make_batches(lengths, 10, a), optim::make_batches(lengths, 10, b));
}

TEST(TrainTranslator, IsDeterministic) {
  const auto task = textdata::gen_synthetic(tiny_task(2));
  const auto cfg = tiny_model(task.vocab.size());
  auto run = [&] {
    std::ostringstream metrics;
    auto r = optim::train_translator(task.train, task.dev, nnmodel::init_params<float>(cfg, 4), tiny_train(40),
                                     short_decode(), &metrics);
    return std::make_pair(r.losses, metrics.str());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(a.first.size(), 40u);
}

TEST(TrainTranslator, ReturnsBestEvaluatedEpoch) {
  const auto task = textdata::gen_synthetic(tiny_task(2));
  std::ostringstream metrics;
  const auto r = optim::train_translator(task.train, task.dev, nnmodel::init_params<float>(tiny_model(task.vocab.size()), 1),
                                         tiny_train(120), short_decode(), &metrics);
  ASSERT_GE(r.dev_bleu.size(), 2u);
  EXPECT_DOUBLE_EQ(r.best_dev_bleu, *std::max_element(r.dev_bleu.begin(), r.dev_bleu.end()));
  EXPECT_DOUBLE_EQ(r.dev_bleu[static_cast<std::size_t>(r.best_epoch)], r.best_dev_bleu);
  EXPECT_DOUBLE_EQ(optim::translator_dev_bleu(r.best, task.dev, short_decode()), r.best_dev_bleu);
  EXPECT_GT(r.best_dev_bleu, r.initial_dev_bleu);

  std::istringstream in(metrics.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,epoch,loss,lr,dev_bleu");
  long rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
    ++rows;
  }
  EXPECT_EQ(rows, r.steps + 1);
}

TEST(TrainTranslator, LearnsNoiseFreeTask) {
  textdata::SyntheticTaskSpec spec;
  spec.synonym_fanout = 1;
  spec.reorder_prob = 0.0;
  const auto task = textdata::gen_synthetic(spec);
  ModelConfig cfg;
  cfg.vocab_size = task.vocab.size();
  cfg.max_len = 64;
  TrainConfig t;
  t.base_lr = 1e-3;
  t.warmup_steps = 200;
  t.dropout = 0.1;
  t.max_steps = 1200;
  t.batch_token_budget = 512;
  const auto r = optim::train_translator(task.train, task.dev, nnmodel::init_params<float>(cfg, 1), t, {});
  EXPECT_GE(r.best_dev_bleu, 0.99);
}

TEST(TrainTranslator, NonFiniteLossDiverges) {
  const auto task = textdata::gen_synthetic(tiny_task(1));
  auto params = nnmodel::init_params<float>(tiny_model(task.vocab.size()), 2);
  params.embedding(5, 3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(optim::train_translator(task.train, task.dev, params, tiny_train(10), short_decode()), TrainingDiverged);
}

TEST(TrainTranslator, RejectsBadInput) {
  const auto task = textdata::gen_synthetic(tiny_task(1));
  const auto params = nnmodel::init_params<float>(tiny_model(task.vocab.size()), 2);
  EXPECT_THROW(optim::train_translator({}, task.dev, params, tiny_train(10), short_decode()), InvalidInput);
  auto bad = tiny_train(10);
  bad.warmup_steps = 0;
  EXPECT_THROW(optim::train_translator(task.train, task.dev, params, bad, short_decode()), ConfigError);
}

TEST(TrainReranker, FitsSingleExample) {
  auto params = nnmodel::init_params<float>(tiny_model(12), 3, true);
  const std::vector<rerank::RerankExample> data{{0, {4, 5, textdata::kEos}, {6, 7, textdata::kEos}, 1.0,
                                                 decode::Origin::kGroundTruth}};
  auto t = tiny_train(300);
  t.base_lr = 1e-2;
  t.eval_interval_steps = 0;
  const auto r = optim::train_reranker(data, params, t, {});
  EXPECT_GE(nnmodel::score_candidate(r.best, data[0].source, data[0].candidate), 0.99);
}

TEST(TrainReranker, HeldOutLossDropsAndBestIsArgmax) {
  const auto task = textdata::gen_synthetic(tiny_task(2));
  const auto cfg = tiny_model(task.vocab.size());
  const auto tr = optim::train_translator(task.train, task.dev, nnmodel::init_params<float>(cfg, 5), tiny_train(150),
                                          short_decode());
  const nnmodel::StepDecoder<float> dec(tr.best);
  rerank::RerankDatasetSpec spec;
  spec.n = 3;
  spec.decode = short_decode();
  const auto train_data = rerank::build_rerank_dataset(task.train, dec, spec);
  const auto held_out = rerank::build_rerank_dataset(task.test, dec, spec);
  const auto dev = rerank::make_eval_items(task.dev, rerank::beam_candidates(dec, task.dev, short_decode()));

  const auto fresh = nnmodel::init_reranker_from_translator(tr.best, 7);
  auto t = tiny_train(300);
  t.base_lr = 1e-3;
  const auto r = optim::train_reranker(train_data, fresh, t, dev);
  EXPECT_LT(optim::mean_rerank_loss(r.best, held_out), 0.9 * optim::mean_rerank_loss(fresh, held_out));

  ASSERT_FALSE(r.evals.empty());
  double best = -1.0;
  for (const auto& [step, bleu] : r.evals) best = std::max(best, bleu);
  EXPECT_DOUBLE_EQ(r.best_dev_bleu, best);
  auto rescored = dev;
  rerank::attach_reranker_scores(rescored, r.best);
  EXPECT_DOUBLE_EQ(rerank::bleur_corpus_bleu(rescored), r.best_dev_bleu);
  EXPECT_EQ(r.evals.back().first, r.steps);
}

TEST(TrainReranker, RequiresHeadAndData) {
  const auto no_head = nnmodel::init_params<float>(tiny_model(12), 3);
  const std::vector<rerank::RerankExample> data{{0, {4, textdata::kEos}, {6, textdata::kEos}, 0.5,
                                                 decode::Origin::kGreedy}};
  EXPECT_THROW(optim::train_reranker(data, no_head, tiny_train(5), {}), ConfigError);
  EXPECT_THROW(optim::train_reranker({}, nnmodel::init_params<float>(tiny_model(12), 3, true), tiny_train(5), {}),
               InvalidInput);
}
