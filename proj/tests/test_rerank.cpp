#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mtrerank/bleu.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/nnmodel/transformer.hpp"
#include "mtrerank/rerank/dataset.hpp"
#include "mtrerank/rerank/pearson.hpp"
#include "mtrerank/rerank/policies.hpp"
#include "mtrerank/rerank/report.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "toy_models.hpp"

using namespace mtrerank;
using namespace mtrerank::rerank;

namespace {

Candidate cand(TokenIds tokens, double token_avg) {
  Candidate c;
  c.tokens = std::move(tokens);
  c.token_avg = token_avg;
  return c;
}

std::vector<Candidate> with_avgs(std::initializer_list<double> avgs) {
  std::vector<Candidate> out;
  TokenId t = 10;
  for (double a : avgs) out.push_back(cand({t++, textdata::kEos}, a));
  return out;
}

Permutation perm(std::initializer_list<std::size_t> p) { return Permutation(p); }

// A model that always emits `reference` with certainty.
toy::TableModel deterministic_model(int vocab, TokenIds reference) {
  return toy::TableModel(vocab, textdata::kEos, [=](const TokenIds&, const TokenIds& prefix) {
    std::vector<double> lp(vocab, -std::numeric_limits<double>::infinity());
    lp[reference[std::min(prefix.size(), reference.size() - 1)]] = 0.0;
    return lp;
  });
}

textdata::Corpus toy_corpus(int sentences, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  textdata::Corpus c;
  for (int i = 0; i < sentences; ++i) {
    textdata::TokenizedPair p;
    const auto len = rng.between(2, 4);
    for (long k = 0; k < len; ++k) p.source.push_back(static_cast<TokenId>(textdata::kNumReserved + rng.below(vocab - 4)));
    p.source.push_back(textdata::kEos);
    for (long k = 0; k < len; ++k) p.reference.push_back(static_cast<TokenId>(textdata::kNumReserved + rng.below(vocab - 4)));
    p.reference.push_back(textdata::kEos);
    c.push_back(std::move(p));
  }
  return c;
}

RerankDatasetSpec toy_spec(int n) {
  RerankDatasetSpec s;
  s.n = n;
  s.decode.topk_k = 4;
  s.decode.max_decode_len = 6;
  s.seed = 11;
  return s;
}

}  // namespace

TEST(Baseline, SortsByTokenAverage) {
  EXPECT_EQ(rank_baseline(with_avgs({-2.0, -1.0, -3.0})), perm({1, 0, 2}));
  EXPECT_EQ(rank_baseline(with_avgs({-4.0})), perm({0}));
  EXPECT_THROW(rank_baseline({}), InvalidInput);
}

TEST(Baseline, TokenAverageFromLogprobs) {
  const auto c = decode::make_candidate({5, 6, textdata::kEos}, {-1.0, -2.0, -3.0}, decode::Origin::kBeam);
  EXPECT_DOUBLE_EQ(c.token_avg, -2.0);
}

TEST(Baseline, TiesKeepBeamOrder) { EXPECT_EQ(rank_baseline(with_avgs({-1.0, -2.0, -1.0, -2.0})), perm({0, 2, 1, 3})); }

TEST(Baseline, ArgmaxInvariantUnderMonotoneTransform) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Candidate> a, b;
    for (int i = 0; i < 5; ++i) {
      const double s = rng.uniform(-5.0, 0.0);
      a.push_back(cand({textdata::kEos}, s));
      b.push_back(cand({textdata::kEos}, std::exp(3.0 * s) - 7.0));
    }
    EXPECT_EQ(rank_baseline(a).front(), rank_baseline(b).front());
  }
}

TEST(Bleur, SortsByProbability) {
  const std::vector<double> pr{0.2, 0.9, 0.5};
  EXPECT_EQ(rank_bleur(pr), perm({1, 2, 0}));
}

TEST(Bleur, ZeroHeadPreservesBeamOrder) {
  nnmodel::ModelConfig cfg;
  cfg.d_model = 8;
  cfg.d_ffn = 16;
  cfg.layers = 1;
  cfg.vocab_size = 12;
  cfg.max_len = 16;
  auto params = nnmodel::init_params<double>(cfg, 2, true);
  params.head->weight.setZero();
  params.head->bias.setZero();
  const std::vector<TokenIds> cands{{5, 6, textdata::kEos}, {7, textdata::kEos}, {8, 9, 10, textdata::kEos}};
  const auto pr = nnmodel::score_candidates(params, TokenIds{4, 5, textdata::kEos}, cands);
  for (double p : pr) EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_EQ(rank_bleur(pr), perm({0, 1, 2}));
}

TEST(Hybrid, WorkedExampleAndEndpoints) {
  const auto c = cand({textdata::kEos}, -2.0);
  EXPECT_NEAR(hybrid_score(c, 0.5, 0.5), -1.3466, 1e-4);
  EXPECT_DOUBLE_EQ(hybrid_score(c, 0.3, 0.0), -2.0);
  EXPECT_DOUBLE_EQ(hybrid_score(c, 0.3, 1.0), std::log(0.3));
}

TEST(Hybrid, ClampsProbability) {
  const auto c = cand({textdata::kEos}, -1.0);
  EXPECT_DOUBLE_EQ(hybrid_score(c, 0.0, 1.0), std::log(1e-7));
  EXPECT_TRUE(std::isfinite(hybrid_score(c, 1.0, 1.0)));
}

TEST(Hybrid, EndpointPermutationsMatchOtherPolicies) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Candidate> cs;
    std::vector<double> pr;
    for (int i = 0; i < 5; ++i) {
      cs.push_back(cand({textdata::kEos}, rng.uniform(-4.0, 0.0)));
      pr.push_back(rng.uniform(0.01, 0.99));
    }
    EXPECT_EQ(rank_hybrid(cs, pr, 0.0), rank_baseline(cs));
    EXPECT_EQ(rank_hybrid(cs, pr, 1.0), rank_bleur(pr));
  }
  EXPECT_THROW(hybrid_scores(with_avgs({-1.0, -2.0}), std::vector<double>{0.5}, 0.5), InvalidInput);
}

TEST(Oracle, PicksHighestBleu) {
  const TokenIds ref{5, 6, 7, 8, textdata::kEos};
  std::vector<Candidate> cs{cand({5, 9, 9, 9, textdata::kEos}, 0), cand({5, 6, 7, 9, textdata::kEos}, 0),
                            cand({5, 6, 9, 9, textdata::kEos}, 0)};
  EXPECT_EQ(rank_oracle(cs, ref).front(), 1u);
  cs.push_back(cand(ref, -9.0));
  const auto order = rank_oracle(cs, ref);
  EXPECT_EQ(order.front(), 3u);
  EXPECT_DOUBLE_EQ(oracle_scores(cs, ref)[3], 1.0);
}

TEST(Oracle, DominatesEveryPolicyOnRandomSets) {
  Rng rng(21);
  std::vector<EvalItem> items;
  for (int s = 0; s < 40; ++s) {
    TokenIds ref;
    for (int k = 0; k < 6; ++k) ref.push_back(static_cast<TokenId>(4 + rng.below(5)));
    ref.push_back(textdata::kEos);
    std::vector<Candidate> cs;
    std::vector<double> pr;
    for (int c = 0; c < 5; ++c) {
      TokenIds t;
      for (int k = 0; k < 4 + static_cast<int>(rng.below(4)); ++k) t.push_back(static_cast<TokenId>(4 + rng.below(5)));
      t.push_back(textdata::kEos);
      cs.push_back(cand(t, rng.uniform(-3.0, 0.0)));
      pr.push_back(rng.uniform(0.0, 1.0));
    }
    items.push_back(make_eval_item({4, textdata::kEos}, ref, cs, pr));
  }
  const auto r = evaluate_policies(items, 0.3, "dev", 1);
  ASSERT_EQ(r.policies.size(), 4u);
  EXPECT_EQ(r.policies[0].name, "Baseline");
  EXPECT_EQ(r.policies[3].name, "Oracle");
  for (const auto& p : r.policies) EXPECT_LE(p.mean_sentence_bleu, r.policy("Oracle").mean_sentence_bleu);
  EXPECT_NO_THROW(check_oracle_dominance(r));
}

TEST(Oracle, DominanceCheckRejectsViolations) {
  RerankReport r;
  r.policies = {{"Baseline", 0.3, 0.5}, {"Oracle", 0.3, 0.4}};
  EXPECT_THROW(check_oracle_dominance(r), Error);
}

TEST(TuneAlpha, SingleValueGrid) {
  std::vector<EvalItem> dev{make_eval_item({4, textdata::kEos}, {5, 6, textdata::kEos},
                                           {cand({5, 6, textdata::kEos}, -1.0), cand({7, textdata::kEos}, -2.0)},
                                           {0.4, 0.6})};
  const auto t = tune_alpha(dev, {0.7}, false);
  EXPECT_DOUBLE_EQ(t.alpha, 0.7);
  ASSERT_EQ(t.table.size(), 1u);
  EXPECT_THROW(tune_alpha(dev, {}), InvalidInput);
}

// Half the items need alpha > 0.45 to pick the reference, the other half
// alpha < 0.55, so only 0.5 on the default grid gets every item right.
TEST(TuneAlpha, ConstructedDevSetSelectsHalf) {
  const TokenIds ref{5, 6, 7, 8, textdata::kEos};
  const TokenIds wrong{9, 10, 11, 12, textdata::kEos};
  auto item = [&](double avg_gap, double log_gap) {
    const double pr_wrong = 0.2;
    return make_eval_item({4, textdata::kEos}, ref, {cand(ref, -2.0), cand(wrong, -2.0 - avg_gap)},
                          {pr_wrong * std::exp(log_gap), pr_wrong});
  };
  std::vector<EvalItem> dev;
  for (int i = 0; i < 4; ++i) {
    dev.push_back(item(-1.0, 1.0 / 0.45 - 1.0));
    dev.push_back(item(1.0, -(1.0 / 0.55 - 1.0)));
  }
  const auto t = tune_alpha(dev, default_alpha_grid());
  EXPECT_DOUBLE_EQ(t.alpha, 0.5);
  EXPECT_DOUBLE_EQ(t.best_bleu, 1.0);
  ASSERT_EQ(t.table.size(), 11u);
  for (std::size_t i = 0; i < t.table.size(); ++i) {
    EXPECT_NEAR(t.table[i].alpha, 0.1 * static_cast<double>(i), 1e-12);
    EXPECT_EQ(t.table[i].eligible, i != 0 && i != 10);
    if (std::abs(t.table[i].alpha - 0.5) > 1e-9) {
      EXPECT_LT(t.table[i].corpus_bleu, 1.0);
    }
  }
}

TEST(TuneAlpha, TiesGoToSmallestAlpha) {
  std::vector<EvalItem> dev{make_eval_item({4, textdata::kEos}, {5, 6, textdata::kEos},
                                           {cand({5, 6, textdata::kEos}, -1.0), cand({7, textdata::kEos}, -2.0)},
                                           {0.9, 0.1})};
  EXPECT_DOUBLE_EQ(tune_alpha(dev, {0.6, 0.3, 0.9}).alpha, 0.3);
}

TEST(Pearson, WorkedExamples) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_NEAR(*pearson(s, std::vector<double>{0.1, 0.2, 0.3}), 1.0, 1e-12);
  EXPECT_NEAR(*pearson(s, std::vector<double>{0.3, 0.2, 0.1}), -1.0, 1e-12);
  EXPECT_NEAR(*pearson(s, std::vector<double>{0.1, 0.3, 0.2}), 0.5, 1e-12);
}

TEST(Pearson, ZeroVarianceExamplesAreExcluded) {
  const auto r = averaged_pearson({{1, 2, 3}, {1, 1, 1}, {1, 2, 3}, {4}}, {{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}, {0.2, 0.2, 0.2}, {0.5}});
  EXPECT_EQ(r.included, 1);
  EXPECT_EQ(r.excluded, 3);
  EXPECT_NEAR(r.mean, 1.0, 1e-12);
}

TEST(Pearson, AllExcludedIsUndefined) {
  EXPECT_THROW(averaged_pearson({{1, 1}}, {{0.1, 0.2}}), UndefinedCorrelation);
  EXPECT_FALSE(try_averaged_pearson({{1, 1}}, {{0.1, 0.2}}).has_value());
  EXPECT_THROW(averaged_pearson({{1, 2}}, {}), InvalidInput);
}

TEST(Dataset, AtMostFivePerSourceAtNOne) {
  const auto model = toy::random_model(10, textdata::kEos, 4, 1.0);
  const auto corpus = toy_corpus(20, 10, 1);
  const auto spec = toy_spec(1);
  const auto data = build_rerank_dataset(corpus, model, spec);
  std::map<std::size_t, int> per;
  for (const auto& ex : data) ++per[ex.sentence];
  EXPECT_EQ(per.size(), corpus.size());
  for (const auto& [s, c] : per) EXPECT_LE(c, 5);
  EXPECT_EQ(spec.max_per_source(), 5u);
}

TEST(Dataset, BoundHoldsAndNoDuplicatesPerSource) {
  const auto model = toy::random_model(10, textdata::kEos, 6, 0.5);
  const auto corpus = toy_corpus(15, 10, 2);
  const auto spec = toy_spec(4);
  const auto data = build_rerank_dataset(corpus, model, spec);
  std::map<std::size_t, std::set<TokenIds>> per;
  for (const auto& ex : data) EXPECT_TRUE(per[ex.sentence].insert(ex.candidate).second);
  for (const auto& [s, set] : per) EXPECT_LE(set.size(), spec.max_per_source());
}

TEST(Dataset, DeterministicModelYieldsOnlyGroundTruth) {
  const TokenIds ref{5, 6, 7, textdata::kEos};
  const auto model = deterministic_model(9, ref);
  textdata::Corpus corpus{{{4, 4, textdata::kEos}, ref}};
  const auto data = build_rerank_dataset(corpus, model, toy_spec(3));
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].origin, decode::Origin::kGroundTruth);
  EXPECT_DOUBLE_EQ(data[0].p, 1.0);
}

TEST(Dataset, GroundTruthFirstWithPOne) {
  const auto model = toy::random_model(10, textdata::kEos, 9, 1.0);
  const auto corpus = toy_corpus(10, 10, 3);
  const auto data = build_rerank_dataset(corpus, model, toy_spec(2));
  std::set<std::size_t> seen;
  for (const auto& ex : data) {
    if (seen.insert(ex.sentence).second) {
      EXPECT_EQ(ex.origin, decode::Origin::kGroundTruth);
      EXPECT_EQ(ex.candidate, corpus[ex.sentence].reference);
      EXPECT_DOUBLE_EQ(ex.p, 1.0);
    }
  }
}

TEST(Dataset, TargetsRecomputeExactly) {
  const auto model = toy::random_model(10, textdata::kEos, 12, 0.5);
  const auto corpus = toy_corpus(12, 10, 4);
  for (const auto& ex : build_rerank_dataset(corpus, model, toy_spec(3))) {
    EXPECT_EQ(ex.source, corpus[ex.sentence].source);
    const auto b = bleu::sentence_bleu(bleu::strip_eos(ex.candidate, textdata::kEos),
                                       bleu::strip_eos(corpus[ex.sentence].reference, textdata::kEos));
    EXPECT_EQ(ex.p, b.score);
  }
}

TEST(Dataset, BuildIsIdempotentAndRoundTrips) {
  const auto model = toy::random_model(10, textdata::kEos, 14, 0.5);
  const auto corpus = toy_corpus(10, 10, 5);
  const auto a = build_rerank_dataset(corpus, model, toy_spec(3));
  const auto b = build_rerank_dataset(corpus, model, toy_spec(3));
  std::ostringstream fa, fb;
  write_dataset(fa, a);
  write_dataset(fb, b);
  EXPECT_EQ(fa.str(), fb.str());
  std::istringstream in(fa.str());
  EXPECT_EQ(read_dataset(in), a);
}

TEST(Dataset, RejectsBadRecords) {
  std::istringstream bad_p(R"({"sentence":0,"source":[4,2],"candidate":[5,2],"p":1.5,"origin":"greedy"})");
  EXPECT_THROW(read_dataset(bad_p), InvalidInput);
  std::istringstream bad_origin(R"({"sentence":0,"source":[4,2],"candidate":[5,2],"p":0.5,"origin":"sampled"})");
  EXPECT_THROW(read_dataset(bad_origin), InvalidInput);
}

TEST(Dataset, SummaryCountsOrigins) {
  const auto model = toy::random_model(10, textdata::kEos, 4, 1.0);
  const auto corpus = toy_corpus(6, 10, 1);
  const auto spec = toy_spec(2);
  const auto data = build_rerank_dataset(corpus, model, spec);
  const auto s = dataset_summary(data, spec);
  long total = 0;
  for (const auto& [k, v] : s["by_origin"].items()) total += v.get<long>();
  EXPECT_EQ(total, static_cast<long>(data.size()));
  EXPECT_EQ(s["by_origin"]["ground-truth"].get<long>(), 6);
  EXPECT_EQ(s["bound_per_source"].get<long>(), 7);
}

TEST(Report, CsvRowsMatchHeaders) {
  std::vector<EvalItem> items;
  for (int i = 0; i < 3; ++i) {
    items.push_back(make_eval_item({4, textdata::kEos}, {5, 6, 7, textdata::kEos},
                                   {cand({5, 6, 7, textdata::kEos}, -1.0 - i), cand({5, 6, 9, textdata::kEos}, -0.5)},
                                   {0.7, 0.2}));
  }
  const auto r = evaluate_policies(items, 0.4, "test", 3);
  auto check = [](const std::string& csv, std::size_t rows) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    const auto cols = std::count(line.begin(), line.end(), ',');
    std::size_t n = 0;
    while (std::getline(in, line)) {
      EXPECT_EQ(std::count(line.begin(), line.end(), ','), cols) << line;
      ++n;
    }
    EXPECT_EQ(n, rows);
  };
  std::ostringstream t, c, a;
  write_table_csv(t, r);
  write_correlation_csv(c, r);
  write_alpha_csv(a, tune_alpha(items, default_alpha_grid()));
  check(t.str(), 4);
  check(c.str(), 3);
  check(a.str(), 11);
  EXPECT_EQ(to_json(r)["systems"].size(), 4u);
}
