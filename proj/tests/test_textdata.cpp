#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "mtrerank/textdata/bpe.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "mtrerank/textdata/synthetic.hpp"
#include "mtrerank/textdata/vocab.hpp"

using namespace mtrerank;
using namespace mtrerank::textdata;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mtrerank_textdata";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Vocab, ReservedOrder) {
  Vocab v;
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kBos), "<s>");
  EXPECT_EQ(v.token(kEos), "</s>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.add("x"), 4);
  EXPECT_EQ(v.add("x"), 4);
  EXPECT_EQ(v.id("nope"), kUnk);
}

TEST(Bpe, FirstMergeMostFrequentPair) {
  const auto m = bpe_train({"ab ab ab"}, 10);
  ASSERT_FALSE(m.merges.empty());
  EXPECT_EQ(m.merges.front(), (MergePair{"a", "b"}));
}

TEST(Bpe, RepeatedLetterPairWins) {
  const auto m = bpe_train({"aa aa", "aab"}, 10);
  ASSERT_FALSE(m.merges.empty());
  EXPECT_EQ(m.merges.front(), (MergePair{"a", "a"}));
}

TEST(Bpe, NothingToMerge) {
  const auto m = bpe_train({"a"}, 6);
  EXPECT_TRUE(m.merges.empty());
  EXPECT_EQ(m.vocab.size(), 5u);
  EXPECT_TRUE(m.vocab.contains("a"));
}

TEST(Bpe, TieBreakLexicographic) {
  // (a,b) and (c,d) both occur twice; (a,b) is smaller.
  const auto m = bpe_train({"cd ab", "ab cd"}, 20);
  ASSERT_FALSE(m.merges.empty());
  EXPECT_EQ(m.merges.front(), (MergePair{"a", "b"}));
}

TEST(Bpe, ErrorsOnEmptyCorpusOrSmallTarget) {
  EXPECT_THROW(bpe_train({}, 10), InvalidInput);
  EXPECT_THROW(bpe_train({"abc"}, 7), InvalidInput);
}

TEST(Bpe, Deterministic) {
  const std::vector<std::string> corpus{"the cat sat on the mat", "the dog sat", "a cat and a dog"};
  EXPECT_EQ(bpe_train(corpus, 30), bpe_train(corpus, 30));
}

TEST(Bpe, EncodeEmptyIsEos) {
  const auto m = bpe_train({"ab"}, 8);
  EXPECT_EQ(m.encode(""), (TokenIds{kEos}));
}

TEST(Bpe, ManualMergesCollapseWord) {
  BpeModel m;
  m.vocab.add("a");
  m.vocab.add("b");
  m.vocab.add("ab");
  const TokenId abab = m.vocab.add("abab");
  m.merges = {{"a", "b"}, {"ab", "ab"}};
  EXPECT_EQ(m.encode("abab"), (TokenIds{abab, kEos}));
}

TEST(Bpe, RoundTripInAlphabet) {
  const std::vector<std::string> corpus{"the cat sat on the mat", "the dog sat", "a cat and a dog"};
  const auto m = bpe_train(corpus, 28);
  for (const std::string line : {"the cat sat on the mat", "a dog and the cat", "tac god", "", "a"}) {
    EXPECT_EQ(m.decode(m.encode(line)), line);
  }
}

TEST(Bpe, MergesNeverCrossWords) {
  const auto m = bpe_train({"ab ab ab ab"}, 30);
  for (const auto& t : m.vocab.tokens()) {
    const auto pos = t.find(kWordBoundary);
    EXPECT_TRUE(pos == std::string::npos || pos == 0) << t;
  }
}

TEST(Bpe, UnknownCharacterMapsToUnk) {
  const auto m = bpe_train({"ab"}, 8);
  const auto ids = m.encode("az");
  EXPECT_NE(std::find(ids.begin(), ids.end(), kUnk), ids.end());
}

TEST(Bpe, SaveLoadRoundTrip) {
  const auto m = bpe_train({"the cat sat on the mat", "the dog sat"}, 25);
  const auto path = temp_file("bpe.txt").string();
  m.save(path);
  EXPECT_EQ(BpeModel::load(path), m);
}

TEST(Corpus, TsvRoundTrip) {
  const auto path = temp_file("pairs.tsv").string();
  write_tsv(path, {"a b", "c"}, {"x y", "z"});
  const auto raw = read_tsv(path);
  EXPECT_EQ(raw.sources, (std::vector<std::string>{"a b", "c"}));
  EXPECT_EQ(raw.references, (std::vector<std::string>{"x y", "z"}));
}

TEST(Corpus, ParallelFilesMustAlign) {
  const auto a = temp_file("src.txt").string(), b = temp_file("ref.txt").string();
  std::ofstream(a) << "one\ntwo\n";
  std::ofstream(b) << "uno\n";
  EXPECT_THROW(read_parallel(a, b), InvalidInput);
}

TEST(Synthetic, Deterministic) {
  SyntheticTaskSpec spec;
  spec.train_size = 50;
  spec.dev_size = 5;
  spec.test_size = 5;
  const auto a = gen_synthetic(spec), b = gen_synthetic(spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.dev, b.dev);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.vocab, b.vocab);
}

TEST(Synthetic, NoiseFreeIsRelabeling) {
  SyntheticTaskSpec spec;
  spec.synonym_fanout = 1;
  spec.reorder_prob = 0.0;
  spec.drop_prob = 0.0;
  spec.train_size = 100;
  spec.dev_size = spec.test_size = 0;
  const auto c = gen_synthetic(spec);
  std::map<TokenId, TokenId> mapping;
  for (const auto& p : c.train) {
    ASSERT_EQ(p.source.size(), p.reference.size());
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      auto [it, fresh] = mapping.emplace(p.source[i], p.reference[i]);
      EXPECT_EQ(it->second, p.reference[i]);
    }
  }
}

TEST(Synthetic, SizesAndDisjointSplits) {
  SyntheticTaskSpec spec;
  spec.train_size = 100;
  spec.dev_size = 10;
  spec.test_size = 10;
  const auto c = gen_synthetic(spec);
  EXPECT_EQ(c.train.size(), 100u);
  EXPECT_EQ(c.dev.size(), 10u);
  EXPECT_EQ(c.test.size(), 10u);
  std::set<TokenIds> sources;
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (const auto& p : *split) {
      EXPECT_TRUE(sources.insert(p.source).second);
      EXPECT_TRUE(is_well_formed(p));
    }
  }
}

TEST(Synthetic, LengthsWithinRange) {
  SyntheticTaskSpec spec;
  spec.train_size = 200;
  spec.dev_size = spec.test_size = 0;
  for (const auto& p : gen_synthetic(spec).train) {
    EXPECT_GE(p.source.size(), static_cast<std::size_t>(spec.min_length + 1));
    EXPECT_LE(p.source.size(), static_cast<std::size_t>(spec.max_length + 1));
  }
}

TEST(Synthetic, ReferenceTokensComeFromDictionary) {
  SyntheticTaskSpec spec;
  spec.train_size = 100;
  spec.dev_size = spec.test_size = 0;
  const auto c = gen_synthetic(spec);
  std::set<TokenId> targets;
  for (const auto& row : c.dictionary) targets.insert(row.begin(), row.end());
  EXPECT_EQ(targets.size(), static_cast<std::size_t>(spec.source_vocab_size * spec.synonym_fanout));
  for (const auto& p : c.train) {
    for (std::size_t i = 0; i + 1 < p.reference.size(); ++i) EXPECT_TRUE(targets.count(p.reference[i]));
  }
}

TEST(Synthetic, DropKnobLeavesOtherDrawsAlone) {
  SyntheticTaskSpec a;
  a.train_size = 60;
  a.dev_size = a.test_size = 0;
  SyntheticTaskSpec b = a;
  b.drop_prob = 0.3;
  const auto ca = gen_synthetic(a), cb = gen_synthetic(b);
  for (std::size_t i = 0; i < ca.train.size(); ++i) {
    EXPECT_EQ(ca.train[i].source, cb.train[i].source);
    // Dropping only deletes tokens from the same synonym/reorder outcome.
    const auto& full = ca.train[i].reference;
    const auto& thin = cb.train[i].reference;
    std::size_t j = 0;
    for (TokenId t : full) {
      if (j < thin.size() && thin[j] == t) ++j;
    }
    EXPECT_EQ(j, thin.size());
  }
}

TEST(Synthetic, InvalidMinLength) {
  SyntheticTaskSpec spec;
  spec.min_length = 0;
  EXPECT_THROW(gen_synthetic(spec), InvalidInput);
}
