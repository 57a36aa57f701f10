#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "setrnn/beam.hpp"
#include "setrnn/oracle_check.hpp"
#include "setrnn/tabular_model.hpp"
#include "test_util.hpp"

using namespace setrnn;
using testutil::table_prob;

namespace {

// Exact ranking of all permutations from products of table entries.
std::vector<std::pair<LabelSequence, double>> oracle_ranking(const TabularModel& m, const LabelSet& g) {
  std::vector<std::pair<LabelSequence, double>> out;
  for (const auto& s : testutil::permutations(g.labels())) out.emplace_back(s, table_prob(m, s));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

const Document kNoDoc{};

}  // namespace

TEST(BeamSearch, SingletonSetScoresLabelThenStop) {
  std::mt19937_64 rng(1);
  const auto m = TabularModel::random(3, rng);
  const auto out = beam_search(m, kNoDoc, BeamConfig{4, true, 50, LabelSet{2}});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].labels, (LabelSequence{2}));
  EXPECT_TRUE(out[0].complete);
  EXPECT_NEAR(out[0].logprob, std::log(m.row({})[2]) + std::log(m.row({2})[0]), 1e-15);
}

TEST(BeamSearch, TwoLabelPermutationsMatchHandProducts) {
  std::mt19937_64 rng(2);
  const auto m = TabularModel::random(3, rng);
  const auto out = beam_search(m, kNoDoc, BeamConfig{2, true, 50, LabelSet{1, 3}});
  ASSERT_EQ(out.size(), 2u);
  const double p13 = m.row({})[1] * m.row({1})[3] * m.row({1, 3})[0];
  const double p31 = m.row({})[3] * m.row({3})[1] * m.row({3, 1})[0];
  for (const auto& s : out) {
    const double expected = s.labels == LabelSequence{1, 3} ? p13 : p31;
    EXPECT_NEAR(std::exp(s.logprob), expected, 1e-15);
  }
  EXPECT_GE(out[0].logprob, out[1].logprob);
}

TEST(BeamSearch, FullWidthEqualsIndependentOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int L = 2 + trial % 5;
    const auto m = TabularModel::random(L, rng, trial % 2 ? 0.3 : 1.0);
    std::vector<Label> pick;
    for (Label l = 1; l <= L; ++l) {
      if (rng() % 3 != 0) pick.push_back(l);
    }
    if (pick.empty()) pick.push_back(1);
    const LabelSet g(pick);
    const int K = static_cast<int>(factorial(g.size()));
    const auto beam = beam_search(m, kNoDoc, BeamConfig{K, true, 50, g});
    const auto oracle = oracle_ranking(m, g);
    ASSERT_EQ(beam.size(), oracle.size());
    for (std::size_t i = 0; i < beam.size(); ++i) {
      EXPECT_EQ(beam[i].labels, oracle[i].first);
      EXPECT_NEAR(beam[i].logprob, std::log(oracle[i].second), 1e-12 * std::abs(std::log(oracle[i].second)));
    }
    const auto enumerated = enumerate_permutations(m, kNoDoc, g);
    ASSERT_EQ(enumerated.size(), beam.size());
    for (std::size_t i = 0; i < beam.size(); ++i) {
      EXPECT_EQ(enumerated[i].labels, beam[i].labels);
      EXPECT_EQ(enumerated[i].logprob, beam[i].logprob);
    }
  }
}

TEST(BeamSearch, TiesBreakLexicographically) {
  const TabularModel uniform(3);
  const auto out = beam_search(uniform, kNoDoc, BeamConfig{6, true, 50, LabelSet{1, 2, 3}});
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out[0].labels, (LabelSequence{1, 2, 3}));
  EXPECT_EQ(out[1].labels, (LabelSequence{1, 3, 2}));
  EXPECT_EQ(out[5].labels, (LabelSequence{3, 2, 1}));
  const auto narrow = beam_search(uniform, kNoDoc, BeamConfig{1, true, 50, LabelSet{1, 2, 3}});
  EXPECT_EQ(narrow[0].labels, (LabelSequence{1, 2, 3}));
}

TEST(BeamSearch, OpenSearchOutputsAreStoppedDistinctAndSubunit) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = TabularModel::random(4, rng, 0.5);
    const auto out = beam_search(m, kNoDoc, BeamConfig{5, false, 50, full_label_set(4)});
    ASSERT_FALSE(out.empty());
    EXPECT_LE(out.size(), 5u);
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_TRUE(out[i].complete);
      EXPECT_FALSE(has_duplicates(out[i].labels));
      EXPECT_NEAR(std::exp(out[i].logprob), table_prob(m, out[i].labels), 1e-14);
      if (i > 0) {
        EXPECT_TRUE(!ranks_before(out[i], out[i - 1]));
      }
      total += std::exp(out[i].logprob);
    }
    EXPECT_LE(total, 1.0 + 1e-12);
  }
}

TEST(BeamSearch, OpenSearchWithWideBeamFindsTrueTopSequences) {
  std::mt19937_64 rng(5);
  const auto m = TabularModel::random(3, rng, 0.7);
  auto all = testutil::all_sequences(3);  // 16 sequences
  std::sort(all.begin(), all.end(),
            [&](const auto& a, const auto& b) { return table_prob(m, a) > table_prob(m, b); });
  const auto out = beam_search(m, kNoDoc, BeamConfig{16, false, 50, full_label_set(3)});
  ASSERT_EQ(out.size(), 16u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(std::exp(out[i].logprob), table_prob(m, all[i]), 1e-14);
}

TEST(BeamSearch, MaxLenForcesStop) {
  const TabularModel uniform(4);
  const auto out = beam_search(uniform, kNoDoc, BeamConfig{50, false, 2, full_label_set(4)});
  for (const auto& s : out) EXPECT_LE(s.labels.size(), 2u);
  const auto restricted = beam_search(uniform, kNoDoc, BeamConfig{3, false, 1, LabelSet{2, 4}});
  for (const auto& s : restricted) {
    EXPECT_LE(s.labels.size(), 1u);
    for (Label l : s.labels) EXPECT_TRUE(l == 2 || l == 4);
  }
}

TEST(BeamSearch, ZeroProbabilityExtensionsArePruned) {
  // Only (1, 2) has mass besides the empty sequence.
  const auto m = TabularModel::from_sequence_probabilities(3, {{{}, 0.5}, {{1, 2}, 0.5}});
  const auto out = beam_search(m, kNoDoc, BeamConfig{10, false, 50, full_label_set(3)});
  ASSERT_EQ(out.size(), 2u);
  for (const auto& s : out) EXPECT_TRUE(std::isfinite(s.logprob));
  const auto perms = beam_search(m, kNoDoc, BeamConfig{2, true, 50, LabelSet{1, 2}});
  ASSERT_EQ(perms.size(), 1u);
  EXPECT_EQ(perms[0].labels, (LabelSequence{1, 2}));
  EXPECT_TRUE(beam_search(m, kNoDoc, BeamConfig{2, true, 50, LabelSet{3}}).empty());
}

TEST(BeamSearch, ValidatesConfig) {
  const TabularModel m(3);
  EXPECT_THROW(beam_search(m, kNoDoc, BeamConfig{0, false, 50, full_label_set(3)}), InputError);
  EXPECT_THROW(beam_search(m, kNoDoc, BeamConfig{2, true, 50, LabelSet{}}), InputError);
  EXPECT_THROW(beam_search(m, kNoDoc, BeamConfig{2, true, 1, LabelSet{1, 2}}), InputError);
  EXPECT_THROW(beam_search(m, kNoDoc, BeamConfig{2, true, 50, LabelSet{4}}), InputError);
}

TEST(EnumeratePermutations, CountsAndGuards) {
  std::mt19937_64 rng(6);
  const auto m = TabularModel::random(4, rng);
  EXPECT_EQ(enumerate_permutations(m, kNoDoc, LabelSet{1, 2, 4}).size(), 6u);
  const auto single = enumerate_permutations(m, kNoDoc, LabelSet{3});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].logprob, sequence_logprob(m, kNoDoc, {3}));
  const auto empty = enumerate_permutations(m, kNoDoc, LabelSet{});
  ASSERT_EQ(empty.size(), 1u);
  EXPECT_TRUE(empty[0].labels.empty());
  // size guard fires before any model lookup
  EXPECT_THROW(enumerate_permutations(m, kNoDoc, LabelSet{1, 2, 3, 4, 5, 6, 7, 8, 9}), InputError);
}

TEST(SetLogprob, ExactAtFullWidthAndBoundedBelow) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = TabularModel::random(5, rng, 0.5);
    const LabelSet g{1, 2, 4, 5};
    double exact = 0.0;
    for (const auto& s : testutil::permutations(g.labels())) exact += table_prob(m, s);
    EXPECT_NEAR(set_logprob(m, kNoDoc, g, 24), std::log(exact), 1e-12);
    for (int K : {1, 2, 5, 12}) EXPECT_LE(set_logprob(m, kNoDoc, g, K), std::log(exact) + 1e-12);
  }
  EXPECT_THROW(set_logprob(TabularModel(2), kNoDoc, LabelSet{}, 2), InputError);
}

TEST(SetLogprob, SingletonEqualsSequenceLogprob) {
  std::mt19937_64 rng(8);
  const auto m = TabularModel::random(4, rng);
  EXPECT_EQ(set_logprob(m, kNoDoc, LabelSet{3}, 1), sequence_logprob(m, kNoDoc, {3}));
}

TEST(OracleSuite, AllCasesPass) {
  for (const auto& c : run_oracle_suite(99, 20)) EXPECT_TRUE(c.passed(1e-12)) << describe(c);
}
