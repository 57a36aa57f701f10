#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "setrnn/adam.hpp"
#include "setrnn/math.hpp"
#include "setrnn/parameters.hpp"
#include "setrnn/types.hpp"
#include "test_util.hpp"

using namespace setrnn;

TEST(LabelSet, SortsAndRejectsBadIds) {
  LabelSet s{3, 1, 2};
  EXPECT_EQ(s.labels(), (std::vector<Label>{1, 2, 3}));
  EXPECT_TRUE(s.contains(2));
  EXPECT_FALSE(s.contains(4));
  EXPECT_THROW(LabelSet({1, 1}), InputError);
  EXPECT_THROW(LabelSet({0, 2}), InputError);
  EXPECT_THROW(LabelSet({-3}), InputError);
  EXPECT_EQ(LabelSet::of_sequence({2, 1}), (LabelSet{1, 2}));
  EXPECT_THROW(LabelSet::of_sequence({2, 1, 2}), InputError);
}

TEST(LabelSet, OrdersLexicographically) {
  EXPECT_LT((LabelSet{1, 2}), (LabelSet{1, 3}));
  EXPECT_LT((LabelSet{1}), (LabelSet{1, 2}));
  EXPECT_EQ(full_label_set(3), (LabelSet{1, 2, 3}));
  EXPECT_TRUE(has_duplicates({1, 2, 1}));
  EXPECT_FALSE(has_duplicates({3, 1, 2}));
}

TEST(RanksBefore, ProbabilityThenLabelsThenCompleteness) {
  ScoredSequence a{{2}, -1.0, true};
  ScoredSequence b{{1}, -2.0, true};
  EXPECT_TRUE(ranks_before(a, b));
  ScoredSequence c{{1}, -1.0, true};
  EXPECT_TRUE(ranks_before(c, a));
  ScoredSequence d{{1}, -1.0, false};
  EXPECT_TRUE(ranks_before(c, d));
  EXPECT_FALSE(ranks_before(d, c));
}

TEST(LogSumExp, EdgeCases) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), -inf);
  EXPECT_EQ(log_sum_exp(std::vector<double>{-inf, -inf}), -inf);
  EXPECT_DOUBLE_EQ(log_sum_exp(std::vector<double>{-inf, 0.5}), 0.5);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{-1000.0, -1000.0}), -1000.0 + std::log(2.0), 1e-12);
}

TEST(LogSumExp, MatchesDirectSumOnModerateValues) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(1 + trial % 7);
    double direct = 0.0;
    for (double& x : xs) {
      x = u(rng);
      direct += std::exp(x);
    }
    EXPECT_NEAR(log_sum_exp(xs), std::log(direct), 1e-12);
    double acc = kNegInf;
    for (double x : xs) acc = log_add(acc, x);
    EXPECT_NEAR(acc, std::log(direct), 1e-12);
  }
}

TEST(ModelConfig, RejectsBadValues) {
  auto c = testutil::tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.hidden_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = testutil::tiny_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Parameters, ShapesFollowConfig) {
  const auto c = testutil::tiny_config(4, 15, 5);
  ParameterLayout lay;
  const auto shapes = parameter_shapes(c, &lay);
  std::size_t total = 0;
  for (const auto& s : shapes) total += static_cast<std::size_t>(s.rows * s.cols);
  // Hand count: embeddings, 2 encoder + 2 decoder GRU layers, attention, output.
  const std::size_t e = 6, h = 7, a = 5, o = 6, L = 4, V = 15;
  const std::size_t gru0 = 3 * (h * e + h * h + h);
  const std::size_t gru1 = 3 * (h * h + h * h + h);
  const std::size_t expected = V * e + (L + 1) * e + 2 * (gru0 + gru1) + a * h * 2 + a * 2 +
                               o * (2 * h + e) + o + (L + 1) * o + (L + 1);
  EXPECT_EQ(total, expected);
  EXPECT_EQ(shapes[static_cast<std::size_t>(lay.label_embeddings)].rows, 5);
  EXPECT_EQ(shapes[static_cast<std::size_t>(lay.out_logits)].name, "output.logits");
}

TEST(Parameters, FlattenRoundTripAndSizeCheck) {
  const auto c = testutil::tiny_config();
  auto p = ModelParameters<double>::initialize(c, 5);
  auto flat = p.flatten();
  EXPECT_EQ(flat.size(), p.size());
  auto q = p.zeros_like();
  q.unflatten(flat);
  EXPECT_TRUE(p == q);
  flat.pop_back();
  EXPECT_THROW(q.unflatten(flat), ConfigError);
}

TEST(Parameters, InitializationIsSeeded) {
  const auto c = testutil::tiny_config();
  EXPECT_TRUE(ModelParameters<double>::initialize(c, 5) == ModelParameters<double>::initialize(c, 5));
  EXPECT_FALSE(ModelParameters<double>::initialize(c, 5) == ModelParameters<double>::initialize(c, 6));
  const auto p = ModelParameters<double>::initialize(c, 5);
  const auto& lay = p.layout();
  EXPECT_TRUE(p[lay.out_logits_bias].isZero());
  EXPECT_LE(p[lay.word_embeddings].cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(p[lay.encoder[0].w_update].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(6.0));
}

TEST(Parameters, CastPreservesValuesWithinFloatPrecision) {
  const auto p = ModelParameters<double>::initialize(testutil::tiny_config(), 5);
  const auto f = p.cast<float>();
  const auto back = f.cast<double>();
  const auto a = p.flatten();
  const auto b = back.flatten();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-7);
}

TEST(Adam, MatchesScalarRecurrence) {
  const auto c = testutil::tiny_config();
  auto p = ModelParameters<double>::initialize(c, 1);
  auto state = AdamState<double>::fresh(p);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  const auto start = p.flatten();
  std::vector<std::vector<double>> grads;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    auto g = p.zeros_like();
    std::vector<double> flat(p.size());
    for (double& x : flat) x = n(rng);
    g.unflatten(flat);
    grads.push_back(flat);
    adam_update(p, g, state, cfg);
  }
  EXPECT_EQ(state.step, 3);
  // Independent scalar replay for a few coordinates.
  const auto end = p.flatten();
  for (std::size_t k : {std::size_t{0}, std::size_t{17}, p.size() - 1}) {
    double x = start[k], m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      const double g = grads[static_cast<std::size_t>(t - 1)][k];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mhat = m / (1.0 - std::pow(0.9, t));
      const double vhat = v / (1.0 - std::pow(0.999, t));
      x -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    EXPECT_NEAR(end[k], x, 1e-14);
  }
}

TEST(Adam, FirstStepMovesEachCoordinateByLearningRate) {
  auto p = ModelParameters<double>::initialize(testutil::tiny_config(), 1);
  auto state = AdamState<double>::fresh(p);
  auto g = p.zeros_like();
  std::vector<double> flat(p.size(), 0.5);
  g.unflatten(flat);
  const auto before = p.flatten();
  adam_update(p, g, state, AdamConfig{});
  const auto after = p.flatten();
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_NEAR(before[k] - after[k], 5e-4, 1e-10);
}
