#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "setrnn/neural_model.hpp"
#include "test_util.hpp"

using namespace setrnn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Direct forward pass with plain Eigen arithmetic, written from the model
// description: 2-layer GRU encoder and decoder, additive attention from the
// top decoder layer, output network on [context; top hidden; previous label].
struct Reference {
  const ModelParameters<double>& p;
  const ModelConfig& c;

  const MatrixXd& m(int i) const { return p[i]; }

  static VectorXd sig(const VectorXd& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

  VectorXd gru(const GruBlocks& g, const VectorXd& x, const VectorXd& h) const {
    const VectorXd z = sig(m(g.w_update) * x + m(g.u_update) * h + m(g.b_update));
    const VectorXd r = sig(m(g.w_reset) * x + m(g.u_reset) * h + m(g.b_reset));
    const VectorXd n = (m(g.w_cand) * x + m(g.u_cand) * r.cwiseProduct(h) + m(g.b_cand)).array().tanh().matrix();
    return (VectorXd::Ones(h.size()) - z).cwiseProduct(n) + z.cwiseProduct(h);
  }

  // Returns log p(next | prefix) for next in 0..L, plus the attention of the
  // last step.
  std::pair<VectorXd, VectorXd> step_for(const Document& doc, const LabelSequence& prefix) const {
    const auto& lay = p.layout();
    std::vector<VectorXd> h(2, VectorXd::Zero(c.hidden_dim));
    MatrixXd enc(doc.tokens.size(), c.hidden_dim);
    for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
      VectorXd x = m(lay.word_embeddings).row(doc.tokens[t]).transpose();
      for (int l = 0; l < 2; ++l) {
        h[l] = gru(lay.encoder[l], x, h[l]);
        x = h[l];
      }
      enc.row(static_cast<Eigen::Index>(t)) = x.transpose();
    }
    const MatrixXd keys = enc * m(lay.att_key).transpose();
    VectorXd logp;
    VectorXd att;
    for (std::size_t t = 0; t <= prefix.size(); ++t) {
      const Label prev = t == 0 ? 0 : prefix[t - 1];
      const VectorXd emb = m(lay.label_embeddings).row(prev).transpose();
      VectorXd x = emb;
      for (int l = 0; l < 2; ++l) {
        h[l] = gru(lay.decoder[l], x, h[l]);
        x = h[l];
      }
      const VectorXd q = m(lay.att_query) * x + m(lay.att_bias);
      VectorXd score(enc.rows());
      for (Eigen::Index i = 0; i < enc.rows(); ++i) {
        const VectorXd e = (keys.row(i).transpose() + q).array().tanh().matrix();
        score(i) = m(lay.att_score).col(0).dot(e);
      }
      att = (score.array() - score.maxCoeff()).exp().matrix();
      att /= att.sum();
      const VectorXd ctx = enc.transpose() * att;
      VectorXd feat(ctx.size() + x.size() + emb.size());
      feat << ctx, x, emb;
      const VectorXd hid = (m(lay.out_hidden) * feat + m(lay.out_hidden_bias)).array().tanh().matrix();
      const VectorXd logits = m(lay.out_logits) * hid + m(lay.out_logits_bias);
      std::vector<bool> used(logits.size(), false);
      for (std::size_t k = 0; k < t; ++k) used[static_cast<std::size_t>(prefix[k])] = true;
      double z = 0.0;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        if (!used[static_cast<std::size_t>(i)]) z += std::exp(logits(i));
      }
      logp = VectorXd(logits.size());
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        logp(i) = used[static_cast<std::size_t>(i)] ? -INFINITY : logits(i) - std::log(z);
      }
    }
    return {logp, att};
  }
};

}  // namespace

TEST(NeuralModel, StepMatchesReferenceForwardPass) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 3);
  const Reference ref{model.parameters(), cfg};
  const Document doc = testutil::random_doc(15, 5, 8);
  for (const LabelSequence& prefix : {LabelSequence{}, LabelSequence{2}, LabelSequence{4, 1, 3}}) {
    const auto trace = step_trace(model, doc, prefix);
    const auto& last = trace.back();
    const auto [logp, att] = ref.step_for(doc, prefix);
    ASSERT_EQ(last.log_probs.size(), static_cast<std::size_t>(logp.size()));
    for (Eigen::Index i = 0; i < logp.size(); ++i) {
      if (std::isinf(logp(i))) {
        EXPECT_TRUE(std::isinf(last.log_probs[static_cast<std::size_t>(i)]));
      } else {
        EXPECT_NEAR(last.log_probs[static_cast<std::size_t>(i)], logp(i), 1e-12);
      }
    }
    for (Eigen::Index i = 0; i < att.size(); ++i) EXPECT_NEAR(last.attention[static_cast<std::size_t>(i)], att(i), 1e-12);
  }
}

TEST(NeuralModel, SequenceProbabilitiesSumToOne) {
  const auto cfg = testutil::tiny_config(3, 12, 4);
  const auto model = testutil::random_model(cfg, 11);
  const Document doc = testutil::random_doc(12, 4, 2);
  double total = 0.0;
  for (const auto& s : testutil::all_sequences(3)) total += std::exp(sequence_logprob(model, doc, s));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(NeuralModel, RepeatMaskingBlocksUsedLabels) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 4);
  const Document doc = testutil::random_doc(15, 5, 1);
  const auto trace = step_trace(model, doc, {3, 1});
  EXPECT_TRUE(std::isinf(trace.back().log_probs[3]));
  EXPECT_TRUE(std::isinf(trace.back().log_probs[1]));
  EXPECT_TRUE(std::isfinite(trace.back().log_probs[0]));
  EXPECT_THROW(sequence_logprob(model, doc, {1, 1}), InputError);
}

TEST(NeuralModel, RepeatsAllowedWhenMaskingIsOff) {
  auto cfg = testutil::tiny_config(3, 12, 4);
  cfg.repeat_masking = false;
  const auto model = testutil::random_model(cfg, 4);
  const Document doc = testutil::random_doc(12, 4, 1);
  EXPECT_TRUE(std::isfinite(sequence_logprob(model, doc, {2, 2})));
}

TEST(NeuralModel, PrefixScoringOmitsStop) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 5);
  const Document doc = testutil::random_doc(15, 5, 3);
  const LabelSequence s{2, 4};
  const double prefix = sequence_logprob(model, doc, s, Scoring::kPrefix);
  const double complete = sequence_logprob(model, doc, s);
  EXPECT_NEAR(complete - prefix, step_trace(model, doc, s).back().log_probs[0], 1e-14);
}

TEST(NeuralModel, RejectsBadDocuments) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 5);
  Document short_doc = testutil::random_doc(15, 4, 3);
  EXPECT_THROW(sequence_logprob(model, short_doc, {1}), ConfigError);
  Document bad = testutil::random_doc(15, 5, 3);
  bad.tokens[2] = 15;
  EXPECT_THROW(sequence_logprob(model, bad, {1}), InputError);
  EXPECT_THROW(sequence_logprob(model, Document{}, {1}), InputError);
  EXPECT_THROW(sequence_logprob(model, testutil::random_doc(15, 5, 3), {5}), InputError);
}

TEST(NeuralModel, RejectsMismatchedParameters) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  auto other = cfg;
  other.hidden_dim = 9;
  EXPECT_THROW(NeuralModel<double>(cfg, ModelParameters<double>::zeros(other)), ConfigError);
}

TEST(NeuralModel, SinglePrecisionTracksDouble) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 6);
  const NeuralModel<float> single(cfg, model.parameters().cast<float>());
  const Document doc = testutil::random_doc(15, 5, 4);
  for (const LabelSequence& s : {LabelSequence{}, LabelSequence{1, 3}, LabelSequence{4, 2, 1, 3}}) {
    EXPECT_NEAR(sequence_logprob(single, doc, s), sequence_logprob(model, doc, s), 1e-4);
  }
}

TEST(NeuralModel, GradientObjectiveIsWeightedNegativeLogLikelihood) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 7);
  const Document doc = testutil::random_doc(15, 5, 5);
  const std::vector<WeightedSequence> pairs{{{1, 2}, 0.25}, {{2, 1}, 0.75}, {{3}, 1.5}};
  const auto g = weighted_nll_gradient(model, doc, pairs);
  double expected = 0.0;
  for (const auto& p : pairs) expected -= p.weight * sequence_logprob(model, doc, p.labels);
  EXPECT_NEAR(g.objective, expected, 1e-12);

  std::vector<WeightedSequence> bad{{{1}, std::nan("")}};
  EXPECT_THROW(weighted_nll_gradient(model, doc, bad), InputError);
}

TEST(NeuralModel, GradientIsLinearInWeights) {
  const auto cfg = testutil::tiny_config(4, 15, 5);
  const auto model = testutil::random_model(cfg, 8);
  const Document doc = testutil::random_doc(15, 5, 6);
  const std::vector<WeightedSequence> a{{{1, 2}, 1.0}};
  const std::vector<WeightedSequence> b{{{3, 4, 1}, 1.0}};
  const std::vector<WeightedSequence> ab{{{1, 2}, 2.0}, {{3, 4, 1}, -0.5}};
  auto ga = weighted_nll_gradient(model, doc, a).gradient.flatten();
  auto gb = weighted_nll_gradient(model, doc, b).gradient.flatten();
  auto gab = weighted_nll_gradient(model, doc, ab).gradient.flatten();
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(gab[i], 2.0 * ga[i] - 0.5 * gb[i], 1e-12);
}

TEST(NeuralModel, DropoutOnlyWithGeneratorAndRate) {
  auto cfg = testutil::tiny_config(4, 15, 5);
  const auto plain = testutil::random_model(cfg, 9);
  cfg.dropout = 0.3;
  const NeuralModel<double> dropped(cfg, plain.parameters());
  const Document doc = testutil::random_doc(15, 5, 7);
  const std::vector<WeightedSequence> pairs{{{1, 2}, 1.0}};
  const auto base = weighted_nll_gradient(plain, doc, pairs).objective;
  EXPECT_DOUBLE_EQ(weighted_nll_gradient(dropped, doc, pairs).objective, base);
  std::mt19937_64 r1(1), r2(1);
  const auto d1 = weighted_nll_gradient(dropped, doc, pairs, &r1).objective;
  const auto d2 = weighted_nll_gradient(dropped, doc, pairs, &r2).objective;
  EXPECT_EQ(d1, d2);
  EXPECT_NE(d1, base);
}

TEST(TopAttendedTokens, StableDescendingOrder) {
  Document doc{{7, 8, 9, 10}, 4};
  const std::vector<double> att{0.1, 0.4, 0.1, 0.4};
  EXPECT_EQ(top_attended_tokens(att, doc, 3), (std::vector<std::int32_t>{8, 10, 7}));
  EXPECT_THROW(top_attended_tokens(att, doc, 5), InputError);
}
