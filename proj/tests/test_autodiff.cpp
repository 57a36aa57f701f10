#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "setrnn/autodiff.hpp"
#include "test_util.hpp"

using namespace setrnn;
using Tape = ad::Tape<double>;
using Params = ModelParameters<double>;

namespace {

// A graph builder returns the output node; the scalar objective is
// sum_i w_i * out[i] with fixed pseudo-random weights.
using Builder = std::function<ad::Var(Tape&, const ParameterLayout&)>;

std::vector<double> weights_for(Eigen::Index n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = std::sin(1.0 + 1.7 * static_cast<double>(i));
  return w;
}

double objective(const Params& p, const Builder& build) {
  Tape tape(p);
  const auto out = build(tape, p.layout());
  const auto& v = tape.value(out);
  const auto w = weights_for(v.rows());
  double f = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (std::isfinite(v(i, 0))) f += w[static_cast<std::size_t>(i)] * v(i, 0);
  }
  return f;
}

double max_gradient_error(Params p, const Builder& build) {
  Tape tape(p);
  const auto out = build(tape, p.layout());
  const auto& v = tape.value(out);
  const auto w = weights_for(v.rows());
  std::vector<ad::Seed<double>> seeds;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (std::isfinite(v(i, 0))) seeds.push_back({out, i, w[static_cast<std::size_t>(i)]});
  }
  auto grad = p.zeros_like();
  tape.backward(seeds, grad);

  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t b = 0; b < p.num_blocks(); ++b) {
    auto& m = p.block(static_cast<int>(b)).value;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = objective(p, build);
      m.data()[i] = saved - h;
      const double down = objective(p, build);
      m.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double g = grad.block(static_cast<int>(b)).value.data()[i];
      worst = std::max(worst, std::abs(fd - g) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

Params small_params() { return testutil::random_model(testutil::tiny_config(3, 6, 3), 21, 0.8).parameters(); }

}  // namespace

TEST(Autodiff, GateOps) {
  const Builder b = [](Tape& t, const ParameterLayout& lay) {
    const auto& g = lay.encoder[0];
    auto x = t.param_row(lay.word_embeddings, 2);
    auto h = t.param_row(lay.word_embeddings, 4);  // reused twice below
    auto hh = t.linear(g.u_reset, t.tanh(t.linear(g.w_update, h)));
    auto z = t.sigmoid(t.add_bias(t.add(t.linear(g.w_update, x), hh), g.b_update));
    return t.add(t.mul(t.one_minus(z), t.tanh(t.linear(g.w_cand, x))), t.mul(z, hh));
  };
  EXPECT_LT(max_gradient_error(small_params(), b), 1e-7);
}

TEST(Autodiff, AttentionOps) {
  const Builder b = [](Tape& t, const ParameterLayout& lay) {
    std::vector<ad::Var> rows;
    for (int i = 0; i < 3; ++i) rows.push_back(t.tanh(t.linear(lay.encoder[0].w_cand, t.param_row(lay.word_embeddings, i))));
    auto enc = t.stack_rows(rows);
    auto keys = t.matmul_transposed(enc, lay.att_key);
    auto q = t.add_bias(t.linear(lay.att_query, rows[1]), lay.att_bias);
    auto a = t.softmax(t.param_matvec(t.tanh(t.add_rowwise(keys, q)), lay.att_score));
    auto ctx = t.transposed_matvec(enc, a);
    return t.concat({ctx, a});
  };
  EXPECT_LT(max_gradient_error(small_params(), b), 1e-7);
}

TEST(Autodiff, MaskedLogSoftmax) {
  const std::vector<std::uint8_t> mask{0, 1, 0, 0};
  const Builder b = [&](Tape& t, const ParameterLayout& lay) {
    // embed_dim == output_dim in the tiny config, so an embedding row can feed the logits layer
    auto logits = t.add_bias(t.linear(lay.out_logits, t.param_row(lay.word_embeddings, 0)), lay.out_logits_bias);
    return t.log_softmax(logits, mask);
  };
  const auto p = small_params();
  EXPECT_LT(max_gradient_error(p, b), 1e-7);

  Tape t(p);
  const auto v = t.value(b(t, p.layout()));
  EXPECT_EQ(v(1, 0), -std::numeric_limits<double>::infinity());
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) total += std::exp(v(i, 0));
  EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(Autodiff, ConstantMaskScalesGradient) {
  const Builder b = [](Tape& t, const ParameterLayout& lay) {
    auto x = t.param_row(lay.word_embeddings, 3);
    Eigen::MatrixXd m(t.value(x).rows(), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = (i % 2 == 0) ? 2.0 : 0.0;
    return t.sigmoid(t.mul_constant(x, m));
  };
  EXPECT_LT(max_gradient_error(small_params(), b), 1e-7);
}

TEST(Autodiff, BackwardAccumulatesIntoExistingGradient) {
  const auto p = small_params();
  Tape t(p);
  const auto x = t.param_row(p.layout().word_embeddings, 1);
  std::vector<ad::Seed<double>> seeds{{x, 0, 1.0}};
  auto grad = p.zeros_like();
  t.backward(seeds, grad);
  t.backward(seeds, grad);
  EXPECT_DOUBLE_EQ(grad[p.layout().word_embeddings](1, 0), 2.0);
  EXPECT_DOUBLE_EQ(grad[p.layout().word_embeddings](0, 0), 0.0);
}
