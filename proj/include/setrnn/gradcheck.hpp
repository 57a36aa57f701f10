#ifndef SETRNN_GRADCHECK_HPP
#define SETRNN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "setrnn/neural_model.hpp"
#include "setrnn/objectives.hpp"

namespace setrnn {

struct GradCheckConfig {
  int vocab_size = 20;
  int embed_dim = 8;
  int hidden_dim = 8;
  int num_labels = 5;
  int doc_len = 6;
  int beam_width = 6;
  double step = 1e-5;
  double param_range = 0.5;  // entries drawn uniformly from [-range, range]
  std::uint64_t seed = 7;
  LabelSet labels{1, 3, 4};
};

struct BlockError {
  std::string name;
  double grad_norm = 0.0;
  double fd_norm = 0.0;
  double rel_error = 0.0;  // |g - fd| / max(|g|, |fd|, 1e-8)
};

struct GradCheckResult {
  ObjectiveKind kind{};
  // false: finite differences of -sum_i w_i log p(s_i) with the weights and
  // sequences frozen at the current parameters. true: finite differences of
  // the objective itself, search included.
  bool full_objective = false;
  std::vector<BlockError> blocks;
  double max_rel_error = 0.0;
};

inline ModelConfig gradcheck_model_config(const GradCheckConfig& c) {
  ModelConfig m;
  m.vocab_size = c.vocab_size;
  m.num_labels = c.num_labels;
  m.embed_dim = c.embed_dim;
  m.hidden_dim = c.hidden_dim;
  m.attention_dim = c.hidden_dim;
  m.output_dim = c.hidden_dim;
  m.max_doc_len = c.doc_len;
  return m;
}

inline Document gradcheck_document(const GradCheckConfig& c) {
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  Document d;
  for (int i = 0; i < c.doc_len; ++i) {
    d.tokens.push_back(static_cast<std::int32_t>(3 + rng() % static_cast<std::uint64_t>(c.vocab_size - 3)));
  }
  d.original_length = d.tokens.size();
  return d;
}

/// Tiny model at a generic point: every entry uniform in [-range, range].
inline NeuralModel<double> gradcheck_model(const GradCheckConfig& c) {
  auto params = ModelParameters<double>::zeros(gradcheck_model_config(c));
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(-c.param_range, c.param_range);
  for (std::size_t b = 0; b < params.num_blocks(); ++b) {
    auto& v = params.block(static_cast<int>(b)).value;
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
  }
  return NeuralModel<double>(gradcheck_model_config(c), std::move(params));
}

/// Frequencies that make the seq2seq order differ from id order.
inline LabelFrequencies gradcheck_frequencies(int num_labels) {
  LabelFrequencies f;
  for (Label l = 1; l <= num_labels; ++l) f[l] = 1 + (l * 7) % (num_labels + 2);
  return f;
}

template <std::floating_point Real>
double weighted_nll(const NeuralModel<Real>& model, const Document& doc, const std::vector<WeightedSequence>& pairs) {
  double v = 0.0;
  for (const auto& p : pairs) v -= p.weight * sequence_logprob(model, doc, p.labels);
  return v;
}

/// Compares the reverse-mode gradient of one objective with central finite
/// differences, coordinate by coordinate.
template <std::floating_point Real>
GradCheckResult check_gradient(NeuralModel<Real>& model, const Document& doc, const LabelSet& labels,
                               ObjectiveKind kind, int beam_width, const LabelFrequencies& freq, double step,
                               bool full_objective) {
  const auto obj = evaluate_objective(kind, model, doc, labels, beam_width, freq);
  const auto grad = weighted_nll_gradient(model, doc, obj.pairs);
  auto f = [&]() {
    return full_objective ? evaluate_objective(kind, model, doc, labels, beam_width, freq).loss
                          : weighted_nll(model, doc, obj.pairs);
  };

  GradCheckResult out;
  out.kind = kind;
  out.full_objective = full_objective;
  auto& params = model.parameters();
  for (std::size_t b = 0; b < params.num_blocks(); ++b) {
    auto& value = params.block(static_cast<int>(b)).value;
    const auto& g = grad.gradient.block(static_cast<int>(b)).value;
    double diff2 = 0.0;
    double g2 = 0.0;
    double fd2 = 0.0;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const Real saved = value.data()[i];
      value.data()[i] = saved + static_cast<Real>(step);
      const double up = f();
      value.data()[i] = saved - static_cast<Real>(step);
      const double down = f();
      value.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double gi = static_cast<double>(g.data()[i]);
      diff2 += (gi - fd) * (gi - fd);
      g2 += gi * gi;
      fd2 += fd * fd;
    }
    BlockError e;
    e.name = params.block(static_cast<int>(b)).name;
    e.grad_norm = std::sqrt(g2);
    e.fd_norm = std::sqrt(fd2);
    e.rel_error = std::sqrt(diff2) / std::max({e.grad_norm, e.fd_norm, 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, e.rel_error);
    out.blocks.push_back(std::move(e));
  }
  return out;
}

/// The full suite on the tiny model: every objective against the frozen-weight
/// finite differences, plus the objective itself for the four objectives whose
/// weights carry no parameter dependence the gradient is meant to ignore.
inline std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckConfig& c = {}) {
  auto model = gradcheck_model(c);
  const Document doc = gradcheck_document(c);
  const auto freq = gradcheck_frequencies(c.num_labels);
  std::vector<GradCheckResult> out;
  for (auto kind : {ObjectiveKind::kSeq2Seq, ObjectiveKind::kVinyalsMax, ObjectiveKind::kVinyalsUniform,
                    ObjectiveKind::kVinyalsSample, ObjectiveKind::kSetRnn}) {
    out.push_back(check_gradient(model, doc, c.labels, kind, c.beam_width, freq, c.step, false));
    if (kind != ObjectiveKind::kVinyalsSample) {
      out.push_back(check_gradient(model, doc, c.labels, kind, c.beam_width, freq, c.step, true));
    }
  }
  return out;
}

}  // namespace setrnn

#endif  // SETRNN_GRADCHECK_HPP
