#ifndef SETRNN_NEURAL_MODEL_HPP
#define SETRNN_NEURAL_MODEL_HPP

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setrnn/autodiff.hpp"
#include "setrnn/parameters.hpp"
#include "setrnn/sequence_model.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

/// Hidden arrays of the decoder, one per layer, as nodes of the session tape.
struct DecoderState {
  std::vector<ad::Var> hidden;
};

namespace detail {

// Builds the encoder-decoder graph on a tape. The same code serves inference
// (values only) and training (values plus backward), so both paths agree
// bit for bit.
template <std::floating_point Real>
class Graph {
 public:
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

  struct Encoded {
    ad::Var outputs;  // [T x hidden]
    ad::Var keys;     // [T x attention]
    DecoderState final_state;
  };

  struct Step {
    ad::Var log_probs;
    ad::Var attention;
    DecoderState state;
  };

  Graph(const ModelConfig& cfg, const ModelParameters<Real>& params, ad::Tape<Real>& tape,
        std::mt19937_64* dropout_rng = nullptr)
      : cfg_(cfg), lay_(params.layout()), tape_(tape), rng_(cfg.dropout > 0.0 ? dropout_rng : nullptr) {}

  Encoded encode(const Document& doc) {
    if (doc.tokens.empty()) throw InputError("document has no token positions");
    if (static_cast<int>(doc.tokens.size()) != cfg_.max_doc_len) {
      throw ConfigError("document length " + std::to_string(doc.tokens.size()) + " differs from max_doc_len " +
                        std::to_string(cfg_.max_doc_len));
    }
    DecoderState state;
    const ad::Var zero = tape_.constant(Matrix::Zero(cfg_.hidden_dim, 1));
    state.hidden.assign(static_cast<std::size_t>(cfg_.num_layers), zero);
    std::vector<ad::Var> outputs;
    outputs.reserve(doc.tokens.size());
    for (std::int32_t tok : doc.tokens) {
      if (tok < 0 || tok >= cfg_.vocab_size) {
        throw InputError("token id " + std::to_string(tok) + " outside vocabulary of size " +
                         std::to_string(cfg_.vocab_size));
      }
      ad::Var x = dropout(tape_.param_row(lay_.word_embeddings, tok));
      for (int l = 0; l < cfg_.num_layers; ++l) {
        auto& h = state.hidden[static_cast<std::size_t>(l)];
        h = gru(lay_.encoder[static_cast<std::size_t>(l)], x, h);
        x = h;
      }
      outputs.push_back(x);
    }
    Encoded enc;
    enc.outputs = tape_.stack_rows(outputs);
    enc.keys = tape_.matmul_transposed(enc.outputs, lay_.att_key);
    enc.final_state = std::move(state);
    return enc;
  }

  Step decode_step(const Encoded& enc, const DecoderState& parent, const LabelSequence& prefix) {
    const Label prev = prefix.empty() ? kBos : prefix.back();
    if (prev < 0 || prev > cfg_.num_labels) throw InputError("previous label " + std::to_string(prev) + " out of range");
    const ad::Var emb = tape_.param_row(lay_.label_embeddings, prev);
    Step out;
    out.state.hidden.resize(parent.hidden.size());
    ad::Var x = emb;
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const auto ul = static_cast<std::size_t>(l);
      x = gru(lay_.decoder[ul], x, parent.hidden[ul]);
      out.state.hidden[ul] = x;
    }
    const ad::Var top = x;

    // Additive attention over encoder positions.
    const ad::Var query = tape_.add_bias(tape_.linear(lay_.att_query, top), lay_.att_bias);
    const ad::Var energy = tape_.tanh(tape_.add_rowwise(enc.keys, query));
    out.attention = tape_.softmax(tape_.param_matvec(energy, lay_.att_score));
    const ad::Var context = tape_.transposed_matvec(enc.outputs, out.attention);

    // Output network on [context; hidden; previous-label embedding].
    const ad::Var features = dropout(tape_.concat({context, top, emb}));
    const ad::Var hidden = tape_.tanh(tape_.add_bias(tape_.linear(lay_.out_hidden, features), lay_.out_hidden_bias));
    const ad::Var logits = tape_.add_bias(tape_.linear(lay_.out_logits, hidden), lay_.out_logits_bias);

    std::vector<std::uint8_t> mask;
    if (cfg_.repeat_masking) {
      mask.assign(static_cast<std::size_t>(cfg_.num_labels) + 1, 0);
      for (Label l : prefix) mask[static_cast<std::size_t>(l)] = 1;
    }
    out.log_probs = tape_.log_softmax(logits, mask);
    return out;
  }

 private:
  ad::Var gru(const GruBlocks& g, ad::Var x, ad::Var h) {
    auto gate = [&](int w, int u, int b, ad::Var hin) {
      return tape_.add_bias(tape_.add(tape_.linear(w, x), tape_.linear(u, hin)), b);
    };
    const ad::Var z = tape_.sigmoid(gate(g.w_update, g.u_update, g.b_update, h));
    const ad::Var r = tape_.sigmoid(gate(g.w_reset, g.u_reset, g.b_reset, h));
    const ad::Var n = tape_.tanh(gate(g.w_cand, g.u_cand, g.b_cand, tape_.mul(r, h)));
    return tape_.add(tape_.mul(tape_.one_minus(z), n), tape_.mul(z, h));
  }

  ad::Var dropout(ad::Var x) {
    if (rng_ == nullptr) return x;
    const double keep = 1.0 - cfg_.dropout;
    std::bernoulli_distribution coin(keep);
    Matrix mask(tape_.value(x).rows(), tape_.value(x).cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = coin(*rng_) ? Real(1.0 / keep) : Real(0);
    return tape_.mul_constant(x, std::move(mask));
  }

  const ModelConfig& cfg_;
  const ParameterLayout& lay_;
  ad::Tape<Real>& tape_;
  std::mt19937_64* rng_;
};

template <std::floating_point Real>
std::vector<double> to_doubles(const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(m.data()[i]);
  return out;
}

}  // namespace detail

/// GRU encoder-decoder with additive attention defining p(s | x).
template <std::floating_point Real>
class NeuralModel {
 public:
  using Params = ModelParameters<Real>;

  NeuralModel(ModelConfig cfg, Params params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    const auto shapes = parameter_shapes(cfg_);
    if (shapes.size() != params_.num_blocks()) throw ConfigError("parameter block count does not match config");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const auto& b = params_.block(static_cast<int>(i));
      if (b.name != shapes[i].name || b.value.rows() != shapes[i].rows || b.value.cols() != shapes[i].cols) {
        throw ConfigError("parameter block " + b.name + " does not match config");
      }
    }
  }

  static NeuralModel initialize(const ModelConfig& cfg, std::uint64_t seed) {
    return NeuralModel(cfg, Params::initialize(cfg, seed));
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] int num_labels() const { return cfg_.num_labels; }
  [[nodiscard]] const Params& parameters() const { return params_; }
  [[nodiscard]] Params& parameters() { return params_; }

  /// Decoding session over one document; owns the evaluation tape. Read-only
  /// with respect to the model, so sessions on distinct threads are safe.
  class Session {
   public:
    using State = DecoderState;

    Session(const NeuralModel& model, const Document& doc)
        : model_(&model), tape_(model.params_), graph_(model.cfg_, model.params_, tape_) {
      encoded_ = graph_.encode(doc);
    }
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    [[nodiscard]] State initial_state() const { return encoded_.final_state; }
    [[nodiscard]] int num_labels() const { return model_->cfg_.num_labels; }
    [[nodiscard]] bool repeat_masking() const { return model_->cfg_.repeat_masking; }

    StepResult<State> step(const State& parent, const LabelSequence& prefix) {
      auto s = graph_.decode_step(encoded_, parent, prefix);
      return {detail::to_doubles<Real>(tape_.value(s.log_probs)), detail::to_doubles<Real>(tape_.value(s.attention)),
              std::move(s.state)};
    }

    /// Encoder outputs, one row per token position.
    [[nodiscard]] const typename ad::Tape<Real>::Matrix& encoder_outputs() const {
      return tape_.value(encoded_.outputs);
    }

   private:
    const NeuralModel* model_;
    ad::Tape<Real> tape_;
    detail::Graph<Real> graph_;
    typename detail::Graph<Real>::Encoded encoded_;
  };

  [[nodiscard]] Session start(const Document& doc) const { return Session(*this, doc); }

 private:
  ModelConfig cfg_;
  Params params_;
};

template <std::floating_point Real>
struct GradientResult {
  ModelParameters<Real> gradient;
  double objective = 0.0;  // -sum_i w_i log p(s_i | x)
};

/// Gradient of -sum_i w_i log p(s_i | x) over complete sequences, weights held
/// constant. Shared prefixes are evaluated once. Passing `dropout_rng` enables
/// dropout when the model config asks for it.
template <std::floating_point Real>
GradientResult<Real> weighted_nll_gradient(const NeuralModel<Real>& model, const Document& doc,
                                           std::span<const WeightedSequence> pairs,
                                           std::mt19937_64* dropout_rng = nullptr) {
  for (const auto& p : pairs) {
    if (!std::isfinite(p.weight)) throw InputError("non-finite sequence weight");
    validate_sequence(p.labels, model.num_labels(), model.config().repeat_masking);
  }
  GradientResult<Real> result{model.parameters().zeros_like(), 0.0};
  ad::Tape<Real> tape(model.parameters());
  detail::Graph<Real> graph(model.config(), model.parameters(), tape, dropout_rng);
  const auto enc = graph.encode(doc);

  struct PrefixNode {
    DecoderState state;  // after the prefix
    ad::Var log_probs;   // next-outcome distribution after the prefix
  };
  std::map<LabelSequence, PrefixNode> cache;
  auto lookup = [&](const LabelSequence& prefix, const DecoderState& parent) -> const PrefixNode& {
    auto it = cache.find(prefix);
    if (it == cache.end()) {
      auto s = graph.decode_step(enc, parent, prefix);
      it = cache.emplace(prefix, PrefixNode{std::move(s.state), s.log_probs}).first;
    }
    return it->second;
  };

  std::vector<ad::Seed<Real>> seeds;
  for (const auto& p : pairs) {
    LabelSequence prefix;
    const PrefixNode* node = &lookup(prefix, enc.final_state);
    for (std::size_t t = 0; t <= p.labels.size(); ++t) {
      const Label outcome = t < p.labels.size() ? p.labels[t] : kStop;
      const double lp = static_cast<double>(tape.value(node->log_probs)(outcome, 0));
      result.objective -= p.weight * lp;
      seeds.push_back({node->log_probs, outcome, static_cast<Real>(-p.weight)});
      if (t < p.labels.size()) {
        prefix.push_back(outcome);
        const DecoderState parent = node->state;
        node = &lookup(prefix, parent);
      }
    }
  }
  tape.backward(seeds, result.gradient);
  return result;
}

}  // namespace setrnn

#endif  // SETRNN_NEURAL_MODEL_HPP
