#ifndef SETRNN_SEQUENCE_MODEL_HPP
#define SETRNN_SEQUENCE_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "setrnn/math.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

/// Output of one decoder step: a log-distribution over {STOP} ∪ labels
/// (index 0 is STOP, index l is label l) and the attention weights that
/// produced the step's context (empty for models without attention).
template <class State>
struct StepResult {
  std::vector<double> log_probs;
  std::vector<double> attention;
  State state;
};

// A per-document decoding session. step(parent, prefix) returns the
// distribution of the next outcome after `prefix`, where `parent` is the state
// reached after prefix minus its last label (or the initial state when prefix
// is empty), together with the state reached after the full prefix.
template <class S>
concept DecoderSession = requires(S& s, const typename S::State& st, const LabelSequence& prefix) {
  { s.initial_state() } -> std::same_as<typename S::State>;
  { s.step(st, prefix) } -> std::same_as<StepResult<typename S::State>>;
  { s.num_labels() } -> std::convertible_to<int>;
  { s.repeat_masking() } -> std::convertible_to<bool>;
};

template <class M>
concept SequenceModel = requires(const M& m, const Document& doc) {
  { m.start(doc) } -> DecoderSession;
  { m.num_labels() } -> std::convertible_to<int>;
};

enum class Scoring {
  kComplete,  // includes the terminal STOP factor
  kPrefix,    // labels only, used inside search
};

inline void validate_sequence(const LabelSequence& seq, int num_labels, bool repeat_masking) {
  for (Label l : seq) {
    if (l < 1 || l > num_labels) {
      throw InputError("label " + std::to_string(l) + " outside 1.." + std::to_string(num_labels));
    }
  }
  if (repeat_masking && has_duplicates(seq)) throw InputError("sequence repeats a label");
}

/// log p(seq | doc): sum of the per-step conditionals, plus log p(STOP | seq)
/// for complete sequences.
template <SequenceModel M>
double sequence_logprob(const M& model, const Document& doc, const LabelSequence& seq,
                        Scoring scoring = Scoring::kComplete) {
  auto session = model.start(doc);
  validate_sequence(seq, session.num_labels(), session.repeat_masking());
  auto state = session.initial_state();
  LabelSequence prefix;
  prefix.reserve(seq.size());
  double total = 0.0;
  for (Label l : seq) {
    auto step = session.step(state, prefix);
    total += step.log_probs[static_cast<std::size_t>(l)];
    state = std::move(step.state);
    prefix.push_back(l);
  }
  if (scoring == Scoring::kComplete) {
    total += session.step(state, prefix).log_probs[kStop];
  }
  return total;
}

/// Per-step distributions along a complete sequence (one entry per label plus
/// the final STOP step). Used to extract attention traces.
template <SequenceModel M>
auto step_trace(const M& model, const Document& doc, const LabelSequence& seq) {
  auto session = model.start(doc);
  validate_sequence(seq, session.num_labels(), session.repeat_masking());
  using State = decltype(session.initial_state());
  std::vector<StepResult<State>> trace;
  auto state = session.initial_state();
  LabelSequence prefix;
  for (std::size_t t = 0; t <= seq.size(); ++t) {
    auto step = session.step(state, prefix);
    state = step.state;
    trace.push_back(std::move(step));
    if (t < seq.size()) prefix.push_back(seq[t]);
  }
  return trace;
}

/// Token ids at the k largest attention weights, ties broken by earlier position.
inline std::vector<std::int32_t> top_attended_tokens(std::span<const double> attention, const Document& doc,
                                                     std::size_t k) {
  if (attention.size() != doc.tokens.size()) throw InputError("attention length differs from document length");
  if (k > doc.tokens.size()) throw InputError("k exceeds document length");
  std::vector<std::size_t> order(doc.tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return attention[a] > attention[b]; });
  std::vector<std::int32_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(doc.tokens[order[i]]);
  return out;
}

}  // namespace setrnn

#endif  // SETRNN_SEQUENCE_MODEL_HPP
