#ifndef SETRNN_OBJECTIVES_HPP
#define SETRNN_OBJECTIVES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "setrnn/beam.hpp"
#include "setrnn/math.hpp"
#include "setrnn/sequence_model.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

// Training objectives over label permutations. Each reduces to a loss value
// and a list of (complete sequence, constant weight) pairs whose weighted
// log-likelihood gradient is the objective's gradient.

enum class ObjectiveKind { kSeq2Seq, kVinyalsMax, kVinyalsUniform, kVinyalsSample, kSetRnn };

inline std::string_view objective_token(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kSeq2Seq: return "seq2seq";
    case ObjectiveKind::kVinyalsMax: return "vmax";
    case ObjectiveKind::kVinyalsUniform: return "vuniform";
    case ObjectiveKind::kVinyalsSample: return "vsample";
    case ObjectiveKind::kSetRnn: return "setrnn";
  }
  return "?";
}

inline ObjectiveKind parse_objective(std::string_view token) {
  if (token == "seq2seq") return ObjectiveKind::kSeq2Seq;
  if (token == "vmax" || token == "vinyals-max") return ObjectiveKind::kVinyalsMax;
  if (token == "vuniform" || token == "vinyals-uniform") return ObjectiveKind::kVinyalsUniform;
  if (token == "vsample" || token == "vinyals-sample") return ObjectiveKind::kVinyalsSample;
  if (token == "setrnn" || token == "set-rnn") return ObjectiveKind::kSetRnn;
  throw InputError("unknown objective '" + std::string(token) + "' (seq2seq|vmax|vuniform|vsample|setrnn)");
}

/// Objective choice plus the uniform warm-up schedule for vmax / vsample.
struct ObjectiveSpec {
  static constexpr double kDefaultWarmupFraction = 0.3;

  ObjectiveKind kind = ObjectiveKind::kSetRnn;
  int beam_width = 12;  // permutations considered per instance
  /// First epoch (0-based) trained with the target objective; earlier epochs
  /// use vuniform. Unset means 30% of the epochs; 0 trains directly.
  std::optional<int> switch_epoch;

  void validate() const {
    if (beam_width < 1) throw ConfigError("objective beam width must be >= 1");
    if (switch_epoch.has_value()) {
      if (kind != ObjectiveKind::kVinyalsMax && kind != ObjectiveKind::kVinyalsSample) {
        throw ConfigError("a warm-up schedule only applies to vmax and vsample");
      }
      if (*switch_epoch < 0) throw ConfigError("switch epoch must be >= 0");
    }
  }

  [[nodiscard]] ObjectiveKind kind_at(int epoch, int total_epochs) const {
    if (kind != ObjectiveKind::kVinyalsMax && kind != ObjectiveKind::kVinyalsSample) return kind;
    const int start = switch_epoch.value_or(static_cast<int>(kDefaultWarmupFraction * total_epochs));
    return epoch < start ? ObjectiveKind::kVinyalsUniform : kind;
  }
};

struct ObjectiveResult {
  double loss = 0.0;
  std::vector<WeightedSequence> pairs;
};

/// Training-set label counts.
using LabelFrequencies = std::map<Label, std::int64_t>;

/// Labels by descending frequency, ties by ascending id.
inline LabelSequence order_by_frequency(const LabelSet& labels, const LabelFrequencies& freq) {
  LabelSequence seq(labels.begin(), labels.end());
  for (Label l : seq) {
    if (!freq.contains(l)) throw InputError("no frequency recorded for label " + std::to_string(l));
  }
  std::stable_sort(seq.begin(), seq.end(), [&](Label a, Label b) { return freq.at(a) > freq.at(b); });
  return seq;
}

namespace detail {

template <SequenceModel M>
std::vector<ScoredSequence> top_permutations(const M& model, const Document& doc, const LabelSet& labels,
                                             int beam_width, int max_len) {
  if (labels.empty()) throw InputError("objectives need a non-empty label set");
  auto seqs = beam_search(model, doc, BeamConfig{beam_width, true, max_len, labels});
  if (seqs.empty()) throw NumericError("set-restricted beam search found no sequence of non-zero probability");
  return seqs;
}

inline void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw NumericError(std::string("non-finite ") + what + " loss");
}

}  // namespace detail

/// -log p(s|x) for the frequency-ordered sequence.
template <SequenceModel M>
ObjectiveResult loss_seq2seq(const M& model, const Document& doc, const LabelSet& labels,
                             const LabelFrequencies& freq) {
  if (labels.empty()) throw InputError("objectives need a non-empty label set");
  LabelSequence seq = order_by_frequency(labels, freq);
  const double lp = sequence_logprob(model, doc, seq);
  return {-lp, {{std::move(seq), 1.0}}};
}

/// -max_s log p(s|x) over the top-K permutations; weight 1 on the argmax.
template <SequenceModel M>
ObjectiveResult loss_vinyals_max(const M& model, const Document& doc, const LabelSet& labels, int beam_width,
                                 int max_len = 50) {
  auto seqs = detail::top_permutations(model, doc, labels, beam_width, max_len);
  return {-seqs.front().logprob, {{std::move(seqs.front().labels), 1.0}}};
}

/// -sum_s log p(s|x) over the top-K permutations; weight 1 on each.
template <SequenceModel M>
ObjectiveResult loss_vinyals_uniform(const M& model, const Document& doc, const LabelSet& labels, int beam_width,
                                     int max_len = 50) {
  auto seqs = detail::top_permutations(model, doc, labels, beam_width, max_len);
  ObjectiveResult r;
  for (auto& s : seqs) {
    r.loss -= s.logprob;
    r.pairs.push_back({std::move(s.labels), 1.0});
  }
  return r;
}

/// -sum_s p(s|x) log p(s|x) over the top-K permutations; weight p(s|x).
template <SequenceModel M>
ObjectiveResult loss_vinyals_sample(const M& model, const Document& doc, const LabelSet& labels, int beam_width,
                                    int max_len = 50) {
  auto seqs = detail::top_permutations(model, doc, labels, beam_width, max_len);
  ObjectiveResult r;
  for (auto& s : seqs) {
    const double p = std::exp(s.logprob);
    r.loss -= p * s.logprob;
    r.pairs.push_back({std::move(s.labels), p});
  }
  return r;
}

/// -log sum_s p(s|x) over the top-K permutations; weight is the posterior
/// p(s|x) / sum_s' p(s'|x), which makes the weighted gradient exact.
template <SequenceModel M>
ObjectiveResult loss_set_rnn(const M& model, const Document& doc, const LabelSet& labels, int beam_width,
                             int max_len = 50) {
  auto seqs = detail::top_permutations(model, doc, labels, beam_width, max_len);
  const double lse = total_logprob(seqs);
  ObjectiveResult r;
  r.loss = -lse;
  for (auto& s : seqs) r.pairs.push_back({std::move(s.labels), std::exp(s.logprob - lse)});
  return r;
}

template <SequenceModel M>
ObjectiveResult evaluate_objective(ObjectiveKind kind, const M& model, const Document& doc, const LabelSet& labels,
                                   int beam_width, const LabelFrequencies& freq, int max_len = 50) {
  ObjectiveResult r;
  switch (kind) {
    case ObjectiveKind::kSeq2Seq: r = loss_seq2seq(model, doc, labels, freq); break;
    case ObjectiveKind::kVinyalsMax: r = loss_vinyals_max(model, doc, labels, beam_width, max_len); break;
    case ObjectiveKind::kVinyalsUniform: r = loss_vinyals_uniform(model, doc, labels, beam_width, max_len); break;
    case ObjectiveKind::kVinyalsSample: r = loss_vinyals_sample(model, doc, labels, beam_width, max_len); break;
    case ObjectiveKind::kSetRnn: r = loss_set_rnn(model, doc, labels, beam_width, max_len); break;
  }
  detail::check_finite(r.loss, std::string(objective_token(kind)).c_str());
  return r;
}

struct JensenGap {
  double lhs = 0.0;  // log m + mean_i log p_i
  double rhs = 0.0;  // log sum_i p_i
};

/// Both sides of the bound log m + (1/m) sum log p_i <= log sum p_i that
/// relates the uniform-permutation objective to the set log-likelihood.
inline JensenGap jensen_gap(std::span<const double> probs) {
  if (probs.empty()) throw InputError("jensen_gap needs at least one probability");
  std::vector<double> logs;
  logs.reserve(probs.size());
  double mean = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw InputError("jensen_gap needs positive probabilities");
    logs.push_back(std::log(p));
    mean += logs.back();
  }
  const double m = static_cast<double>(probs.size());
  mean /= m;
  return {std::log(m) + mean, log_sum_exp(logs)};
}

}  // namespace setrnn

#endif  // SETRNN_OBJECTIVES_HPP
