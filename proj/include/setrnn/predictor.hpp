#ifndef SETRNN_PREDICTOR_HPP
#define SETRNN_PREDICTOR_HPP

#include <algorithm>
#include <utility>
#include <vector>

#include "setrnn/beam.hpp"
#include "setrnn/sequence_model.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

struct CandidateSet {
  LabelSet labels;
  double logprob = kNegInf;                 // approximate log p(y | x)
  std::vector<ScoredSequence> sequences;  // permutations found by set-restricted search
};

struct SetPrediction {
  LabelSet labels;  // most probable candidate set
  double logprob = kNegInf;
  ScoredSequence top_sequence;  // best sequence of the open search
  std::vector<CandidateSet> candidates;  // in order of first appearance in the open search

  [[nodiscard]] LabelSet top_sequence_set() const { return LabelSet::of_sequence(top_sequence.labels); }

  [[nodiscard]] const CandidateSet* find(const LabelSet& set) const {
    for (const auto& c : candidates) {
      if (c.labels == set) return &c;
    }
    return nullptr;
  }
};

struct TopSequencePrediction {
  LabelSet labels;
  ScoredSequence sequence;
};

/// The label set of the most probable sequence from open beam search over all
/// labels. Immediate STOP yields the empty set.
template <SequenceModel M>
TopSequencePrediction predict_top_sequence(const M& model, const Document& doc, int beam_width, int max_len = 50) {
  auto seqs = beam_search(model, doc, BeamConfig{beam_width, false, max_len, full_label_set(model.num_labels())});
  if (seqs.empty()) return {};
  return {LabelSet::of_sequence(seqs.front().labels), seqs.front()};
}

/// Two-level search for the most probable set: open beam search proposes
/// sequences, their distinct label sets are scored by summing the top
/// permutations of set-restricted search (same width), and the best set wins.
/// Ties go to the smaller set, then the lexicographically smaller one.
template <SequenceModel M>
SetPrediction predict_top_set(const M& model, const Document& doc, int beam_width, int max_len = 50) {
  auto seqs = beam_search(model, doc, BeamConfig{beam_width, false, max_len, full_label_set(model.num_labels())});
  SetPrediction out;
  if (seqs.empty()) return out;
  out.top_sequence = seqs.front();
  for (const auto& s : seqs) {
    LabelSet set = LabelSet::of_sequence(s.labels);
    if (out.find(set) != nullptr) continue;
    CandidateSet cand;
    cand.labels = std::move(set);
    if (cand.labels.empty()) {
      cand.sequences.push_back({{}, sequence_logprob(model, doc, {}), true});
    } else {
      cand.sequences = beam_search(model, doc, BeamConfig{beam_width, true, max_len, cand.labels});
    }
    cand.logprob = total_logprob(cand.sequences);
    out.candidates.push_back(std::move(cand));
  }
  const CandidateSet* best = nullptr;
  for (const auto& c : out.candidates) {
    if (best == nullptr || c.logprob > best->logprob ||
        (c.logprob == best->logprob &&
         (c.labels.size() < best->labels.size() ||
          (c.labels.size() == best->labels.size() && c.labels < best->labels)))) {
      best = &c;
    }
  }
  out.labels = best->labels;
  out.logprob = best->logprob;
  return out;
}

}  // namespace setrnn

#endif  // SETRNN_PREDICTOR_HPP
