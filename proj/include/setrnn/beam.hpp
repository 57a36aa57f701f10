#ifndef SETRNN_BEAM_HPP
#define SETRNN_BEAM_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "setrnn/math.hpp"
#include "setrnn/sequence_model.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

struct BeamConfig {
  int beam_width = 12;
  /// true: sequences must contain every candidate label (set-restricted
  /// permutation search); false: open generation that may STOP at any step.
  bool all = false;
  int max_len = 50;
  LabelSet candidates;

  void validate(int num_labels) const {
    if (beam_width < 1) throw InputError("beam width must be >= 1");
    if (max_len < 1) throw InputError("max_len must be >= 1");
    if (all && candidates.empty()) throw InputError("set-restricted search needs a non-empty candidate set");
    if (all && static_cast<int>(candidates.size()) > max_len) {
      throw InputError("candidate set of size " + std::to_string(candidates.size()) + " exceeds max_len " +
                       std::to_string(max_len));
    }
    for (Label l : candidates) {
      if (l > num_labels) throw InputError("candidate label " + std::to_string(l) + " outside the label space");
    }
  }
};

/// Beam search over label sequences. Returns at most beam_width complete
/// sequences, best first (ties by lexicographic label order).
///
/// With all == false, live sequences extend by any candidate label (unused ones
/// when repeat masking is on) or terminate with STOP; stopped sequences stay in
/// the candidate pool each round. Scores of stopped sequences include the STOP
/// factor. Search ends when every kept sequence has stopped.
///
/// With all == true, sequences extend only by unused candidate labels and rank
/// by prefix probability; a sequence covering all candidates is complete and
/// its score gains the terminal STOP factor. Zero-probability extensions are
/// never proposed.
template <SequenceModel M>
std::vector<ScoredSequence> beam_search(const M& model, const Document& doc, const BeamConfig& cfg) {
  cfg.validate(model.num_labels());
  auto session = model.start(doc);
  using State = decltype(session.initial_state());
  const bool masking = session.repeat_masking() || cfg.all;
  const std::size_t target = cfg.candidates.size();

  struct Entry {
    ScoredSequence seq;
    State parent;  // state before the last label of seq
  };
  auto entry_less = [](const Entry& a, const Entry& b) { return ranks_before(a.seq, b.seq); };

  std::vector<Entry> beam;
  beam.push_back({ScoredSequence{{}, 0.0, false}, session.initial_state()});

  while (true) {
    std::vector<Entry> pool;
    for (auto& e : beam) {
      if (e.seq.complete) {
        pool.push_back(e);
        continue;
      }
      auto step = session.step(e.parent, e.seq.labels);
      const bool at_limit = static_cast<int>(e.seq.labels.size()) >= cfg.max_len;
      if (!at_limit) {
        for (Label l : cfg.candidates) {
          if (masking && std::find(e.seq.labels.begin(), e.seq.labels.end(), l) != e.seq.labels.end()) continue;
          const double lp = step.log_probs[static_cast<std::size_t>(l)];
          if (lp == kNegInf) continue;
          Entry child{ScoredSequence{e.seq.labels, e.seq.logprob + lp, false}, step.state};
          child.seq.labels.push_back(l);
          if (cfg.all && child.seq.labels.size() == target) {
            const double stop = session.step(step.state, child.seq.labels).log_probs[kStop];
            if (stop == kNegInf) continue;
            child.seq.logprob += stop;
            child.seq.complete = true;
          }
          pool.push_back(std::move(child));
        }
      }
      if (!cfg.all) {
        const double stop = step.log_probs[kStop];
        if (stop != kNegInf) pool.push_back({ScoredSequence{e.seq.labels, e.seq.logprob + stop, true}, e.parent});
      }
    }
    std::sort(pool.begin(), pool.end(), entry_less);
    if (pool.size() > static_cast<std::size_t>(cfg.beam_width)) {
      pool.erase(pool.begin() + cfg.beam_width, pool.end());
    }
    beam = std::move(pool);
    const bool done = std::all_of(beam.begin(), beam.end(), [](const Entry& e) { return e.seq.complete; });
    if (done) break;
  }

  std::vector<ScoredSequence> out;
  out.reserve(beam.size());
  for (auto& e : beam) out.push_back(std::move(e.seq));
  return out;
}

inline constexpr std::size_t kMaxEnumeratedSetSize = 8;

/// Every permutation of `labels`, scored exactly with the STOP factor, best
/// first. The empty set yields the single empty sequence.
template <SequenceModel M>
std::vector<ScoredSequence> enumerate_permutations(const M& model, const Document& doc, const LabelSet& labels) {
  if (labels.size() > kMaxEnumeratedSetSize) {
    throw InputError("refusing to enumerate permutations of " + std::to_string(labels.size()) + " labels (max " +
                     std::to_string(kMaxEnumeratedSetSize) + ")");
  }
  auto session = model.start(doc);
  validate_sequence(labels.labels(), session.num_labels(), true);
  using State = decltype(session.initial_state());
  std::vector<ScoredSequence> out;
  LabelSequence prefix;
  std::vector<bool> used(labels.size(), false);

  std::function<void(const State&, double)> rec = [&](const State& parent, double logprob) {
    auto step = session.step(parent, prefix);
    if (prefix.size() == labels.size()) {
      out.push_back({prefix, logprob + step.log_probs[kStop], true});
      return;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (used[i]) continue;
      const Label l = labels.labels()[i];
      used[i] = true;
      prefix.push_back(l);
      rec(step.state, logprob + step.log_probs[static_cast<std::size_t>(l)]);
      prefix.pop_back();
      used[i] = false;
    }
  };
  rec(session.initial_state(), 0.0);
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

/// log of the summed probability of a list of scored sequences.
inline double total_logprob(const std::vector<ScoredSequence>& seqs) {
  std::vector<double> lps;
  lps.reserve(seqs.size());
  for (const auto& s : seqs) lps.push_back(s.logprob);
  return log_sum_exp(lps);
}

/// Approximate log p(y | x): log-sum of the top-K permutations of y found by
/// set-restricted beam search. Exact when K >= |y|!.
template <SequenceModel M>
double set_logprob(const M& model, const Document& doc, const LabelSet& labels, int beam_width, int max_len = 50) {
  if (labels.empty()) throw InputError("set_logprob needs a non-empty label set");
  BeamConfig cfg{beam_width, true, max_len, labels};
  return total_logprob(beam_search(model, doc, cfg));
}

}  // namespace setrnn

#endif  // SETRNN_BEAM_HPP
