#ifndef SETRNN_METRICS_HPP
#define SETRNN_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "setrnn/types.hpp"

namespace setrnn {

struct PredictionRecord {
  LabelSet gold;
  LabelSet predicted;
  /// Probabilities of the predicted set's permutation sequences, if recorded.
  std::optional<std::vector<double>> permutation_probs;
};

struct LabelScore {
  Label label = 0;
  long gold_count = 0;
  long predicted_count = 0;
  long true_positives = 0;
  double f1 = 0.0;
};

namespace detail {

inline void require_records(std::span<const PredictionRecord> records) {
  if (records.empty()) throw InputError("metrics need at least one record");
}

}  // namespace detail

/// Per-label counts and F1 for labels 1..num_labels. A label absent from both
/// gold and predictions scores 0.
inline std::vector<LabelScore> per_label_scores(std::span<const PredictionRecord> records, int num_labels) {
  detail::require_records(records);
  std::vector<LabelScore> scores(static_cast<std::size_t>(num_labels));
  for (int l = 1; l <= num_labels; ++l) scores[static_cast<std::size_t>(l - 1)].label = l;
  auto slot = [&](Label l) -> LabelScore& {
    if (l < 1 || l > num_labels) throw InputError("label " + std::to_string(l) + " outside the label universe");
    return scores[static_cast<std::size_t>(l - 1)];
  };
  for (const auto& r : records) {
    for (Label l : r.gold) {
      ++slot(l).gold_count;
      if (r.predicted.contains(l)) ++slot(l).true_positives;
    }
    for (Label l : r.predicted) ++slot(l).predicted_count;
  }
  for (auto& s : scores) {
    const long denom = s.gold_count + s.predicted_count;
    s.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(s.true_positives) / static_cast<double>(denom);
  }
  return scores;
}

/// F1 averaged over labels.
inline double label_f1(std::span<const PredictionRecord> records, int num_labels) {
  const auto scores = per_label_scores(records, num_labels);
  double total = 0.0;
  for (const auto& s : scores) total += s.f1;
  return total / static_cast<double>(num_labels);
}

/// F1 averaged over instances; an instance with empty gold and empty
/// prediction scores 1.
inline double instance_f1(std::span<const PredictionRecord> records) {
  detail::require_records(records);
  double total = 0.0;
  for (const auto& r : records) {
    const std::size_t denom = r.gold.size() + r.predicted.size();
    if (denom == 0) {
      total += 1.0;
      continue;
    }
    std::size_t hits = 0;
    for (Label l : r.gold) hits += r.predicted.contains(l) ? 1 : 0;
    total += 2.0 * static_cast<double>(hits) / static_cast<double>(denom);
  }
  return total / static_cast<double>(records.size());
}

/// Fraction of disagreeing bits over the N x L indicator matrix.
inline double hamming_loss(std::span<const PredictionRecord> records, int num_labels) {
  detail::require_records(records);
  if (num_labels < 1) throw InputError("hamming loss needs num_labels >= 1");
  std::size_t wrong = 0;
  for (const auto& r : records) {
    for (Label l : r.gold) wrong += r.predicted.contains(l) ? 0 : 1;
    for (Label l : r.predicted) wrong += r.gold.contains(l) ? 0 : 1;
  }
  return static_cast<double>(wrong) / (static_cast<double>(records.size()) * num_labels);
}

/// 2TP / (2TP + FP + FN), pooled over all bits; 1 when nothing is positive.
inline double micro_f1(std::span<const PredictionRecord> records) {
  detail::require_records(records);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    for (Label l : r.gold) (r.predicted.contains(l) ? tp : fn) += 1;
    for (Label l : r.predicted) fp += r.gold.contains(l) ? 0 : 1;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

/// Entropy of the renormalized probabilities divided by log m (natural log);
/// 0 for a single probability.
inline double normalized_entropy(std::span<const double> probs) {
  if (probs.empty()) throw InputError("normalized_entropy needs at least one probability");
  double total = 0.0;
  for (double p : probs) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InputError("normalized_entropy needs positive finite probabilities");
    total += p;
  }
  if (probs.size() == 1) return 0.0;
  double h = 0.0;
  for (double p : probs) {
    const double q = p / total;
    h -= q * std::log(q);
  }
  return h / std::log(static_cast<double>(probs.size()));
}

}  // namespace setrnn

#endif  // SETRNN_METRICS_HPP
