#ifndef SETRNN_TYPES_HPP
#define SETRNN_TYPES_HPP

#include <algorithm>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace setrnn {

// Label ids run 1..L. Id 0 is the STOP outcome; as a previous-label input it
// doubles as the begin-of-sequence marker, so it never collides with a label.
using Label = std::int32_t;
inline constexpr Label kStop = 0;
inline constexpr Label kBos = 0;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Error hierarchy. The CLI maps each family onto an exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to a library operation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or run configuration (dimensions, counts).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, checkpoint or report file.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An ordered, duplicate-free list of label ids. STOP is never stored; whether
/// a sequence is terminated is tracked by the caller (see ScoredSequence).
using LabelSequence = std::vector<Label>;

/// Unordered collection of distinct label ids, kept sorted.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<Label> labels) : LabelSet(std::vector<Label>(labels)) {}

  explicit LabelSet(std::vector<Label> labels) : labels_(std::move(labels)) {
    std::sort(labels_.begin(), labels_.end());
    if (std::adjacent_find(labels_.begin(), labels_.end()) != labels_.end()) {
      throw InputError("label set contains a duplicate label");
    }
    for (Label l : labels_) {
      if (l <= 0) throw InputError("label ids must be positive, got " + std::to_string(l));
    }
  }

  /// Set of the labels of a sequence; rejects sequences with repeats.
  static LabelSet of_sequence(const LabelSequence& seq) { return LabelSet(seq); }

  [[nodiscard]] bool contains(Label l) const {
    return std::binary_search(labels_.begin(), labels_.end(), l);
  }
  [[nodiscard]] std::size_t size() const { return labels_.size(); }
  [[nodiscard]] bool empty() const { return labels_.empty(); }
  [[nodiscard]] const std::vector<Label>& labels() const { return labels_; }
  [[nodiscard]] auto begin() const { return labels_.begin(); }
  [[nodiscard]] auto end() const { return labels_.end(); }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
  friend auto operator<=>(const LabelSet& a, const LabelSet& b) { return a.labels_ <=> b.labels_; }

 private:
  std::vector<Label> labels_;
};

/// Labels 1..num_labels.
inline LabelSet full_label_set(int num_labels) {
  std::vector<Label> all(static_cast<std::size_t>(num_labels));
  for (int i = 0; i < num_labels; ++i) all[static_cast<std::size_t>(i)] = i + 1;
  return LabelSet(std::move(all));
}

inline bool has_duplicates(const LabelSequence& seq) {
  std::vector<Label> sorted = seq;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

/// A tokenized document, truncated or padded to the configured length.
struct Document {
  std::vector<std::int32_t> tokens;
  std::size_t original_length = 0;
};

/// A scored label sequence as produced by search or enumeration.
struct ScoredSequence {
  LabelSequence labels;
  double logprob = kNegInf;
  /// STOP-terminated (ALL=0) or covering every candidate label (ALL=1).
  bool complete = false;

  friend bool operator==(const ScoredSequence&, const ScoredSequence&) = default;
};

/// A complete sequence paired with a constant weight in a weighted
/// log-likelihood.
struct WeightedSequence {
  LabelSequence labels;
  double weight = 0.0;
};

/// Descending log-probability, ties broken by lexicographic label order.
inline bool ranks_before(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  if (a.labels != b.labels) return a.labels < b.labels;
  return a.complete && !b.complete;
}

}  // namespace setrnn

#endif  // SETRNN_TYPES_HPP
