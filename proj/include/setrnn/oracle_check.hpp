#ifndef SETRNN_ORACLE_CHECK_HPP
#define SETRNN_ORACLE_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "setrnn/beam.hpp"
#include "setrnn/tabular_model.hpp"

namespace setrnn {

struct OracleCase {
  int num_labels = 0;
  LabelSet labels;
  int beam_width = 0;
  std::size_t beam_count = 0;
  std::size_t oracle_count = 0;
  bool same_sequences = false;
  double max_rel_error = 0.0;  // over matched log probabilities
  double set_logprob = kNegInf;

  [[nodiscard]] bool passed(double tol) const { return same_sequences && max_rel_error <= tol; }
};

inline double relative_difference(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline std::size_t factorial(std::size_t n) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Set-restricted beam search with K = |G|! against exhaustive enumeration.
template <SequenceModel M>
OracleCase compare_with_enumeration(const M& model, const Document& doc, const LabelSet& labels) {
  OracleCase c;
  c.num_labels = model.num_labels();
  c.labels = labels;
  c.beam_width = static_cast<int>(factorial(labels.size()));
  const auto beam = beam_search(model, doc, BeamConfig{c.beam_width, true, 50, labels});
  const auto oracle = enumerate_permutations(model, doc, labels);
  c.beam_count = beam.size();
  c.oracle_count = oracle.size();
  c.same_sequences = beam.size() == oracle.size();
  for (std::size_t i = 0; c.same_sequences && i < beam.size(); ++i) {
    if (beam[i].labels != oracle[i].labels) {
      c.same_sequences = false;
      break;
    }
    c.max_rel_error = std::max(c.max_rel_error, relative_difference(beam[i].logprob, oracle[i].logprob));
  }
  c.set_logprob = total_logprob(oracle);
  return c;
}

/// Randomized tabular models with 2..6 labels, each checked on a random
/// non-empty label subset.
inline std::vector<OracleCase> run_oracle_suite(std::uint64_t seed, int num_models = 50) {
  std::mt19937_64 rng(seed);
  std::vector<OracleCase> out;
  for (int m = 0; m < num_models; ++m) {
    const int L = 2 + static_cast<int>(rng() % 5);
    const double concentration = (m % 2 == 0) ? 1.0 : 0.3;
    const auto model = TabularModel::random(L, rng, concentration);
    std::vector<Label> pick;
    while (pick.empty()) {
      pick.clear();
      for (Label l = 1; l <= L; ++l) {
        if (rng() % 2 == 0) pick.push_back(l);
      }
    }
    // Every third case uses the full label set to hit the largest factorials.
    if (m % 3 == 0) pick = full_label_set(L).labels();
    out.push_back(compare_with_enumeration(model, Document{}, LabelSet(pick)));
  }
  return out;
}

inline std::string describe(const OracleCase& c) {
  std::ostringstream os;
  os << "L=" << c.num_labels << " G={";
  for (std::size_t i = 0; i < c.labels.size(); ++i) os << (i ? "," : "") << c.labels.labels()[i];
  os << "} K=" << c.beam_width << " beam=" << c.beam_count << " enum=" << c.oracle_count
     << " same=" << (c.same_sequences ? "yes" : "no");
  os.precision(3);
  os << " max_rel=" << std::scientific << c.max_rel_error;
  return os.str();
}

}  // namespace setrnn

#endif  // SETRNN_ORACLE_CHECK_HPP
