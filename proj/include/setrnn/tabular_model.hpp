#ifndef SETRNN_TABULAR_MODEL_HPP
#define SETRNN_TABULAR_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <unordered_map>
#include <utility>
#include <vector>

#include "setrnn/sequence_model.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

/// Explicit conditional tables p(next | prefix) for every duplicate-free
/// prefix over a small label space. Closed-form stand-in for the neural
/// decoder in exactness tests; the document is ignored.
class TabularModel {
 public:
  static constexpr int kMaxLabels = 8;

  /// Every row uniform over the remaining labels and STOP.
  explicit TabularModel(int num_labels) : num_labels_(num_labels) {
    if (num_labels < 1 || num_labels > kMaxLabels) {
      throw InputError("tabular model supports 1.." + std::to_string(kMaxLabels) + " labels");
    }
    for_each_prefix([&](const LabelSequence& prefix) {
      std::vector<double> row(static_cast<std::size_t>(num_labels_) + 1, 0.0);
      const double p = 1.0 / static_cast<double>(num_labels_ + 1 - static_cast<int>(prefix.size()));
      for (Label l = 0; l <= num_labels_; ++l) {
        if (!contains(prefix, l)) row[static_cast<std::size_t>(l)] = p;
      }
      rows_[key(prefix)] = std::move(row);
    });
  }

  /// Rows drawn from a symmetric Dirichlet(concentration) over remaining
  /// labels and STOP. Small concentrations give peaked rows.
  static TabularModel random(int num_labels, std::mt19937_64& rng, double concentration = 1.0) {
    TabularModel m(num_labels);
    std::gamma_distribution<double> gamma(concentration, 1.0);
    m.for_each_prefix([&](const LabelSequence& prefix) {
      auto& row = m.rows_[key(prefix)];
      double total = 0.0;
      for (Label l = 0; l <= num_labels; ++l) {
        if (contains(prefix, l)) continue;
        double w = 0.0;
        while (!(w > 1e-300)) w = gamma(rng);
        row[static_cast<std::size_t>(l)] = w;
        total += w;
      }
      for (double& v : row) v /= total;
    });
    return m;
  }

  /// Conditionals induced by an explicit distribution over complete sequences.
  /// Prefixes carrying no mass get uniform rows.
  static TabularModel from_sequence_probabilities(int num_labels,
                                                  const std::vector<std::pair<LabelSequence, double>>& dist) {
    TabularModel m(num_labels);
    std::map<LabelSequence, double> prefix_mass;
    std::map<LabelSequence, std::vector<double>> next_mass;
    double total = 0.0;
    for (const auto& [seq, p] : dist) {
      validate_sequence(seq, num_labels, true);
      if (!(p >= 0.0)) throw InputError("sequence probabilities must be non-negative");
      total += p;
      LabelSequence prefix;
      for (std::size_t t = 0; t <= seq.size(); ++t) {
        auto& nm = next_mass[prefix];
        if (nm.empty()) nm.assign(static_cast<std::size_t>(num_labels) + 1, 0.0);
        const Label next = t < seq.size() ? seq[t] : kStop;
        nm[static_cast<std::size_t>(next)] += p;
        prefix_mass[prefix] += p;
        if (t < seq.size()) prefix.push_back(seq[t]);
      }
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("sequence probabilities must sum to 1");
    for (const auto& [prefix, nm] : next_mass) {
      const double mass = prefix_mass[prefix];
      if (mass <= 0.0) continue;
      std::vector<double> row(nm.size());
      for (std::size_t i = 0; i < nm.size(); ++i) row[i] = nm[i] / mass;
      m.rows_[key(prefix)] = std::move(row);
    }
    return m;
  }

  [[nodiscard]] int num_labels() const { return num_labels_; }

  /// p(next | prefix) for next in {STOP, 1..L}.
  [[nodiscard]] const std::vector<double>& row(const LabelSequence& prefix) const {
    validate_sequence(prefix, num_labels_, true);
    return rows_.at(key(prefix));
  }

  void set_row(const LabelSequence& prefix, std::vector<double> row) {
    validate_sequence(prefix, num_labels_, true);
    if (row.size() != static_cast<std::size_t>(num_labels_) + 1) throw InputError("row must have L+1 entries");
    double total = 0.0;
    for (Label l = 0; l <= num_labels_; ++l) {
      const double p = row[static_cast<std::size_t>(l)];
      if (!(p >= 0.0)) throw InputError("row entries must be non-negative");
      if (contains(prefix, l) && p != 0.0) throw InputError("row gives mass to a label already in the prefix");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("row must sum to 1");
    rows_[key(prefix)] = std::move(row);
  }

  class Session {
   public:
    struct State {};

    explicit Session(const TabularModel& model) : model_(&model) {}
    [[nodiscard]] State initial_state() const { return {}; }
    [[nodiscard]] int num_labels() const { return model_->num_labels_; }
    [[nodiscard]] bool repeat_masking() const { return true; }

    StepResult<State> step(const State& /*parent*/, const LabelSequence& prefix) const {
      const auto& probs = model_->row(prefix);
      StepResult<State> out;
      out.log_probs.resize(probs.size());
      for (std::size_t i = 0; i < probs.size(); ++i) out.log_probs[i] = std::log(probs[i]);
      return out;
    }

   private:
    const TabularModel* model_;
  };

  [[nodiscard]] Session start(const Document& /*doc*/) const { return Session(*this); }

 private:
  static bool contains(const LabelSequence& prefix, Label l) {
    for (Label p : prefix) {
      if (p == l) return true;
    }
    return false;
  }

  // 4 bits per label, at most 8 labels: fits in 32 bits.
  static std::uint64_t key(const LabelSequence& prefix) {
    std::uint64_t k = 0;
    for (Label l : prefix) k = (k << 4) | static_cast<std::uint64_t>(l);
    return k;
  }

  void for_each_prefix(const std::function<void(const LabelSequence&)>& visit) const {
    LabelSequence prefix;
    std::vector<bool> used(static_cast<std::size_t>(num_labels_) + 1, false);
    std::function<void()> rec = [&]() {
      visit(prefix);
      for (Label l = 1; l <= num_labels_; ++l) {
        if (used[static_cast<std::size_t>(l)]) continue;
        used[static_cast<std::size_t>(l)] = true;
        prefix.push_back(l);
        rec();
        prefix.pop_back();
        used[static_cast<std::size_t>(l)] = false;
      }
    };
    rec();
  }

  int num_labels_;
  std::unordered_map<std::uint64_t, std::vector<double>> rows_;
};

}  // namespace setrnn

#endif  // SETRNN_TABULAR_MODEL_HPP
