#ifndef SETRNN_TRAINER_HPP
#define SETRNN_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "setrnn/adam.hpp"
#include "setrnn/dataset.hpp"
#include "setrnn/neural_model.hpp"
#include "setrnn/objectives.hpp"
#include "setrnn/parameters.hpp"

namespace setrnn {

struct TrainConfig {
  ModelConfig model;  // vocab_size / num_labels are filled from the data
  ObjectiveSpec objective;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 5e-4;
  std::uint64_t seed = 1;
  int max_len = 50;  // maximum decode length
  int precision = 64;
  int checkpoint_interval = 0;  // epochs between checkpoints, 0 = only at the end
  double validation_fraction = 0.0;
  int patience = 0;  // 0 disables early stopping

  void validate() const {
    objective.validate();
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    if (patience < 0) throw ConfigError("patience must be >= 0");
  }
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
  std::string objective;
  std::optional<double> validation_loss;
};

/// Mean objective loss per epoch.
inline std::vector<double> epoch_loss_curve(const std::vector<EpochRecord>& log) {
  std::vector<double> out;
  out.reserve(log.size());
  for (const auto& r : log) out.push_back(r.mean_loss);
  return out;
}

struct TrainingData {
  std::vector<Instance> instances;
  LabelFrequencies frequencies;
  int vocab_size = 0;
  int num_labels = 0;
};

template <std::floating_point Real>
struct TrainerState {
  NeuralModel<Real> model;
  AdamState<Real> optimizer;
  std::vector<EpochRecord> log;
  int epochs_completed = 0;
  bool stopped_early = false;
};

namespace detail {

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

inline std::string describe_sequences(const std::vector<WeightedSequence>& pairs) {
  std::ostringstream os;
  for (const auto& p : pairs) {
    os << " (";
    for (std::size_t i = 0; i < p.labels.size(); ++i) os << (i ? "," : "") << p.labels[i];
    os << ")";
  }
  return os.str();
}

}  // namespace detail

/// Fresh model and optimizer for the data, initialized from cfg.seed.
template <std::floating_point Real>
TrainerState<Real> initial_trainer_state(const TrainingData& data, const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = data.vocab_size;
  mc.num_labels = data.num_labels;
  auto model = NeuralModel<Real>::initialize(mc, cfg.seed);
  auto opt = AdamState<Real>::fresh(model.parameters());
  return {std::move(model), std::move(opt), {}, 0, false};
}

/// Objective value and weighted sequences for one instance under the current
/// parameters; a non-finite loss aborts with the instance id and sequences.
template <std::floating_point Real>
ObjectiveResult instance_objective(const NeuralModel<Real>& model, const Instance& inst, ObjectiveKind kind,
                                   const TrainConfig& cfg, const LabelFrequencies& freq) {
  try {
    return evaluate_objective(kind, model, inst.doc, inst.labels, cfg.objective.beam_width, freq, cfg.max_len);
  } catch (const NumericError& e) {
    ObjectiveResult r;
    try {
      r = loss_vinyals_uniform(model, inst.doc, inst.labels, cfg.objective.beam_width, cfg.max_len);
    } catch (const Error&) {
    }
    throw NumericError(std::string(e.what()) + " at instance " + inst.id + "; sequences:" +
                       detail::describe_sequences(r.pairs));
  }
}

using EpochCallback = std::function<void(int epochs_completed)>;

/// Mini-batch training. Before every update, each instance of the batch is
/// re-searched under the current parameters, its objective weights are
/// computed, and the mean weighted log-likelihood gradient drives one Adam
/// step. Batches come from a per-epoch shuffle derived from cfg.seed, so a
/// resumed state continues the exact trajectory.
template <std::floating_point Real>
void train(TrainerState<Real>& state, const TrainingData& data, const TrainConfig& cfg,
           const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.instances.empty()) throw InputError("training dataset is empty");
  for (const auto& inst : data.instances) {
    if (inst.labels.empty()) throw InputError("instance " + inst.id + " has an empty label set");
  }

  // Optional validation split: a fixed tail of a seed-derived shuffle.
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> valid_idx;
  {
    auto rng = detail::stream_rng(cfg.seed, 0x5eed);
    auto all = detail::shuffled_indices(data.instances.size(), rng);
    const auto n_valid = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(all.size()));
    if (cfg.validation_fraction > 0.0 && n_valid > 0 && n_valid < all.size()) {
      valid_idx.assign(all.end() - static_cast<std::ptrdiff_t>(n_valid), all.end());
      train_idx.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_valid));
      std::sort(train_idx.begin(), train_idx.end());
    } else {
      for (std::size_t i = 0; i < data.instances.size(); ++i) train_idx.push_back(i);
    }
  }

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (const auto& r : state.log) {
    if (r.validation_loss && *r.validation_loss < best_valid) {
      best_valid = *r.validation_loss;
      since_best = 0;
    } else if (r.validation_loss) {
      ++since_best;
    }
  }

  for (int epoch = state.epochs_completed; epoch < cfg.epochs && !state.stopped_early; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const ObjectiveKind kind = cfg.objective.kind_at(epoch, cfg.epochs);
    auto order_rng = detail::stream_rng(cfg.seed, 1, static_cast<std::uint64_t>(epoch));
    const auto order = detail::shuffled_indices(train_idx.size(), order_rng);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      auto dropout_rng = detail::stream_rng(cfg.seed, 2 + static_cast<std::uint64_t>(epoch), batch_index);
      auto batch_grad = state.model.parameters().zeros_like();
      for (std::size_t k = start; k < stop; ++k) {
        const Instance& inst = data.instances[train_idx[order[k]]];
        const auto obj = instance_objective(state.model, inst, kind, cfg, data.frequencies);
        loss_sum += obj.loss;
        auto g = weighted_nll_gradient(state.model, inst.doc, obj.pairs, &dropout_rng);
        batch_grad.add_scaled(g.gradient, Real(1));
      }
      batch_grad.scale(Real(1) / static_cast<Real>(stop - start));
      adam_update(state.model.parameters(), batch_grad, state.optimizer, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(order.size());
    rec.objective = std::string(objective_token(kind));
    if (!std::isfinite(rec.mean_loss)) throw NumericError("non-finite mean loss in epoch " + std::to_string(epoch));
    if (!valid_idx.empty()) {
      double v = 0.0;
      for (std::size_t i : valid_idx) {
        v += instance_objective(state.model, data.instances[i], kind, cfg, data.frequencies).loss;
      }
      rec.validation_loss = v / static_cast<double>(valid_idx.size());
      if (*rec.validation_loss < best_valid) {
        best_valid = *rec.validation_loss;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        state.stopped_early = true;
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.log.push_back(rec);
    state.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(state.epochs_completed);
  }
}

/// Convenience overload: trains from a fresh state.
template <std::floating_point Real>
TrainerState<Real> train(const TrainingData& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  auto state = initial_trainer_state<Real>(data, cfg);
  train(state, data, cfg, on_epoch);
  return state;
}

/// Builds training data from a loaded dataset.
inline TrainingData training_data(const Dataset& ds) {
  return {ds.instances, ds.vocab.labels.frequencies(), static_cast<int>(ds.vocab.words.size()),
          ds.vocab.labels.size()};
}

}  // namespace setrnn

#endif  // SETRNN_TRAINER_HPP
