#ifndef SETRNN_CHECKPOINT_HPP
#define SETRNN_CHECKPOINT_HPP

#include <nlohmann/json.hpp>

#include <concepts>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "setrnn/adam.hpp"
#include "setrnn/dataset.hpp"
#include "setrnn/parameters.hpp"
#include "setrnn/tabular_model.hpp"
#include "setrnn/trainer.hpp"

namespace setrnn {

// Checkpoint container: a JSON document with a format tag and version, the
// model and training configuration, both vocabularies, every parameter block
// with explicit dimensions (values stored as doubles, column-major), and the
// optimizer state needed to resume training.

inline constexpr const char* kCheckpointFormat = "setrnn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"num_labels", c.num_labels},       {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},   {"attention_dim", c.attention_dim}, {"output_dim", c.output_dim},
          {"num_layers", c.num_layers},   {"max_doc_len", c.max_doc_len},     {"repeat_masking", c.repeat_masking},
          {"dropout", c.dropout}};
}

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Fills the fields present in `j`, leaving the others untouched.
inline void update_from_json(ModelConfig& c, const nlohmann::json& j) {
  detail::read_opt(j, "vocab_size", c.vocab_size);
  detail::read_opt(j, "num_labels", c.num_labels);
  detail::read_opt(j, "embed_dim", c.embed_dim);
  detail::read_opt(j, "hidden_dim", c.hidden_dim);
  detail::read_opt(j, "attention_dim", c.attention_dim);
  detail::read_opt(j, "output_dim", c.output_dim);
  detail::read_opt(j, "num_layers", c.num_layers);
  detail::read_opt(j, "max_doc_len", c.max_doc_len);
  detail::read_opt(j, "repeat_masking", c.repeat_masking);
  detail::read_opt(j, "dropout", c.dropout);
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"model", to_json(c.model)},
                      {"objective", std::string(objective_token(c.objective.kind))},
                      {"train_beam", c.objective.beam_width},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"seed", c.seed},
                      {"max_len", c.max_len},
                      {"precision", c.precision},
                      {"checkpoint_interval", c.checkpoint_interval},
                      {"validation_fraction", c.validation_fraction},
                      {"patience", c.patience}};
  if (c.objective.switch_epoch) j["switch_epoch"] = *c.objective.switch_epoch;
  return j;
}

inline void update_from_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (j.contains("model")) update_from_json(c.model, j.at("model"));
  update_from_json(c.model, j);  // flat keys are accepted too
  if (j.contains("objective")) {
    if (!j.at("objective").is_string()) throw ConfigError("'objective' must be a string");
    c.objective.kind = parse_objective(j.at("objective").get<std::string>());
  }
  detail::read_opt(j, "train_beam", c.objective.beam_width);
  if (j.contains("switch_epoch")) {
    int s = 0;
    detail::read_opt(j, "switch_epoch", s);
    c.objective.switch_epoch = s;
  }
  detail::read_opt(j, "epochs", c.epochs);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "learning_rate", c.learning_rate);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "max_len", c.max_len);
  detail::read_opt(j, "precision", c.precision);
  detail::read_opt(j, "checkpoint_interval", c.checkpoint_interval);
  detail::read_opt(j, "validation_fraction", c.validation_fraction);
  detail::read_opt(j, "patience", c.patience);
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  update_from_json(c, j);
  return c;
}

template <std::floating_point Real>
nlohmann::json blocks_to_json(const ModelParameters<Real>& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : p.blocks()) {
    std::vector<double> data(static_cast<std::size_t>(b.value.size()));
    for (Eigen::Index i = 0; i < b.value.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<double>(b.value.data()[i]);
    arr.push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}, {"data", std::move(data)}});
  }
  return arr;
}

template <std::floating_point Real>
void blocks_from_json(ModelParameters<Real>& p, const nlohmann::json& arr) {
  if (!arr.is_array() || arr.size() != p.num_blocks()) throw DataError("checkpoint parameter block count mismatch");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto& b = p.block(static_cast<int>(i));
    const auto& jb = arr[i];
    const auto name = jb.at("name").get<std::string>();
    const auto rows = jb.at("rows").get<Eigen::Index>();
    const auto cols = jb.at("cols").get<Eigen::Index>();
    if (name != b.name || rows != b.value.rows() || cols != b.value.cols()) {
      throw DataError("checkpoint block '" + name + "' [" + std::to_string(rows) + "x" + std::to_string(cols) +
                      "] does not match expected '" + b.name + "' [" + std::to_string(b.value.rows()) + "x" +
                      std::to_string(b.value.cols()) + "]");
    }
    const auto& data = jb.at("data");
    if (!data.is_array() || data.size() != static_cast<std::size_t>(rows * cols)) {
      throw DataError("checkpoint block '" + name + "' has the wrong number of values");
    }
    for (std::size_t k = 0; k < data.size(); ++k) b.value.data()[k] = static_cast<Real>(data[k].get<double>());
  }
}

/// Everything needed to predict with, or resume training of, a model.
struct Checkpoint {
  TrainConfig config;
  Vocabularies vocab;
  ModelParameters<double> parameters;
  std::optional<AdamState<double>> optimizer;
  std::vector<EpochRecord> log;
  int epochs_completed = 0;

  [[nodiscard]] ModelConfig model_config() const {
    ModelConfig mc = config.model;
    mc.vocab_size = static_cast<int>(vocab.words.size());
    mc.num_labels = vocab.labels.size();
    return mc;
  }

  template <std::floating_point Real>
  [[nodiscard]] NeuralModel<Real> model() const {
    return NeuralModel<Real>(model_config(), parameters.cast<Real>());
  }

  template <std::floating_point Real>
  [[nodiscard]] TrainerState<Real> trainer_state() const {
    auto m = model<Real>();
    AdamState<Real> opt = optimizer ? AdamState<Real>{optimizer->first_moment.cast<Real>(),
                                                      optimizer->second_moment.cast<Real>(), optimizer->step}
                                    : AdamState<Real>::fresh(m.parameters());
    return {std::move(m), std::move(opt), log, epochs_completed, false};
  }

  template <std::floating_point Real>
  static Checkpoint from_state(const TrainConfig& cfg, const Vocabularies& vocab, const TrainerState<Real>& st) {
    Checkpoint c;
    c.config = cfg;
    c.config.model = st.model.config();
    c.vocab = vocab;
    c.parameters = st.model.parameters().template cast<double>();
    c.optimizer = AdamState<double>{st.optimizer.first_moment.template cast<double>(),
                                    st.optimizer.second_moment.template cast<double>(), st.optimizer.step};
    c.log = st.log;
    c.epochs_completed = st.epochs_completed;
    return c;
  }
};

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json labels = nlohmann::json::array();
  for (int l = 1; l <= c.vocab.labels.size(); ++l) {
    labels.push_back({{"name", c.vocab.labels.name(l)}, {"frequency", c.vocab.labels.frequency(l)}});
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : c.log) {
    nlohmann::json e = {{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"wall_seconds", r.wall_seconds},
                        {"objective", r.objective}};
    if (r.validation_loss) e["validation_loss"] = *r.validation_loss;
    log.push_back(std::move(e));
  }
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"config", to_json(c.config)},
                      {"vocabulary", {{"words", c.vocab.words.words()}, {"labels", std::move(labels)}}},
                      {"parameters", blocks_to_json(c.parameters)},
                      {"epochs_completed", c.epochs_completed},
                      {"epoch_log", std::move(log)}};
  if (c.optimizer) {
    j["optimizer"] = {{"step", c.optimizer->step},
                      {"first_moment", blocks_to_json(c.optimizer->first_moment)},
                      {"second_moment", blocks_to_json(c.optimizer->second_moment)}};
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
      throw DataError("not a checkpoint file");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.config = train_config_from_json(j.at("config"));
    c.vocab.words = WordVocabulary::from_words(j.at("vocabulary").at("words").get<std::vector<std::string>>());
    std::vector<std::pair<std::string, std::int64_t>> entries;
    for (const auto& e : j.at("vocabulary").at("labels")) {
      entries.emplace_back(e.at("name").get<std::string>(), e.at("frequency").get<std::int64_t>());
    }
    c.vocab.labels = LabelVocabulary::from_entries(entries);
    const ModelConfig mc = c.model_config();
    if (mc.vocab_size != c.config.model.vocab_size || mc.num_labels != c.config.model.num_labels) {
      throw DataError("checkpoint vocabulary sizes disagree with its model configuration");
    }
    c.parameters = ModelParameters<double>::zeros(mc);
    blocks_from_json(c.parameters, j.at("parameters"));
    if (j.contains("optimizer")) {
      AdamState<double> opt = AdamState<double>::fresh(c.parameters);
      opt.step = j.at("optimizer").at("step").get<std::int64_t>();
      blocks_from_json(opt.first_moment, j.at("optimizer").at("first_moment"));
      blocks_from_json(opt.second_moment, j.at("optimizer").at("second_moment"));
      c.optimizer = std::move(opt);
    }
    c.epochs_completed = j.value("epochs_completed", 0);
    for (const auto& e : j.value("epoch_log", nlohmann::json::array())) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<int>();
      r.mean_loss = e.at("mean_loss").get<double>();
      r.wall_seconds = e.at("wall_seconds").get<double>();
      r.objective = e.value("objective", std::string());
      if (e.contains("validation_loss")) r.validation_loss = e.at("validation_loss").get<double>();
      c.log.push_back(r);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint configuration: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << to_json(c).dump() << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

// Tabular model files list label names and an explicit distribution over
// complete sequences:
//   {"format": "setrnn-tabular", "labels": ["a", "b"],
//    "sequences": [{"labels": ["a"], "p": 0.6}, {"labels": ["b", "a"], "p": 0.4}]}
// Label ids follow the order of "labels".

inline constexpr const char* kTabularFormat = "setrnn-tabular";

struct TabularSpec {
  LabelVocabulary labels;
  TabularModel model;
};

inline TabularSpec tabular_spec_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != kTabularFormat) {
      throw DataError("not a tabular model file");
    }
    const auto names = j.at("labels").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::int64_t>> entries;
    for (const auto& n : names) entries.emplace_back(n, 1);
    LabelVocabulary labels = LabelVocabulary::from_entries(entries);
    std::vector<std::pair<LabelSequence, double>> dist;
    for (const auto& s : j.at("sequences")) {
      LabelSequence seq;
      for (const auto& n : s.at("labels")) {
        auto id = labels.id(n.get<std::string>());
        if (!id) throw DataError("tabular model: unknown label '" + n.get<std::string>() + "'");
        seq.push_back(*id);
      }
      dist.emplace_back(std::move(seq), s.at("p").get<double>());
    }
    auto model = TabularModel::from_sequence_probabilities(labels.size(), dist);
    return {std::move(labels), std::move(model)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tabular model: ") + e.what());
  } catch (const InputError& e) {
    throw DataError(std::string("invalid tabular model: ") + e.what());
  }
}

inline TabularSpec load_tabular_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tabular model " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("tabular model " + path.string() + " is not valid JSON: " + e.what());
  }
  return tabular_spec_from_json(j);
}

}  // namespace setrnn

#endif  // SETRNN_CHECKPOINT_HPP
