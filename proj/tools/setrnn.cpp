// Command-line front end: training, prediction, evaluation, synthetic data and
// the built-in verification suites.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "setrnn/checkpoint.hpp"
#include "setrnn/gradcheck.hpp"
#include "setrnn/oracle_check.hpp"
#include "setrnn/reports.hpp"
#include "setrnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace setrnn;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Options bound to variables, also settable from the --config JSON object.
// Keys are the long option names with '-' or '_'; config values win.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file; its values override flags")->check(CLI::ExistingFile);
  }

  template <class T>
  CLI::Option* add(const std::string& names, T& var, const std::string& help) {
    auto* opt = app_->add_option(names, var, help)->capture_default_str();
    for (const auto& n : opt->get_lnames()) register_key(n, var);
    return opt;
  }

  CLI::Option* flag(const std::string& names, bool& var, const std::string& help) {
    auto* opt = app_->add_flag(names, var, help);
    for (const auto& n : opt->get_lnames()) register_key(n, var);
    return opt;
  }

  /// Applies the config file, if any. Unknown keys are configuration errors.
  void apply_config() const {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw ConfigError("cannot open config " + config_path_);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + config_path_ + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    apply(j);
  }

 private:
  template <class T>
  void register_key(std::string name, T& var) {
    while (!name.empty() && name.front() == '-') name.erase(0, 1);
    for (char& c : name) {
      if (c == '-') c = '_';
    }
    setters_[name] = [&var, name](const nlohmann::json& v) {
      try {
        var = v.get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + name + "': " + e.what());
      }
    };
  }

  void apply(const nlohmann::json& j) const {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {  // nested sections such as "model" are flattened
        apply(value);
        continue;
      }
      std::string k = key;
      for (char& c : k) {
        if (c == '-') c = '_';
      }
      auto it = setters_.find(k);
      if (it == setters_.end()) throw ConfigError("unknown config key '" + key + "' for command " + app_->get_name());
      it->second(value);
    }
  }

  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::function<void(const nlohmann::json&)>> setters_;
};

struct Common {
  std::uint64_t seed = 1;
  int precision = 64;

  void add_to(Options& o) {
    o.add("--seed", seed, "random seed");
    o.add("--precision", precision, "floating point width (32 or 64)")->check(CLI::IsMember({32, 64}));
  }

  void validate() const {
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  }
};

template <class F>
int with_precision(int precision, F&& f) {
  if (precision == 32) return f.template operator()<float>();
  return f.template operator()<double>();
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string train_path;
  std::string out;
  std::string epoch_log;
  std::string resume;
  std::string stopwords;
  std::string objective = "setrnn";
  int train_beam = 12;
  int switch_epoch = -1;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 5e-4;
  int max_len = 50;
  int checkpoint_interval = 0;
  double validation_fraction = 0.0;
  int patience = 0;
  ModelConfig model;
  std::size_t max_vocab = 0;

  void add_to(Options& o) {
    common.add_to(o);
    o.add("--train", train_path, "training records (JSON lines)")->required();
    o.add("--out", out, "checkpoint to write")->required();
    o.add("--epoch-log", epoch_log, "epoch log TSV (default: <out>.epochs.tsv)");
    o.add("--resume", resume, "checkpoint to continue training from");
    o.add("--stopwords", stopwords, "stopword file replacing the built-in list");
    o.add("--objective", objective, "seq2seq | vmax | vuniform | vsample | setrnn");
    o.add("--train-beam", train_beam, "beam width K of the training search");
    o.add("--switch-epoch", switch_epoch, "epoch where vmax/vsample replace vuniform (-1: 30% of epochs)");
    o.add("--epochs", epochs, "number of epochs");
    o.add("--batch-size", batch_size, "mini-batch size");
    o.add("--learning-rate,--lr", learning_rate, "Adam learning rate");
    o.add("--max-len", max_len, "maximum decode length");
    o.add("--checkpoint-interval", checkpoint_interval, "epochs between checkpoints (0: only at the end)");
    o.add("--validation-fraction", validation_fraction, "held-out fraction for validation loss");
    o.add("--patience", patience, "early stopping patience in epochs (0: off)");
    o.add("--embed-dim", model.embed_dim, "word and label embedding width");
    o.add("--hidden-dim", model.hidden_dim, "GRU hidden width");
    o.add("--attention-dim", model.attention_dim, "attention width");
    o.add("--output-dim", model.output_dim, "output network hidden width");
    o.add("--num-layers", model.num_layers, "GRU layers in encoder and decoder");
    o.add("--max-doc-len", model.max_doc_len, "document length after truncation or padding");
    o.add("--dropout", model.dropout, "dropout rate during training");
    o.flag("--repeat-masking,!--no-repeat-masking", model.repeat_masking, "forbid repeated labels");
    o.add("--max-vocab", max_vocab, "word vocabulary limit (0: unlimited)");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.model = model;
    c.objective.kind = parse_objective(objective);
    c.objective.beam_width = train_beam;
    if (switch_epoch >= 0) c.objective.switch_epoch = switch_epoch;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.learning_rate = learning_rate;
    c.seed = common.seed;
    c.max_len = max_len;
    c.precision = common.precision;
    c.checkpoint_interval = checkpoint_interval;
    c.validation_fraction = validation_fraction;
    c.patience = patience;
    return c;
  }
};

std::string epoch_log_tsv(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << "epoch\tobjective\tmean_loss\tvalidation_loss\twall_seconds\n";
  char buf[64];
  for (const auto& r : log) {
    os << r.epoch + 1 << '\t' << r.objective << '\t';
    std::snprintf(buf, sizeof buf, "%.9f", r.mean_loss);
    os << buf << '\t';
    if (r.validation_loss) {
      std::snprintf(buf, sizeof buf, "%.9f", *r.validation_loss);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_seconds);
    os << '\t' << buf << '\n';
  }
  return os.str();
}

int run_train(const TrainArgs& a) {
  a.common.validate();
  TrainConfig cfg = a.config();
  cfg.validate();
  const Tokenizer tok = a.stopwords.empty() ? Tokenizer() : Tokenizer::with_stopword_file(a.stopwords);

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    cfg.model = resumed->model_config();  // architecture is fixed by the checkpoint
  }
  LoadOptions lo;
  lo.max_doc_len = cfg.model.max_doc_len;
  lo.max_labels = cfg.max_len;
  lo.max_vocab = a.max_vocab;
  const Dataset ds = load_dataset(resolve_data_path(a.train_path), resumed ? &resumed->vocab : nullptr, lo, tok);
  report_rejections(ds.stats, std::cerr);
  const TrainingData data = training_data(ds);
  const std::string log_path = a.epoch_log.empty() ? a.out + ".epochs.tsv" : a.epoch_log;

  return with_precision(cfg.precision, [&]<class Real>() {
    TrainerState<Real> state =
        resumed ? resumed->template trainer_state<Real>() : initial_trainer_state<Real>(data, cfg);
    auto save = [&]() {
      save_checkpoint(a.out, Checkpoint::from_state(cfg, ds.vocab, state));
      write_text(log_path, epoch_log_tsv(state.log));
    };
    train(state, data, cfg, [&](int done) {
      const auto& r = state.log.back();
      std::fprintf(stderr, "epoch %d/%d  %s  loss %.6f  (%.1fs)\n", done, cfg.epochs, r.objective.c_str(),
                   r.mean_loss, r.wall_seconds);
      if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0) save();
    });
    if (state.stopped_early) std::fprintf(stderr, "early stop after %d epochs\n", state.epochs_completed);
    save();
    std::printf("wrote %s (%d epochs)\n", a.out.c_str(), state.epochs_completed);
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  Common common;
  std::string checkpoint;
  std::string tabular;
  std::string data;
  std::string out;
  std::string strategy = "topset";
  std::string unknown_labels = "skip";
  int beam = 12;
  int max_len = 50;
  int attention_top = 0;

  void add_to(Options& o) {
    common.add_to(o);
    o.add("--checkpoint", checkpoint, "trained checkpoint");
    o.add("--tabular", tabular, "tabular model file instead of a checkpoint");
    o.add("--data", data, "records to predict (JSON lines)")->required();
    o.add("--out", out, "prediction file to write")->required();
    o.add("--strategy", strategy, "topset | topseq")->check(CLI::IsMember({"topset", "topseq"}));
    o.add("-K,--beam", beam, "beam width at both search levels");
    o.add("--max-len", max_len, "maximum decode length");
    o.add("--attention-top", attention_top, "record the N most attended words per decoding step");
    o.add("--unknown-labels", unknown_labels, "skip | error")->check(CLI::IsMember({"skip", "error"}));
  }
};

template <SequenceModel M>
void predict_all(const PredictArgs& a, const M& model, const Vocabularies& vocab, const Dataset& ds) {
  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  PredictionHeader header;
  for (Label l = 1; l <= vocab.labels.size(); ++l) header.labels.push_back(vocab.labels.name(l));
  header.strategy = a.strategy;
  header.beam_width = a.beam;
  PredictionWriter writer(out, header);
  for (const auto& inst : ds.instances) {
    auto e = make_prediction(model, inst, a.strategy, a.beam, a.max_len);
    if constexpr (requires { model.config(); }) {
      if (a.attention_top > 0) {
        // only positions holding real words are ranked
        const std::size_t n = std::min(inst.doc.original_length, inst.doc.tokens.size());
        Document real{{inst.doc.tokens.begin(), inst.doc.tokens.begin() + static_cast<std::ptrdiff_t>(n)}, n};
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(a.attention_top), n);
        for (const auto& step : step_trace(model, inst.doc, e.top_sequence)) {
          std::vector<double> weights(step.attention.begin(), step.attention.begin() + static_cast<std::ptrdiff_t>(n));
          std::vector<std::string> words;
          for (auto id : top_attended_tokens(weights, real, k)) {
            words.push_back(vocab.words.words().at(static_cast<std::size_t>(id)));
          }
          e.attention.push_back(std::move(words));
        }
      }
    }
    writer.write(e);
  }
  if (!out) throw DataError("failed writing " + a.out);
  std::printf("wrote %zu predictions to %s\n", ds.instances.size(), a.out.c_str());
}

int run_predict(const PredictArgs& a) {
  a.common.validate();
  if (a.beam < 1) throw ConfigError("beam width must be >= 1");
  if (a.max_len < 1) throw ConfigError("max_len must be >= 1");
  if (a.attention_top < 0) throw ConfigError("attention-top must be >= 0");
  if (a.strategy != "topset" && a.strategy != "topseq") throw ConfigError("strategy must be topset or topseq");
  if (a.checkpoint.empty() == a.tabular.empty()) throw ConfigError("give exactly one of --checkpoint or --tabular");
  LoadOptions lo;
  lo.max_labels = std::numeric_limits<int>::max();
  lo.unknown_labels = a.unknown_labels == "error" ? UnknownLabelPolicy::kError : UnknownLabelPolicy::kSkipLabel;
  const auto data_path = resolve_data_path(a.data);

  if (!a.tabular.empty()) {
    auto spec = load_tabular_spec(a.tabular);
    const auto records = read_records(data_path);
    const Tokenizer tok;
    Vocabularies vocab{build_vocabularies(records, tok, lo).words, std::move(spec.labels)};
    Dataset ds;
    ds.instances = make_instances(records, vocab, tok, lo, ds.stats);
    report_rejections(ds.stats, std::cerr);
    predict_all(a, spec.model, vocab, ds);
    return kOk;
  }

  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  lo.max_doc_len = ckpt.config.model.max_doc_len;
  const Dataset ds = load_dataset(data_path, &ckpt.vocab, lo);
  report_rejections(ds.stats, std::cerr);
  return with_precision(a.common.precision, [&]<class Real>() {
    predict_all(a, ckpt.template model<Real>(), ckpt.vocab, ds);
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// evaluate / inspect-entropy

struct ReportArgs {
  Common common;
  std::string predictions;
  std::string out;
  int bins = 10;

  void add_to(Options& o, bool histogram) {
    common.add_to(o);
    o.add("--predictions", predictions, "prediction file")->required();
    o.add("--out", out, "report file (default: stdout)");
    if (histogram) o.add("--bins", bins, "histogram bins");
  }
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

int run_evaluate(const ReportArgs& a) {
  const auto file = read_predictions(fs::path(a.predictions));
  const auto records = prediction_records(file);
  const std::string report = metrics_report(records, file.header.labels);
  emit(a.out, report);
  if (!a.out.empty()) {
    std::printf("label_f1\t%.6f\n", label_f1(records, static_cast<int>(file.header.labels.size())));
    std::printf("instance_f1\t%.6f\n", instance_f1(records));
  }
  return kOk;
}

int run_entropy(const ReportArgs& a) {
  if (a.bins < 1) throw ConfigError("bins must be >= 1");
  const auto file = read_predictions(fs::path(a.predictions));
  const auto records = prediction_records(file);
  emit(a.out, entropy_table(entropy_histogram(records, a.bins)));
  return kOk;
}

// ---------------------------------------------------------------------------
// gen-synth

struct SynthArgs {
  Common common;
  SynthConfig synth;
  std::string train_out;
  std::string test_out;
  double test_fraction = 0.2;

  void add_to(Options& o) {
    common.add_to(o);
    o.add("--train-out", train_out, "training split output")->required();
    o.add("--test-out", test_out, "test split output (omit to write everything to --train-out)");
    o.add("--test-fraction", test_fraction, "fraction of documents in the test split");
    o.add("--num-docs", synth.num_docs, "number of documents");
    o.add("--num-labels", synth.num_labels, "number of labels");
    o.add("--vocab-size", synth.vocab_size, "word vocabulary size");
    o.add("--max-set-size", synth.max_set_size, "largest label set");
    o.add("--signature-size", synth.signature_size, "signature words per label");
    o.add("--noise-rate", synth.noise_rate, "noise words per signature word");
  }
};

void write_records_file(const std::string& path, const std::vector<DatasetRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_records(out, recs);
  if (!out) throw DataError("failed writing " + path);
}

int run_gen_synth(SynthArgs a) {
  if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0)) throw ConfigError("test-fraction must lie in [0, 1)");
  a.synth.seed = a.common.seed;
  const auto recs = gen_synth(a.synth);
  if (a.test_out.empty()) {
    write_records_file(a.train_out, recs);
    std::printf("wrote %zu records to %s\n", recs.size(), a.train_out.c_str());
    return kOk;
  }
  const auto n_test = static_cast<std::size_t>(a.test_fraction * static_cast<double>(recs.size()));
  const auto split = recs.end() - static_cast<std::ptrdiff_t>(n_test);
  write_records_file(a.train_out, {recs.begin(), split});
  write_records_file(a.test_out, {split, recs.end()});
  std::printf("wrote %zu training and %zu test records\n", recs.size() - n_test, n_test);
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck / oracle-check

struct CheckArgs {
  Common common;
  double tolerance = 0.0;
  int models = 50;
  bool verbose = false;

  void add_to(Options& o, bool oracle) {
    common.add_to(o);
    tolerance = oracle ? 1e-12 : 1e-4;
    o.add("--tolerance", tolerance, "maximum relative error");
    if (oracle) o.add("--models", models, "number of random tabular models");
    o.flag("--verbose,-v", verbose, "per-block or per-case detail");
  }
};

int run_gradcheck(const CheckArgs& a) {
  if (a.common.precision != 64) throw ConfigError("gradcheck runs in 64-bit precision only");
  GradCheckConfig gc;
  gc.seed = a.common.seed;
  double worst = 0.0;
  for (const auto& r : run_gradcheck_suite(gc)) {
    std::printf("%-9s %-7s max_rel_error %.3e\n", std::string(objective_token(r.kind)).c_str(),
                r.full_objective ? "loss" : "frozen", r.max_rel_error);
    if (a.verbose) {
      for (const auto& b : r.blocks) {
        std::printf("    %-28s |g| %.3e  |fd| %.3e  rel %.3e\n", b.name.c_str(), b.grad_norm, b.fd_norm, b.rel_error);
      }
    }
    worst = std::max(worst, r.max_rel_error);
  }
  const bool ok = worst < a.tolerance;
  std::printf("max relative error %.3e (tolerance %.1e): %s\n", worst, a.tolerance, ok ? "PASS" : "FAIL");
  return ok ? kOk : kNumeric;
}

int run_oracle_check(const CheckArgs& a) {
  if (a.models < 1) throw ConfigError("models must be >= 1");
  int failed = 0;
  double worst = 0.0;
  const auto cases = run_oracle_suite(a.common.seed, a.models);
  for (const auto& c : cases) {
    const bool ok = c.passed(a.tolerance);
    failed += ok ? 0 : 1;
    worst = std::max(worst, c.max_rel_error);
    if (a.verbose || !ok) std::printf("%s %s\n", ok ? "ok  " : "FAIL", describe(c).c_str());
  }
  std::printf("%zu cases, %d failed, max relative error %.3e: %s\n", cases.size(), failed, worst,
              failed == 0 ? "PASS" : "FAIL");
  return failed == 0 ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Set-probability multi-label classification with sequence models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  TrainArgs train_args;
  PredictArgs predict_args;
  ReportArgs eval_args;
  ReportArgs entropy_args;
  SynthArgs synth_args;
  CheckArgs grad_args;
  CheckArgs oracle_args;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus epoch log");
  auto* predict_cmd = app.add_subcommand("predict", "predict label sets with a checkpoint");
  auto* eval_cmd = app.add_subcommand("evaluate", "metrics report for a prediction file");
  auto* entropy_cmd = app.add_subcommand("inspect-entropy", "permutation entropy histogram for a prediction file");
  auto* synth_cmd = app.add_subcommand("gen-synth", "write a synthetic dataset");
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every objective's gradient");
  auto* oracle_cmd = app.add_subcommand("oracle-check", "set-restricted beam search against enumeration");

  Options train_opts(train_cmd), predict_opts(predict_cmd), eval_opts(eval_cmd), entropy_opts(entropy_cmd),
      synth_opts(synth_cmd), grad_opts(grad_cmd), oracle_opts(oracle_cmd);
  train_args.add_to(train_opts);
  predict_args.add_to(predict_opts);
  eval_args.add_to(eval_opts, false);
  entropy_args.add_to(entropy_opts, true);
  synth_args.add_to(synth_opts);
  grad_args.add_to(grad_opts, false);
  oracle_args.add_to(oracle_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train_cmd->parsed()) {
      train_opts.apply_config();
      return run_train(train_args);
    }
    if (predict_cmd->parsed()) {
      predict_opts.apply_config();
      return run_predict(predict_args);
    }
    if (eval_cmd->parsed()) {
      eval_opts.apply_config();
      return run_evaluate(eval_args);
    }
    if (entropy_cmd->parsed()) {
      entropy_opts.apply_config();
      return run_entropy(entropy_args);
    }
    if (synth_cmd->parsed()) {
      synth_opts.apply_config();
      return run_gen_synth(synth_args);
    }
    if (grad_cmd->parsed()) {
      grad_opts.apply_config();
      return run_gradcheck(grad_args);
    }
    if (oracle_cmd->parsed()) {
      oracle_opts.apply_config();
      return run_oracle_check(oracle_args);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kNumeric;
  }
  return kUsage;
}
