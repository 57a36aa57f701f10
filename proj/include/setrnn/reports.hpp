#ifndef SETRNN_REPORTS_HPP
#define SETRNN_REPORTS_HPP

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "setrnn/dataset.hpp"
#include "setrnn/metrics.hpp"
#include "setrnn/predictor.hpp"

namespace setrnn {

// Prediction files are line-delimited JSON: one header line naming the label
// universe and the decoding setup, then one record per document.

inline constexpr const char* kPredictionFormat = "setrnn-predictions";
inline constexpr int kPredictionVersion = 1;

struct PredictionHeader {
  std::vector<std::string> labels;  // label names by id, starting at id 1
  std::string strategy;             // "topset" or "topseq"
  int beam_width = 0;
};

struct SequenceEntry {
  LabelSequence labels;
  double logprob = kNegInf;
};

struct CandidateEntry {
  LabelSet labels;
  double logprob = kNegInf;
  std::vector<SequenceEntry> sequences;
};

struct PredictionEntry {
  std::string id;
  LabelSet gold;
  LabelSet predicted;
  double set_logprob = kNegInf;
  LabelSequence top_sequence;
  double top_sequence_logprob = kNegInf;
  std::vector<CandidateEntry> candidates;  // level-2 table
  std::vector<std::vector<std::string>> attention;  // top attended words per decoding step

  /// Sequence probabilities of the predicted set's level-2 list.
  [[nodiscard]] std::vector<double> permutation_probs() const {
    std::vector<double> out;
    for (const auto& c : candidates) {
      if (c.labels != predicted) continue;
      for (const auto& s : c.sequences) out.push_back(std::exp(s.logprob));
    }
    return out;
  }

  [[nodiscard]] PredictionRecord record() const {
    auto probs = permutation_probs();
    std::optional<std::vector<double>> p;
    if (!probs.empty()) p = std::move(probs);
    return {gold, predicted, std::move(p)};
  }
};

inline CandidateEntry candidate_entry(const CandidateSet& c) {
  CandidateEntry e{c.labels, c.logprob, {}};
  for (const auto& s : c.sequences) e.sequences.push_back({s.labels, s.logprob});
  return e;
}

/// Builds the record for one document under the given strategy. The level-2
/// table always contains the predicted set, so entropy is available for both.
template <SequenceModel M>
PredictionEntry make_prediction(const M& model, const Instance& inst, const std::string& strategy, int beam_width,
                                int max_len = 50) {
  PredictionEntry e;
  e.id = inst.id;
  e.gold = inst.labels;
  if (strategy == "topset") {
    const auto p = predict_top_set(model, inst.doc, beam_width, max_len);
    e.predicted = p.labels;
    e.set_logprob = p.logprob;
    e.top_sequence = p.top_sequence.labels;
    e.top_sequence_logprob = p.top_sequence.logprob;
    for (const auto& c : p.candidates) e.candidates.push_back(candidate_entry(c));
  } else if (strategy == "topseq") {
    const auto p = predict_top_sequence(model, inst.doc, beam_width, max_len);
    e.predicted = p.labels;
    e.top_sequence = p.sequence.labels;
    e.top_sequence_logprob = p.sequence.logprob;
    CandidateSet c;
    c.labels = p.labels;
    if (c.labels.empty()) {
      c.sequences.push_back({{}, p.sequence.logprob, true});
    } else {
      c.sequences = beam_search(model, inst.doc, BeamConfig{beam_width, true, max_len, c.labels});
    }
    c.logprob = total_logprob(c.sequences);
    e.set_logprob = c.logprob;
    e.candidates.push_back(candidate_entry(c));
  } else {
    throw ConfigError("unknown strategy '" + strategy + "' (expected topset or topseq)");
  }
  return e;
}

namespace detail {

inline nlohmann::json names_json(const PredictionHeader& h, const std::vector<Label>& ids) {
  nlohmann::json out = nlohmann::json::array();
  for (Label l : ids) out.push_back(h.labels.at(static_cast<std::size_t>(l - 1)));
  return out;
}

inline nlohmann::json logprob_json(double lp) { return std::isfinite(lp) ? nlohmann::json(lp) : nlohmann::json(); }

inline double logprob_from(const nlohmann::json& j) { return j.is_null() ? kNegInf : j.get<double>(); }

}  // namespace detail

inline nlohmann::json to_json(const PredictionHeader& h) {
  return {{"format", kPredictionFormat},
          {"version", kPredictionVersion},
          {"labels", h.labels},
          {"strategy", h.strategy},
          {"beam", h.beam_width}};
}

inline nlohmann::json to_json(const PredictionHeader& h, const PredictionEntry& e) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : e.candidates) {
    nlohmann::json seqs = nlohmann::json::array();
    for (const auto& s : c.sequences) {
      seqs.push_back({{"labels", detail::names_json(h, s.labels)}, {"logprob", detail::logprob_json(s.logprob)}});
    }
    cands.push_back({{"labels", detail::names_json(h, c.labels.labels())},
                     {"logprob", detail::logprob_json(c.logprob)},
                     {"sequences", std::move(seqs)}});
  }
  nlohmann::json j = {{"id", e.id},
                      {"gold", detail::names_json(h, e.gold.labels())},
                      {"predicted", detail::names_json(h, e.predicted.labels())},
                      {"set_logprob", detail::logprob_json(e.set_logprob)},
                      {"top_sequence", detail::names_json(h, e.top_sequence)},
                      {"top_sequence_logprob", detail::logprob_json(e.top_sequence_logprob)},
                      {"candidates", std::move(cands)}};
  if (!e.attention.empty()) j["attention"] = e.attention;
  return j;
}

class PredictionWriter {
 public:
  PredictionWriter(std::ostream& out, PredictionHeader header) : out_(out), header_(std::move(header)) {
    out_ << to_json(header_).dump() << '\n';
  }
  void write(const PredictionEntry& e) { out_ << to_json(header_, e).dump() << '\n'; }

 private:
  std::ostream& out_;
  PredictionHeader header_;
};

struct PredictionFile {
  PredictionHeader header;
  std::vector<PredictionEntry> entries;
};

inline PredictionFile read_predictions(std::istream& in, const std::string& source = "<stream>") {
  PredictionFile f;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::map<std::string, Label> ids;
  auto fail = [&](const std::string& msg) { throw DataError(source + ":" + std::to_string(lineno) + ": " + msg); };
  auto to_ids = [&](const nlohmann::json& names) {
    std::vector<Label> out;
    for (const auto& n : names) {
      auto it = ids.find(n.get<std::string>());
      if (it == ids.end()) fail("unknown label '" + n.get<std::string>() + "'");
      out.push_back(it->second);
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("format", std::string()) != kPredictionFormat) fail("missing prediction file header");
        if (j.at("version").get<int>() != kPredictionVersion) fail("unsupported prediction file version");
        f.header.labels = j.at("labels").get<std::vector<std::string>>();
        f.header.strategy = j.at("strategy").get<std::string>();
        f.header.beam_width = j.at("beam").get<int>();
        for (std::size_t i = 0; i < f.header.labels.size(); ++i) {
          if (!ids.emplace(f.header.labels[i], static_cast<Label>(i + 1)).second) fail("duplicate label in header");
        }
        have_header = true;
        continue;
      }
      PredictionEntry e;
      e.id = j.at("id").get<std::string>();
      e.gold = LabelSet(to_ids(j.at("gold")));
      e.predicted = LabelSet(to_ids(j.at("predicted")));
      e.set_logprob = detail::logprob_from(j.at("set_logprob"));
      e.top_sequence = to_ids(j.at("top_sequence"));
      e.top_sequence_logprob = detail::logprob_from(j.at("top_sequence_logprob"));
      for (const auto& c : j.at("candidates")) {
        CandidateEntry ce{LabelSet(to_ids(c.at("labels"))), detail::logprob_from(c.at("logprob")), {}};
        for (const auto& s : c.at("sequences")) {
          ce.sequences.push_back({to_ids(s.at("labels")), detail::logprob_from(s.at("logprob"))});
        }
        e.candidates.push_back(std::move(ce));
      }
      if (j.contains("attention")) e.attention = j.at("attention").get<std::vector<std::vector<std::string>>>();
      f.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad prediction record: ") + e.what());
    } catch (const InputError& e) {
      fail(e.what());
    }
  }
  if (!have_header) throw DataError(source + ": empty prediction file");
  return f;
}

inline PredictionFile read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file " + path.string());
  return read_predictions(in, path.string());
}

inline std::vector<PredictionRecord> prediction_records(const PredictionFile& f) {
  std::vector<PredictionRecord> out;
  out.reserve(f.entries.size());
  for (const auto& e : f.entries) out.push_back(e.record());
  return out;
}

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Mean normalized permutation entropy over records that carry probabilities.
inline std::optional<double> mean_normalized_entropy(std::span<const PredictionRecord> records) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.permutation_probs) continue;
    total += normalized_entropy(*r.permutation_probs);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

/// Tab-separated key/value block, a blank line, then one row per label.
inline std::string metrics_report(std::span<const PredictionRecord> records, const std::vector<std::string>& names) {
  const int L = static_cast<int>(names.size());
  std::ostringstream os;
  os << "metric\tvalue\n";
  os << "instances\t" << records.size() << '\n';
  os << "labels\t" << L << '\n';
  os << "label_f1\t" << detail::fixed(label_f1(records, L)) << '\n';
  os << "instance_f1\t" << detail::fixed(instance_f1(records)) << '\n';
  os << "micro_f1\t" << detail::fixed(micro_f1(records)) << '\n';
  os << "hamming_loss\t" << detail::fixed(hamming_loss(records, L)) << '\n';
  if (auto h = mean_normalized_entropy(records)) os << "mean_normalized_entropy\t" << detail::fixed(*h) << '\n';
  os << '\n' << "label\tname\tgold\tpredicted\ttrue_positive\tf1\n";
  for (const auto& s : per_label_scores(records, L)) {
    os << s.label << '\t' << names[static_cast<std::size_t>(s.label - 1)] << '\t' << s.gold_count << '\t'
       << s.predicted_count << '\t' << s.true_positives << '\t' << detail::fixed(s.f1) << '\n';
  }
  return os.str();
}

struct EntropyHistogram {
  std::vector<std::size_t> counts;  // bin i covers [i/B, (i+1)/B); the last bin is closed
  std::size_t total = 0;
  double mean = 0.0;
};

inline EntropyHistogram entropy_histogram(std::span<const PredictionRecord> records, int bins = 10) {
  if (bins < 1) throw InputError("histogram needs at least one bin");
  EntropyHistogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  double sum = 0.0;
  for (const auto& r : records) {
    if (!r.permutation_probs) continue;
    const double e = normalized_entropy(*r.permutation_probs);
    auto bin = static_cast<std::size_t>(e * bins);
    if (bin >= h.counts.size()) bin = h.counts.size() - 1;
    ++h.counts[bin];
    ++h.total;
    sum += e;
  }
  if (h.total > 0) h.mean = sum / static_cast<double>(h.total);
  return h;
}

inline std::string entropy_table(const EntropyHistogram& h) {
  std::ostringstream os;
  os << "bin_low\tbin_high\tcount\tfraction\n";
  const auto bins = static_cast<double>(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double frac = h.total == 0 ? 0.0 : static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
    os << detail::fixed(static_cast<double>(i) / bins, 2) << '\t' << detail::fixed(static_cast<double>(i + 1) / bins, 2)
       << '\t' << h.counts[i] << '\t' << detail::fixed(frac) << '\n';
  }
  os << "# predictions\t" << h.total << '\n';
  os << "# mean_normalized_entropy\t" << detail::fixed(h.mean) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace setrnn

#endif  // SETRNN_REPORTS_HPP
