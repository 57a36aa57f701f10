#ifndef SETRNN_DATASET_HPP
#define SETRNN_DATASET_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "setrnn/objectives.hpp"
#include "setrnn/stopwords.hpp"
#include "setrnn/types.hpp"

namespace setrnn {

/// One line of a dataset file.
struct DatasetRecord {
  std::string id;
  std::string text;
  std::vector<std::string> labels;
  std::vector<std::string> tags;  // reserved; ignored by the model
};

// ---------------------------------------------------------------------------
// Tokenization

class Tokenizer {
 public:
  Tokenizer() {
    for (auto w : kDefaultStopwords) stopwords_.emplace(w);
  }

  /// Replaces the stopword list with one word per line from `path`.
  static Tokenizer with_stopword_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stopword file " + path.string());
    Tokenizer t;
    t.stopwords_.clear();
    std::string line;
    while (std::getline(in, line)) {
      auto words = split_lower(line);
      for (auto& w : words) t.stopwords_.insert(std::move(w));
    }
    return t;
  }

  /// Whitespace split, lowercase, punctuation stripped, stopwords removed.
  [[nodiscard]] std::vector<std::string> tokenize(const std::string& text) const {
    std::vector<std::string> out;
    for (auto& w : split_lower(text)) {
      if (!stopwords_.contains(w)) out.push_back(std::move(w));
    }
    return out;
  }

 private:
  static std::vector<std::string> split_lower(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string raw;
    while (in >> raw) {
      std::string w;
      for (unsigned char c : raw) {
        if (std::ispunct(c)) continue;
        w.push_back(static_cast<char>(std::tolower(c)));
      }
      if (!w.empty()) out.push_back(std::move(w));
    }
    return out;
  }

  std::unordered_set<std::string> stopwords_;
};

inline bool is_number_token(const std::string& w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

// ---------------------------------------------------------------------------
// Vocabularies

class WordVocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kNumber = 1;
  static constexpr std::int32_t kUnknown = 2;

  WordVocabulary() : words_{"<pad>", "<num>", "<oov>"} { reindex(); }

  /// Words by descending count then lexicographically; max_size 0 keeps all.
  static WordVocabulary build(const std::vector<std::vector<std::string>>& docs, std::size_t max_size = 0,
                              long min_count = 1) {
    std::map<std::string, long> counts;
    for (const auto& d : docs) {
      for (const auto& w : d) {
        if (!is_number_token(w)) ++counts[w];
      }
    }
    std::vector<std::pair<std::string, long>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    WordVocabulary v;
    for (const auto& [w, c] : sorted) {
      if (c < min_count) continue;
      if (max_size != 0 && v.words_.size() >= max_size) break;
      v.words_.push_back(w);
    }
    v.reindex();
    return v;
  }

  static WordVocabulary from_words(std::vector<std::string> words) {
    if (words.size() < 3 || words[0] != "<pad>" || words[1] != "<num>" || words[2] != "<oov>") {
      throw DataError("word vocabulary must start with <pad>, <num>, <oov>");
    }
    WordVocabulary v;
    v.words_ = std::move(words);
    v.reindex();
    return v;
  }

  [[nodiscard]] std::int32_t id(const std::string& word) const {
    if (is_number_token(word)) return kNumber;
    auto it = index_.find(word);
    return it == index_.end() ? kUnknown : it->second;
  }

  [[nodiscard]] std::size_t size() const { return words_.size(); }
  [[nodiscard]] const std::vector<std::string>& words() const { return words_; }
  [[nodiscard]] const std::string& word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }

  friend bool operator==(const WordVocabulary& a, const WordVocabulary& b) { return a.words_ == b.words_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<std::int32_t>(i)).second) {
        throw DataError("duplicate word in vocabulary: " + words_[i]);
      }
    }
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Label names to contiguous ids 1..L, assigned by descending training
/// frequency then name, so frequency order coincides with id order.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  static LabelVocabulary build(const std::vector<std::vector<std::string>>& label_lists) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& labels : label_lists) {
      for (const auto& l : labels) ++counts[l];
    }
    std::vector<std::pair<std::string, std::int64_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return from_entries(sorted);
  }

  static LabelVocabulary from_entries(const std::vector<std::pair<std::string, std::int64_t>>& entries) {
    LabelVocabulary v;
    for (const auto& [name, count] : entries) {
      if (count < 1) throw DataError("label frequency must be >= 1 for " + name);
      if (!v.index_.emplace(name, static_cast<Label>(v.names_.size() + 1)).second) {
        throw DataError("duplicate label in vocabulary: " + name);
      }
      v.names_.push_back(name);
      v.counts_.push_back(count);
    }
    return v;
  }

  [[nodiscard]] std::optional<Label> id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  [[nodiscard]] const std::string& name(Label id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
  [[nodiscard]] std::int64_t frequency(Label id) const { return counts_.at(static_cast<std::size_t>(id - 1)); }
  [[nodiscard]] int size() const { return static_cast<int>(names_.size()); }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  [[nodiscard]] LabelFrequencies frequencies() const {
    LabelFrequencies f;
    for (std::size_t i = 0; i < counts_.size(); ++i) f[static_cast<Label>(i + 1)] = counts_[i];
    return f;
  }

  [[nodiscard]] std::vector<std::string> names_of(const LabelSet& set) const {
    std::vector<std::string> out;
    for (Label l : set) out.push_back(name(l));
    return out;
  }
  [[nodiscard]] std::vector<std::string> names_of(const LabelSequence& seq) const {
    std::vector<std::string> out;
    for (Label l : seq) out.push_back(name(l));
    return out;
  }

  friend bool operator==(const LabelVocabulary& a, const LabelVocabulary& b) {
    return a.names_ == b.names_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, Label> index_;
};

// ---------------------------------------------------------------------------
// Records and instances

/// Parses a line-delimited file of {"id", "text", "labels"[, "tags"]} objects.
/// A malformed line raises DataError naming the line number.
inline std::vector<DatasetRecord> read_records(std::istream& in, const std::string& source = "<stream>") {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return DataError(source + ":" + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) throw fail("record is not an object");
    DatasetRecord r;
    if (!j.contains("id")) throw fail("missing field 'id'");
    if (j["id"].is_string()) {
      r.id = j["id"].get<std::string>();
    } else if (j["id"].is_number_integer()) {
      r.id = std::to_string(j["id"].get<long long>());
    } else {
      throw fail("field 'id' must be a string or integer");
    }
    if (!j.contains("text") || !j["text"].is_string()) throw fail("field 'text' must be a string");
    r.text = j["text"].get<std::string>();
    if (!j.contains("labels") || !j["labels"].is_array()) throw fail("field 'labels' must be an array");
    for (const auto& l : j["labels"]) {
      if (!l.is_string()) throw fail("labels must be strings");
      r.labels.push_back(l.get<std::string>());
    }
    if (j.contains("tags")) {
      if (!j["tags"].is_array()) throw fail("field 'tags' must be an array");
      for (const auto& t : j["tags"]) {
        if (!t.is_string()) throw fail("tags must be strings");
        r.tags.push_back(t.get<std::string>());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Resolves a relative path against $SETRNN_DATA_DIR when it does not exist
/// relative to the working directory.
inline std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* dir = std::getenv("SETRNN_DATA_DIR"); dir != nullptr && *dir != '\0') {
    auto candidate = std::filesystem::path(dir) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

inline std::vector<DatasetRecord> read_records(const std::filesystem::path& path) {
  const auto resolved = resolve_data_path(path);
  std::ifstream in(resolved);
  if (!in) throw DataError("cannot open dataset " + resolved.string());
  return read_records(in, resolved.string());
}

inline void write_records(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["labels"] = r.labels;
    if (!r.tags.empty()) j["tags"] = r.tags;
    out << j.dump() << '\n';
  }
}

/// Truncates or zero-pads token ids to exactly max_doc_len.
inline Document make_document(std::vector<std::int32_t> ids, int max_doc_len) {
  if (max_doc_len < 1) throw ConfigError("max_doc_len must be >= 1");
  Document d;
  d.original_length = ids.size();
  ids.resize(static_cast<std::size_t>(max_doc_len), WordVocabulary::kPad);
  d.tokens = std::move(ids);
  return d;
}

struct Instance {
  std::string id;
  Document doc;
  LabelSet labels;
};

enum class UnknownLabelPolicy { kSkipLabel, kError };

struct LoadOptions {
  int max_doc_len = 120;
  int max_labels = 50;  // label sets larger than the decode limit are rejected
  UnknownLabelPolicy unknown_labels = UnknownLabelPolicy::kSkipLabel;
  std::size_t max_vocab = 0;
};

struct IngestStats {
  std::size_t read = 0;
  std::size_t accepted = 0;
  std::size_t empty_labels = 0;
  std::size_t duplicate_labels = 0;
  std::size_t empty_text = 0;
  std::size_t too_many_labels = 0;
  std::size_t unknown_labels = 0;  // skipped label occurrences

  [[nodiscard]] std::size_t rejected() const {
    return empty_labels + duplicate_labels + empty_text + too_many_labels;
  }
};

struct Vocabularies {
  WordVocabulary words;
  LabelVocabulary labels;
};

struct Dataset {
  std::vector<Instance> instances;
  Vocabularies vocab;
  IngestStats stats;
};

namespace detail {

inline bool has_duplicate_names(const std::vector<std::string>& names) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) return true;
  }
  return false;
}

}  // namespace detail

/// Builds both vocabularies from the usable records of a training split.
inline Vocabularies build_vocabularies(const std::vector<DatasetRecord>& records, const Tokenizer& tok,
                                       const LoadOptions& opts) {
  std::vector<std::vector<std::string>> docs;
  std::vector<std::vector<std::string>> label_lists;
  for (const auto& r : records) {
    if (r.labels.empty() || detail::has_duplicate_names(r.labels)) continue;
    if (static_cast<int>(r.labels.size()) > opts.max_labels) continue;
    auto words = tok.tokenize(r.text);
    if (words.empty()) continue;
    docs.push_back(std::move(words));
    label_lists.push_back(r.labels);
  }
  return {WordVocabulary::build(docs, opts.max_vocab), LabelVocabulary::build(label_lists)};
}

/// Converts records to model instances, rejecting (and counting) records with
/// empty, duplicated or oversized label sets and records with no tokens.
inline std::vector<Instance> make_instances(const std::vector<DatasetRecord>& records, const Vocabularies& vocab,
                                            const Tokenizer& tok, const LoadOptions& opts, IngestStats& stats) {
  std::vector<Instance> out;
  for (const auto& r : records) {
    ++stats.read;
    if (r.labels.empty()) {
      ++stats.empty_labels;
      continue;
    }
    if (detail::has_duplicate_names(r.labels)) {
      ++stats.duplicate_labels;
      continue;
    }
    if (static_cast<int>(r.labels.size()) > opts.max_labels) {
      ++stats.too_many_labels;
      continue;
    }
    std::vector<Label> ids;
    for (const auto& name : r.labels) {
      if (auto id = vocab.labels.id(name)) {
        ids.push_back(*id);
      } else if (opts.unknown_labels == UnknownLabelPolicy::kError) {
        throw DataError("record " + r.id + ": unknown label '" + name + "'");
      } else {
        ++stats.unknown_labels;
      }
    }
    if (ids.empty()) {
      ++stats.empty_labels;
      continue;
    }
    const auto words = tok.tokenize(r.text);
    if (words.empty()) {
      ++stats.empty_text;
      continue;
    }
    std::vector<std::int32_t> token_ids;
    token_ids.reserve(words.size());
    for (const auto& w : words) token_ids.push_back(vocab.words.id(w));
    out.push_back({r.id, make_document(std::move(token_ids), opts.max_doc_len), LabelSet(std::move(ids))});
    ++stats.accepted;
  }
  return out;
}

inline void report_rejections(const IngestStats& s, std::ostream& log) {
  if (s.rejected() == 0 && s.unknown_labels == 0) return;
  log << "warning: rejected " << s.rejected() << " of " << s.read << " records (empty label set: " << s.empty_labels
      << ", duplicate labels: " << s.duplicate_labels << ", empty text: " << s.empty_text
      << ", too many labels: " << s.too_many_labels << "); skipped unknown labels: " << s.unknown_labels << '\n';
}

/// Loads a dataset file. Without `vocab` the file is the training split and
/// its vocabularies are built from it.
inline Dataset load_dataset(const std::filesystem::path& path, const Vocabularies* vocab, const LoadOptions& opts,
                            const Tokenizer& tok = Tokenizer()) {
  const auto records = read_records(path);
  Dataset ds;
  ds.vocab = vocab != nullptr ? *vocab : build_vocabularies(records, tok, opts);
  ds.instances = make_instances(records, ds.vocab, tok, opts, ds.stats);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
  std::uint64_t seed = 1;
  int num_labels = 10;
  int num_docs = 2000;
  int vocab_size = 200;
  int max_set_size = 4;
  int signature_size = 3;   // signature words per label
  double noise_rate = 0.0;  // noise words per signature word
};

inline std::string synth_label_name(int label) {
  std::string digits = std::to_string(label);
  if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
  return "topic" + digits;
}

/// Documents whose text is the shuffled union of the signature words of their
/// labels plus optional noise words drawn from non-signature words. Label l
/// owns words w{(l-1)*sig} .. w{l*sig - 1}. Set sizes are uniform on
/// 1..max_set_size; labels are drawn without replacement with weight
/// 1/sqrt(l), so frequency order is informative.
inline std::vector<DatasetRecord> gen_synth(const SynthConfig& cfg) {
  if (cfg.num_labels < 1 || cfg.num_docs < 1 || cfg.max_set_size < 1 || cfg.signature_size < 1) {
    throw InputError("synthetic generator counts must be >= 1");
  }
  if (cfg.max_set_size > cfg.num_labels) throw InputError("max_set_size exceeds the number of labels");
  const int signature_words = cfg.num_labels * cfg.signature_size;
  if (signature_words > cfg.vocab_size) throw InputError("vocab_size too small for the label signatures");
  if (cfg.noise_rate < 0.0) throw InputError("noise_rate must be >= 0");
  if (cfg.noise_rate > 0.0 && signature_words == cfg.vocab_size) throw InputError("no words left for noise");

  std::mt19937_64 rng(cfg.seed);
  auto below = [&](std::uint64_t n) { return rng() % n; };
  auto word = [](int i) { return "w" + std::to_string(i); };

  std::vector<DatasetRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.num_docs));
  for (int n = 0; n < cfg.num_docs; ++n) {
    const int size = 1 + static_cast<int>(below(static_cast<std::uint64_t>(cfg.max_set_size)));
    std::vector<double> weight(static_cast<std::size_t>(cfg.num_labels));
    for (int l = 1; l <= cfg.num_labels; ++l) weight[static_cast<std::size_t>(l - 1)] = 1.0 / std::sqrt(l);
    std::vector<int> labels;
    for (int k = 0; k < size; ++k) {
      double total = 0.0;
      for (double w : weight) total += w;
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
      int pick = 0;
      for (; pick < cfg.num_labels - 1; ++pick) {
        if (weight[static_cast<std::size_t>(pick)] == 0.0) continue;
        if (u < weight[static_cast<std::size_t>(pick)]) break;
        u -= weight[static_cast<std::size_t>(pick)];
      }
      while (weight[static_cast<std::size_t>(pick)] == 0.0) --pick;
      weight[static_cast<std::size_t>(pick)] = 0.0;
      labels.push_back(pick + 1);
    }
    std::sort(labels.begin(), labels.end());

    std::vector<std::string> words;
    for (int l : labels) {
      for (int s = 0; s < cfg.signature_size; ++s) words.push_back(word((l - 1) * cfg.signature_size + s));
    }
    const auto noise = static_cast<std::size_t>(std::llround(cfg.noise_rate * static_cast<double>(words.size())));
    for (std::size_t k = 0; k < noise; ++k) {
      words.push_back(word(signature_words + static_cast<int>(below(
                                                 static_cast<std::uint64_t>(cfg.vocab_size - signature_words)))));
    }
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[below(i)]);

    DatasetRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06d", n);
    r.id = id;
    for (std::size_t i = 0; i < words.size(); ++i) r.text += (i ? " " : "") + words[i];
    for (int l : labels) r.labels.push_back(synth_label_name(l));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace setrnn

#endif  // SETRNN_DATASET_HPP
