#pragma once

// Corpus ingestion (jsonl / tsv), vocabulary, pretrained embeddings and
// padded minibatches.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hbmp/random.hpp"
#include "hbmp/recurrent.hpp"
#include "hbmp/tensor.hpp"

namespace hbmp {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabelSet {
  std::vector<std::string> names;

  static LabelSet three_way() { return {{"entailment", "contradiction", "neutral"}}; }
  static LabelSet two_way() { return {{"entails", "neutral"}}; }

  /// "three-way" (SNLI, MultiNLI) or "two-way" (SciTail).
  static LabelSet parse(std::string_view key) {
    if (key == "three-way") return three_way();
    if (key == "two-way") return two_way();
    throw std::invalid_argument("unknown label set '" + std::string(key) +
                                "' (expected three-way or two-way)");
  }

  std::string key() const { return names.size() == 2 ? "two-way" : "three-way"; }
  std::size_t size() const { return names.size(); }

  int index(std::string_view label) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == label) return static_cast<int>(i);
    return -1;
  }

  std::string describe() const {
    std::string s = "{";
    for (std::size_t i = 0; i < names.size(); ++i) s += (i ? ", " : "") + names[i];
    return s + "}";
  }

  bool operator==(const LabelSet&) const = default;
};

struct NliExample {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  int label = 0;
  std::vector<std::string> tags;
  std::size_t line = 0;
};

struct RowError {
  std::size_t line;
  std::string message;
};

struct NliDataset {
  LabelSet labels;
  std::vector<NliExample> examples;
  std::size_t skipped_no_consensus = 0;
  std::vector<RowError> row_errors;

  std::size_t size() const { return examples.size(); }
};

enum class CorpusFormat { jsonl, tsv };

inline CorpusFormat parse_format(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "tsv") return CorpusFormat::tsv;
  throw std::invalid_argument("unknown corpus format '" + std::string(s) + "' (expected jsonl or tsv)");
}

struct LoadOptions {
  /// Abort the whole file when the fraction of bad rows exceeds this.
  double max_bad_fraction = 0.0;
};

/// ASCII lowercase, then split on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

/// Parses one corpus. Rows without annotator consensus (gold label "-") are
/// skipped and counted; malformed rows are recorded with their line number.
inline NliDataset parse_corpus(std::istream& in, CorpusFormat format, const LabelSet& labels,
                               const LoadOptions& opts = {}, const std::string& source = "<stream>") {
  NliDataset ds;
  ds.labels = labels;
  std::size_t considered = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;

    std::string s1, s2, gold;
    std::vector<std::string> tags;
    std::string error;
    if (format == CorpusFormat::jsonl) {
      try {
        const auto row = nlohmann::json::parse(line);
        for (const char* key : {"sentence1", "sentence2", "gold_label"})
          if (!row.contains(key) || !row[key].is_string()) {
            error = std::string("missing key '") + key + "'";
            break;
          }
        if (error.empty()) {
          s1 = row["sentence1"].get<std::string>();
          s2 = row["sentence2"].get<std::string>();
          gold = row["gold_label"].get<std::string>();
          if (row.contains("tags")) {
            const auto& t = row["tags"];
            if (t.is_array())
              for (const auto& tag : t) tags.push_back(tag.get<std::string>());
            else if (t.is_string())
              for (auto& tag : detail::split(t.get<std::string>(), ','))
                if (!detail::trim(tag).empty()) tags.push_back(detail::trim(tag));
          }
        }
      } catch (const nlohmann::json::exception& e) {
        error = std::string("invalid json: ") + e.what();
      }
    } else {
      auto cols = detail::split(line, '\t');
      if (cols.size() < 3) {
        error = "expected premise<TAB>hypothesis<TAB>label";
      } else {
        s1 = cols[0];
        s2 = cols[1];
        gold = detail::trim(cols[2]);
        if (lineno == 1 && (gold == "label" || gold == "gold_label")) continue;  // header
        if (cols.size() > 3)
          for (auto& tag : detail::split(cols[3], ','))
            if (!detail::trim(tag).empty()) tags.push_back(detail::trim(tag));
      }
    }

    if (error.empty() && gold == "-") {
      ++ds.skipped_no_consensus;
      continue;
    }
    ++considered;
    NliExample ex;
    if (error.empty()) {
      ex.label = labels.index(gold);
      if (ex.label < 0) error = "label '" + gold + "' not in label set " + labels.describe();
    }
    if (error.empty()) {
      ex.premise = tokenize(s1);
      ex.hypothesis = tokenize(s2);
      if (ex.premise.empty() || ex.hypothesis.empty()) error = "empty sentence";
    }
    if (!error.empty()) {
      ds.row_errors.push_back({lineno, error});
      continue;
    }
    ex.tags = std::move(tags);
    ex.line = lineno;
    ds.examples.push_back(std::move(ex));
  }
  if (considered > 0) {
    const double bad = static_cast<double>(ds.row_errors.size()) / static_cast<double>(considered);
    if (bad > opts.max_bad_fraction) {
      const auto& first = ds.row_errors.front();
      throw CorpusError(source + ": " + std::to_string(ds.row_errors.size()) + " bad row(s) of " +
                        std::to_string(considered) + "; line " + std::to_string(first.line) + ": " +
                        first.message);
    }
  }
  return ds;
}

inline NliDataset load_corpus(const std::string& path, CorpusFormat format, const LabelSet& labels,
                              const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path);
  return parse_corpus(in, format, labels, opts, path);
}

/// Token → id map with id 0 = padding and id 1 = unknown. Ids follow first
/// appearance order.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  Vocabulary() : tokens_{"<pad>", "<unk>"} {}

  static Vocabulary build(const std::vector<const NliDataset*>& datasets) {
    if (datasets.empty()) throw std::invalid_argument("build_vocab: no datasets");
    Vocabulary v;
    for (const auto* ds : datasets)
      for (const auto& ex : ds->examples) {
        for (const auto& t : ex.premise) v.add(t);
        for (const auto& t : ex.hypothesis) v.add(t);
      }
    return v;
  }

  /// Rebuilds a vocabulary from its non-reserved tokens in id order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return ids_.count(t) > 0; }
  std::int32_t id(const std::string& t) const {
    auto it = ids_.find(t);
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// Tokens with id >= 2.
  std::vector<std::string> user_tokens() const { return {tokens_.begin() + 2, tokens_.end()}; }

 private:
  void add(const std::string& t) {
    if (ids_.count(t)) return;
    ids_.emplace(t, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(t);
  }
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

struct EmbeddingTable {
  Tensor table;  // [V×dim], rows aligned with vocabulary ids
  std::size_t matched = 0;
  std::size_t malformed = 0;
  double coverage = 0.0;  // matched / (V − 2)
  std::vector<std::string> warnings;
};

/// Reads GloVe-style text: a token followed by `dim` floats per line. Tokens
/// may contain spaces (all leading fields form the token). An exact match
/// wins; otherwise the lowercased file token fills a still-empty row.
/// Unmatched rows, padding and unknown stay zero.
inline EmbeddingTable parse_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
  EmbeddingTable out;
  out.table = Tensor::zeros({vocab.size(), dim}, true);
  std::vector<std::uint8_t> state(vocab.size(), 0);  // 0 empty, 1 case-folded, 2 exact
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> row(dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view sv(line);
    std::size_t pos = 0;
    while (pos < sv.size()) {
      while (pos < sv.size() && sv[pos] == ' ') ++pos;
      if (pos >= sv.size()) break;
      const auto end = std::min(sv.find(' ', pos), sv.size());
      fields.push_back(sv.substr(pos, end - pos));
      pos = end;
    }
    bool ok = fields.size() >= dim + 1;
    for (std::size_t k = 0; ok && k < dim; ++k) {
      const auto f = fields[fields.size() - dim + k];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), row[k]);
      ok = ec == std::errc() && ptr == f.data() + f.size();
    }
    if (!ok) {
      ++out.malformed;
      if (out.warnings.size() < 20)
        out.warnings.push_back("line " + std::to_string(lineno) + ": expected token + " +
                               std::to_string(dim) + " floats");
      continue;
    }
    std::string token(fields[0]);
    for (std::size_t k = 1; k + dim < fields.size(); ++k) token += " " + std::string(fields[k]);

    std::int32_t id = -1;
    std::uint8_t quality = 2;
    if (vocab.contains(token)) {
      id = vocab.id(token);
    } else {
      std::string lower = token;
      for (auto& ch : lower)
        if (static_cast<unsigned char>(ch) < 0x80) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (vocab.contains(lower)) id = vocab.id(lower), quality = 1;
    }
    if (id < 2 || state[id] >= quality) continue;
    if (state[id] == 0) ++out.matched;
    state[id] = quality;
    std::copy(row.begin(), row.end(), out.table.data().begin() + id * dim);
  }
  if (out.matched == 0) throw EmbeddingError("no vocabulary token found in embedding file");
  const std::size_t candidates = vocab.size() > 2 ? vocab.size() - 2 : 1;
  out.coverage = static_cast<double>(out.matched) / static_cast<double>(candidates);
  return out;
}

inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open embeddings " + path);
  return parse_embeddings(in, vocab, dim);
}

/// A dataset mapped to token ids.
struct EncodedDataset {
  std::vector<std::vector<std::int32_t>> premises;
  std::vector<std::vector<std::int32_t>> hypotheses;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline EncodedDataset encode_dataset(const NliDataset& ds, const Vocabulary& vocab) {
  EncodedDataset out;
  for (const auto& ex : ds.examples) {
    std::vector<std::int32_t> p, h;
    for (const auto& t : ex.premise) p.push_back(vocab.id(t));
    for (const auto& t : ex.hypothesis) h.push_back(vocab.id(t));
    out.premises.push_back(std::move(p));
    out.hypotheses.push_back(std::move(h));
    out.labels.push_back(ex.label);
  }
  return out;
}

struct PairBatch {
  SentenceBatch premise;
  SentenceBatch hypothesis;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the dataset
};

/// Minibatches in corpus order or a seeded permutation. Premise and
/// hypothesis are padded independently; the last partial batch is kept.
class BatchStream {
 public:
  BatchStream(const EncodedDataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed)
      : ds_(&ds), batch_size_(batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    if (ds.size() == 0) throw std::invalid_argument("cannot batch an empty dataset");
    order_.resize(ds.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle) {
      Rng rng(seed);
      rng.shuffle(order_);
    }
  }

  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  bool next(PairBatch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t end = std::min(pos_ + batch_size_, order_.size());
    std::vector<std::vector<std::int32_t>> p, h;
    out.labels.clear();
    out.indices.clear();
    for (std::size_t k = pos_; k < end; ++k) {
      const std::size_t i = order_[k];
      p.push_back(ds_->premises[i]);
      h.push_back(ds_->hypotheses[i]);
      out.labels.push_back(ds_->labels[i]);
      out.indices.push_back(i);
    }
    out.premise = SentenceBatch::from_sequences(p);
    out.hypothesis = SentenceBatch::from_sequences(h);
    pos_ = end;
    return true;
  }

  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const EncodedDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace hbmp
