#pragma once

// Seeded synthetic NLI corpus whose labels are separable by construction.
//
// Premises mix content and function words. A hypothesis re-uses some of the
// premise's content words; contradictions add a negation word and neutral
// pairs add a modifier that never occurs in any premise. The label is thus a
// function of which word classes appear in the hypothesis.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hbmp/data.hpp"
#include "hbmp/random.hpp"

namespace hbmp {

struct SynthWords {
  std::vector<std::string> content{"man",   "woman", "dog",  "cat",   "child", "car",  "ball", "park",
                                   "street", "beach", "food", "music", "book",  "tree", "river", "house",
                                   "bike",  "horse", "bird", "city",  "boat",  "field", "road", "table"};
  std::vector<std::string> function{"a", "the", "is", "in", "on", "with", "near", "and"};
  std::vector<std::string> negation{"not", "no", "never", "nobody"};
  std::vector<std::string> neutral{"tall", "sad", "happy", "old", "young", "famous", "tired", "angry"};
};

/// `pairs` examples with labels cycling entailment, contradiction, neutral
/// (three-way label set), then shuffled. Each example is tagged with its
/// overlap kind and, if present, the inserted word class.
inline NliDataset make_synthetic_corpus(std::size_t pairs, std::uint64_t seed) {
  const SynthWords w;
  Rng rng(seed);
  NliDataset ds;
  ds.labels = LabelSet::three_way();
  auto pick = [&](const std::vector<std::string>& pool) { return pool[rng.index(pool.size())]; };
  for (std::size_t n = 0; n < pairs; ++n) {
    NliExample ex;
    ex.label = static_cast<int>(n % 3);
    const std::size_t content_count = 2 + rng.index(3);
    std::vector<std::string> content;
    while (content.size() < content_count) {
      auto c = pick(w.content);
      if (std::find(content.begin(), content.end(), c) == content.end()) content.push_back(c);
    }
    for (const auto& c : content) {
      ex.premise.push_back(pick(w.function));
      ex.premise.push_back(c);
    }
    if (rng.bernoulli(0.5)) ex.premise.push_back(pick(w.function));

    const std::size_t keep = 1 + rng.index(content.size());
    rng.shuffle(content);
    for (std::size_t k = 0; k < keep; ++k) {
      if (rng.bernoulli(0.5)) ex.hypothesis.push_back(pick(w.function));
      ex.hypothesis.push_back(content[k]);
    }
    if (ex.label != 0) {
      const auto extra = pick(ex.label == 1 ? w.negation : w.neutral);
      const std::size_t at = rng.index(ex.hypothesis.size() + 1);
      ex.hypothesis.insert(ex.hypothesis.begin() + static_cast<std::ptrdiff_t>(at), extra);
      ex.tags.push_back(ex.label == 1 ? "negation" : "modifier");
    }
    ex.tags.push_back(keep == content.size() ? "full-overlap" : "partial-overlap");
    ex.line = n + 1;
    ds.examples.push_back(std::move(ex));
  }
  rng.shuffle(ds.examples);
  return ds;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + tokens[i];
  return s;
}

inline void write_jsonl(const std::string& path, const NliDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& ex : ds.examples) {
    nlohmann::ordered_json j;
    j["sentence1"] = join_tokens(ex.premise);
    j["sentence2"] = join_tokens(ex.hypothesis);
    j["gold_label"] = ds.labels.names.at(ex.label);
    if (!ex.tags.empty()) j["tags"] = ex.tags;
    out << j.dump() << '\n';
  }
}

/// Random vectors uniform on (−1, 1) for every synthetic word, in GloVe text format.
inline void write_synthetic_embeddings(const std::string& path, std::size_t dim, std::uint64_t seed) {
  const SynthWords w;
  Rng rng(seed);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[32];
  for (const auto* pool : {&w.content, &w.function, &w.negation, &w.neutral})
    for (const auto& word : *pool) {
      out << word;
      for (std::size_t k = 0; k < dim; ++k) {
        std::snprintf(buf, sizeof buf, " %.6f", rng.uniform(-1.0, 1.0));
        out << buf;
      }
      out << '\n';
    }
}

}  // namespace hbmp
