#pragma once

// Evaluation metrics and error analysis: confusion matrices with per-label
// precision/recall/F1, percentile-bootstrap accuracy intervals, and accuracy
// broken down by annotation tag and gold label.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hbmp/data.hpp"
#include "hbmp/inference.hpp"
#include "hbmp/model.hpp"
#include "hbmp/random.hpp"

namespace hbmp {

/// 2PR/(P+R), or 0 when P+R = 0.
inline double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

/// Rounds to one decimal the way the report tables print it.
inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

/// Rows are gold labels, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels)
      : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

  static ConfusionMatrix from_counts(std::vector<std::string> labels,
                                     const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(std::move(labels));
    if (rows.size() != cm.size()) throw DimensionError("confusion counts need one row per label");
    for (std::size_t g = 0; g < rows.size(); ++g) {
      if (rows[g].size() != cm.size()) throw DimensionError("confusion counts need one column per label");
      for (std::size_t p = 0; p < rows[g].size(); ++p) cm.counts_[g * cm.size() + p] = rows[g][p];
    }
    return cm;
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  void add(int gold, int predicted) {
    const auto c = static_cast<int>(size());
    if (gold < 0 || gold >= c || predicted < 0 || predicted >= c)
      throw std::out_of_range("confusion matrix index outside label set");
    ++counts_[static_cast<std::size_t>(gold) * size() + static_cast<std::size_t>(predicted)];
  }

  std::uint64_t count(std::size_t gold, std::size_t predicted) const { return counts_[gold * size() + predicted]; }

  std::uint64_t row_sum(std::size_t gold) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < size(); ++p) s += count(gold, p);
    return s;
  }
  std::uint64_t col_sum(std::size_t predicted) const {
    std::uint64_t s = 0;
    for (std::size_t g = 0; g < size(); ++g) s += count(g, predicted);
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < size(); ++k) s += count(k, k);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  double accuracy() const { return total() ? static_cast<double>(trace()) / static_cast<double>(total()) : 0.0; }
  /// Diagonal over column sum; 0 for a label never predicted.
  double precision(std::size_t k) const {
    const auto c = col_sum(k);
    return c ? static_cast<double>(count(k, k)) / static_cast<double>(c) : 0.0;
  }
  /// Diagonal over row sum; 0 for a label absent from gold.
  double recall(std::size_t k) const {
    const auto r = row_sum(k);
    return r ? static_cast<double>(count(k, k)) / static_cast<double>(r) : 0.0;
  }
  double f1(std::size_t k) const { return f1_score(precision(k), recall(k)); }

 private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> counts_;
};

struct LabelScores {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct BootstrapInterval {
  double lower = 0.0;  // accuracies as fractions
  double upper = 0.0;
  std::size_t samples = 0;
  std::size_t sample_size = 0;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Linear-interpolation quantile of sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap: `samples` resamples of `sample_size` examples drawn
/// with replacement; the interval spans the (1−level)/2 and (1+level)/2
/// quantiles of the resampled accuracies.
inline BootstrapInterval bootstrap_ci(const std::vector<std::uint8_t>& correct, std::size_t samples = 1000,
                                      std::size_t sample_size = 1000, double level = 0.95,
                                      std::uint64_t seed = 0) {
  if (correct.empty()) throw std::invalid_argument("bootstrap_ci: empty correctness vector");
  if (sample_size < 1) throw std::invalid_argument("bootstrap_ci: sample_size must be at least 1");
  if (samples < 1) throw std::invalid_argument("bootstrap_ci: samples must be at least 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");
  Rng rng(seed);
  std::vector<double> acc(samples);
  for (auto& a : acc) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < sample_size; ++k) hits += correct[rng.index(correct.size())] ? 1 : 0;
    a = static_cast<double>(hits) / static_cast<double>(sample_size);
  }
  std::sort(acc.begin(), acc.end());
  const double tail = (1.0 - level) / 2.0;
  return {sorted_quantile(acc, tail), sorted_quantile(acc, 1.0 - tail), samples, sample_size, level, seed};
}

struct CategoryCell {
  std::size_t total = 0;
  std::size_t correct = 0;
  /// Absent when no example has this tag and label.
  std::optional<double> accuracy() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
  }
};

struct CategoryTable {
  std::vector<std::string> labels;
  std::vector<std::string> tags;                    // sorted
  std::map<std::string, std::size_t> tag_examples;  // examples carrying each tag
  std::map<std::pair<std::string, std::size_t>, CategoryCell> cells;

  CategoryCell cell(const std::string& tag, std::size_t label) const {
    auto it = cells.find({tag, label});
    return it == cells.end() ? CategoryCell{} : it->second;
  }

  /// Pools every (tag, label) membership; multi-tag examples count once per tag.
  std::optional<double> micro_total(std::size_t label) const {
    CategoryCell sum;
    for (const auto& t : tags) {
      const auto c = cell(t, label);
      sum.total += c.total;
      sum.correct += c.correct;
    }
    return sum.accuracy();
  }

  /// Unweighted mean over tags whose cell is present.
  std::optional<double> macro_total(std::size_t label) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& t : tags)
      if (auto a = cell(t, label).accuracy()) s += *a, ++n;
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  }
};

inline CategoryTable category_breakdown(const std::vector<std::vector<std::string>>& tags,
                                        const std::vector<int>& gold, const std::vector<int>& predicted,
                                        const std::vector<std::string>& labels) {
  if (tags.size() != gold.size() || gold.size() != predicted.size())
    throw DimensionError("category_breakdown: tags, gold and predictions differ in length");
  CategoryTable table;
  table.labels = labels;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::set<std::string> unique(tags[i].begin(), tags[i].end());
    for (const auto& tag : unique) {
      seen.insert(tag);
      ++table.tag_examples[tag];
      auto& c = table.cells[{tag, static_cast<std::size_t>(gold[i])}];
      ++c.total;
      c.correct += gold[i] == predicted[i] ? 1 : 0;
    }
  }
  table.tags.assign(seen.begin(), seen.end());
  return table;
}

struct EvalReport {
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<LabelScores> per_label;
  ConfusionMatrix confusion{std::vector<std::string>{}};
  std::optional<BootstrapInterval> interval;
  std::optional<CategoryTable> categories;
};

inline EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  r.total = cm.total();
  r.accuracy = cm.accuracy();
  for (std::size_t k = 0; k < cm.size(); ++k)
    r.per_label.push_back({cm.labels()[k], cm.precision(k), cm.recall(k), cm.f1(k), cm.row_sum(k)});
  return r;
}

inline EvalReport report_from_predictions(const std::vector<int>& gold, const std::vector<int>& predicted,
                                          const std::vector<std::string>& labels) {
  if (gold.size() != predicted.size()) throw DimensionError("gold and predictions differ in length");
  ConfusionMatrix cm(labels);
  for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
  return report_from_confusion(cm);
}

/// Runs the model over `ds` (dropout off) and scores it.
inline EvalReport evaluate(const NliModel& model, const NliDataset& ds, const Vocabulary& vocab,
                           std::vector<int>* predictions_out = nullptr) {
  if (ds.labels.size() != model.config.classes)
    throw std::invalid_argument("label set " + ds.labels.describe() + " has " + std::to_string(ds.labels.size()) +
                                " classes but the model predicts " + std::to_string(model.config.classes));
  const EncodedDataset enc = encode_dataset(ds, vocab);
  const Predictions pred = predict(model, enc);
  if (predictions_out) *predictions_out = pred.predicted;
  return report_from_predictions(enc.labels, pred.predicted, ds.labels.names);
}

inline std::vector<std::uint8_t> correctness(const std::vector<int>& gold, const std::vector<int>& predicted) {
  std::vector<std::uint8_t> out(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) out[i] = gold[i] == predicted[i];
  return out;
}

namespace detail {
inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}
inline std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}
}  // namespace detail

/// Plain-text tables: per-label scores, confusion matrix, interval, categories.
inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "examples  " << r.total << "\naccuracy  " << detail::pct(r.accuracy) << "%\n";
  if (r.interval)
    os << "ci " << detail::pct(r.interval->level) << "%    [" << detail::pct(r.interval->lower) << "%, "
       << detail::pct(r.interval->upper) << "%] (" << r.interval->samples << " x " << r.interval->sample_size
       << ")\n";
  os << "\n" << detail::pad("label", 14) << detail::pad("P", 8) << detail::pad("R", 8) << detail::pad("F1", 8)
     << detail::pad("n", 8) << "\n";
  for (const auto& s : r.per_label)
    os << detail::pad(s.label, 14) << detail::pad(detail::pct(s.precision), 8) << detail::pad(detail::pct(s.recall), 8)
       << detail::pad(detail::pct(s.f1), 8) << detail::pad(std::to_string(s.support), 8) << "\n";

  const auto& cm = r.confusion;
  os << "\nconfusion (rows gold, cols predicted)\n" << detail::pad("", 14);
  for (const auto& l : cm.labels()) os << detail::pad(l, 14);
  os << detail::pad("recall", 10) << "\n";
  for (std::size_t g = 0; g < cm.size(); ++g) {
    os << detail::pad(cm.labels()[g], 14);
    for (std::size_t p = 0; p < cm.size(); ++p) os << detail::pad(std::to_string(cm.count(g, p)), 14);
    os << detail::pad(detail::pct(cm.recall(g)) + "%", 10) << "\n";
  }
  os << detail::pad("precision", 14);
  for (std::size_t p = 0; p < cm.size(); ++p) os << detail::pad(detail::pct(cm.precision(p)) + "%", 14);
  os << "\n";

  if (r.categories) {
    const auto& t = *r.categories;
    os << "\naccuracy by tag and gold label\n" << detail::pad("tag", 22);
    for (const auto& l : t.labels) os << detail::pad(l, 14);
    os << "\n";
    auto cell_str = [](std::optional<double> a) { return a ? detail::pct(*a) : std::string("-"); };
    for (const auto& tag : t.tags) {
      os << detail::pad(tag + " (" + std::to_string(t.tag_examples.at(tag)) + ")", 22);
      for (std::size_t k = 0; k < t.labels.size(); ++k) os << detail::pad(cell_str(t.cell(tag, k).accuracy()), 14);
      os << "\n";
    }
    os << detail::pad("total (micro)", 22);
    for (std::size_t k = 0; k < t.labels.size(); ++k) os << detail::pad(cell_str(t.micro_total(k)), 14);
    os << "\n" << detail::pad("total (macro)", 22);
    for (std::size_t k = 0; k < t.labels.size(); ++k) os << detail::pad(cell_str(t.macro_total(k)), 14);
    os << "\n";
  }
  return os.str();
}

/// Machine-readable metrics document.
inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["examples"] = r.total;
  j["accuracy"] = r.accuracy;
  for (const auto& s : r.per_label)
    j["labels"][s.label] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  j["confusion"]["labels"] = r.confusion.labels();
  for (std::size_t g = 0; g < r.confusion.size(); ++g) {
    std::vector<std::uint64_t> row;
    for (std::size_t p = 0; p < r.confusion.size(); ++p) row.push_back(r.confusion.count(g, p));
    j["confusion"]["counts"].push_back(row);
  }
  if (r.interval)
    j["bootstrap"] = {{"lower", r.interval->lower},     {"upper", r.interval->upper},
                      {"samples", r.interval->samples}, {"sample_size", r.interval->sample_size},
                      {"level", r.interval->level},     {"seed", r.interval->seed}};
  if (r.categories) {
    const auto& t = *r.categories;
    auto opt = [](std::optional<double> a) { return a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json(nullptr); };
    for (const auto& tag : t.tags) {
      auto& entry = j["categories"]["tags"][tag];
      entry["examples"] = t.tag_examples.at(tag);
      for (std::size_t k = 0; k < t.labels.size(); ++k) {
        const auto c = t.cell(tag, k);
        entry[t.labels[k]] = {{"accuracy", opt(c.accuracy())}, {"total", c.total}, {"correct", c.correct}};
      }
    }
    for (std::size_t k = 0; k < t.labels.size(); ++k) {
      j["categories"]["total_micro"][t.labels[k]] = opt(t.micro_total(k));
      j["categories"]["total_macro"][t.labels[k]] = opt(t.macro_total(k));
    }
  }
  return j;
}

/// index<TAB>gold<TAB>predicted, one row per example.
inline void write_predictions_tsv(const std::string& path, const std::vector<int>& gold,
                                  const std::vector<int>& predicted, const std::vector<std::string>& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions " + path);
  out << "index\tgold\tpredicted\n";
  for (std::size_t i = 0; i < gold.size(); ++i)
    out << i << '\t' << labels.at(gold[i]) << '\t' << labels.at(predicted[i]) << '\n';
}

}  // namespace hbmp
