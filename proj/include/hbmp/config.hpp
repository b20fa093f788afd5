#pragma once

// Flat "key = value" run configuration. Lines starting with '#' are comments.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hbmp/data.hpp"
#include "hbmp/model.hpp"
#include "hbmp/training.hpp"

namespace hbmp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>") {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = detail::trim(t.substr(0, eq));
      if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
      cfg.entries_[key] = detail::trim(t.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string string_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  double number_or(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("field '" + key + "': expected a number, got '" + *v + "'");
    }
  }

  std::uint64_t count_or(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (v->empty() || v->find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("field '" + key + "': expected a non-negative integer, got '" + *v + "'");
    return std::stoull(*v);
  }

  /// Rewrites relative values of `keys` as paths under `base`.
  void resolve_paths(const std::filesystem::path& base, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      auto it = entries_.find(k);
      if (it == entries_.end() || it->second.empty()) continue;
      const std::filesystem::path p(it->second);
      if (p.is_relative()) it->second = (base / p).lexically_normal().string();
    }
  }

  /// Sorted "key=value" lines, leaving out `skip`.
  std::string canonical(const std::set<std::string>& skip = {}) const {
    std::string s;
    for (const auto& [k, v] : entries_)
      if (!skip.count(k)) s += k + "=" + v + "\n";
    return s;
  }

  /// FNV-1a 64-bit hash of the canonical form, as 16 hex digits.
  std::string hash(const std::set<std::string>& skip = {}) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical(skip)) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::map<std::string, std::string> entries_;
};

/// Everything a training or evaluation run needs. Defaults follow the
/// reference training setup (Adam at 5e-4, decay 0.2, batch 64, patience 3,
/// 3 layers of 600 units per direction, MLP width 600, dropout 0.1).
struct RunConfig {
  /// Output locations; they do not take part in the config hash.
  inline static const std::set<std::string> kOutputKeys{"checkpoint_dir", "report_dir"};
  static constexpr std::initializer_list<const char*> kPathKeys{"train",          "dev",       "test", "embeddings",
                                                                "checkpoint_dir", "report_dir"};

  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string embeddings_path;
  std::string checkpoint_dir;
  std::string report_dir;
  CorpusFormat format = CorpusFormat::jsonl;
  LabelSet labels = LabelSet::three_way();
  double max_bad_fraction = 0.0;
  ModelConfig model;
  TrainConfig train;
  std::string config_hash;

  static RunConfig from(const KeyValueConfig& kv) {
    RunConfig rc;
    rc.train_path = kv.string_or("train", "");
    rc.dev_path = kv.string_or("dev", "");
    rc.test_path = kv.string_or("test", "");
    rc.embeddings_path = kv.string_or("embeddings", "");
    rc.checkpoint_dir = kv.string_or("checkpoint_dir", "");
    rc.report_dir = kv.string_or("report_dir", "");
    try {
      rc.format = parse_format(kv.string_or("format", "jsonl"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'format': ") + e.what());
    }
    try {
      rc.labels = LabelSet::parse(kv.string_or("labels", "three-way"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'labels': ") + e.what());
    }
    rc.max_bad_fraction = kv.number_or("data.max_bad_fraction", 0.0);
    try {
      rc.model.encoder.variant = parse_variant(kv.string_or("encoder.variant", "hbmp"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'encoder.variant': ") + e.what());
    }
    rc.model.encoder.layers = kv.count_or("encoder.layers", 3);
    rc.model.encoder.hidden = kv.count_or("encoder.hidden", 600);
    rc.model.encoder.embed_dim = kv.count_or("encoder.embed_dim", 300);
    rc.model.mlp_width = kv.count_or("head.mlp_width", 600);
    rc.model.dropout = kv.number_or("head.dropout", 0.1);
    rc.model.classes = rc.labels.size();
    rc.train.lr0 = kv.number_or("train.lr", 5e-4);
    rc.train.decay = kv.number_or("train.decay", 0.2);
    rc.train.batch_size = kv.count_or("train.batch_size", 64);
    rc.train.patience = kv.count_or("train.patience", 3);
    rc.train.max_epochs = kv.count_or("train.max_epochs", 20);
    rc.train.seed = kv.count_or("seed", 1234);
    rc.train.checkpoint_dir = rc.checkpoint_dir;
    rc.config_hash = kv.hash(kOutputKeys);

    auto positive = [](std::uint64_t v, const char* field) {
      if (v == 0) throw ConfigError(std::string("field '") + field + "': must be positive");
    };
    positive(rc.model.encoder.layers, "encoder.layers");
    positive(rc.model.encoder.hidden, "encoder.hidden");
    positive(rc.model.encoder.embed_dim, "encoder.embed_dim");
    positive(rc.model.mlp_width, "head.mlp_width");
    positive(rc.train.batch_size, "train.batch_size");
    positive(rc.train.max_epochs, "train.max_epochs");
    if (!(rc.train.lr0 > 0.0)) throw ConfigError("field 'train.lr': must be positive");
    if (!(rc.train.decay > 0.0 && rc.train.decay < 1.0)) throw ConfigError("field 'train.decay': must be in (0, 1)");
    if (!(rc.model.dropout >= 0.0 && rc.model.dropout < 1.0))
      throw ConfigError("field 'head.dropout': must be in [0, 1)");
    return rc;
  }

  /// Checks the fields a training run needs; errors name the offending field.
  void validate_for_training() const {
    auto need_file = [](const std::string& value, const char* field) {
      if (value.empty()) throw ConfigError(std::string("missing required field '") + field + "'");
      if (!std::filesystem::is_regular_file(value))
        throw ConfigError(std::string("field '") + field + "': file not found: " + value);
    };
    need_file(train_path, "train");
    need_file(dev_path, "dev");
    need_file(embeddings_path, "embeddings");
    if (!test_path.empty()) need_file(test_path, "test");
    if (checkpoint_dir.empty()) throw ConfigError("missing required field 'checkpoint_dir'");
  }
};

}  // namespace hbmp
