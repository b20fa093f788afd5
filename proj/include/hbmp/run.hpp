#pragma once

// End-to-end workflows behind the command-line tool: train from a RunConfig,
// evaluate or analyze a saved run. Every artifact written here carries the
// config hash and seed and nothing time-dependent.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hbmp/analysis.hpp"
#include "hbmp/checkpoint.hpp"
#include "hbmp/config.hpp"
#include "hbmp/data.hpp"
#include "hbmp/training.hpp"

namespace hbmp {

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainArtifacts {
  FitResult fit;
  std::string checkpoint;  // best-dev-accuracy model
  std::string epoch_log;
  std::string metrics;
  double embedding_coverage = 0.0;
  std::optional<EvalReport> test;
};

namespace detail {

inline std::string fmt_g(double v, int digits = 9) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RunError("cannot write " + path);
  out << text;
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + tokens[i];
  return s;
}

}  // namespace detail

inline std::string epoch_log_header(const std::string& config_hash, std::uint64_t seed) {
  return "# config_hash=" + config_hash + " seed=" + std::to_string(seed) +
         "\nepoch\ttrain_loss\tdev_loss\tdev_accuracy\tlr\n";
}

inline std::string epoch_log_line(const EpochRecord& r) {
  return std::to_string(r.epoch) + "\t" + detail::fmt_g(r.train_loss) + "\t" + detail::fmt_g(r.dev_loss) + "\t" +
         detail::fmt_g(r.dev_accuracy) + "\t" + detail::fmt_g(r.lr) + "\n";
}

/// Loads the corpora, builds the vocabulary over every split, copies the
/// pre-trained vectors in, trains, and writes best.ckpt, last.ckpt and
/// epochs.log into the checkpoint directory and metrics.json into the report
/// directory (the checkpoint directory when unset).
inline TrainArtifacts run_training(const RunConfig& rc, std::ostream* progress = nullptr) {
  rc.validate_for_training();
  const LoadOptions opts{rc.max_bad_fraction};
  auto report_skips = [&](const char* split, const NliDataset& ds) {
    if (!progress) return;
    *progress << split << ": " << ds.size() << " examples";
    if (ds.skipped_no_consensus) *progress << ", " << ds.skipped_no_consensus << " without consensus label";
    if (!ds.row_errors.empty()) *progress << ", " << ds.row_errors.size() << " bad rows";
    *progress << "\n";
  };
  const NliDataset train = load_corpus(rc.train_path, rc.format, rc.labels, opts);
  const NliDataset dev = load_corpus(rc.dev_path, rc.format, rc.labels, opts);
  std::optional<NliDataset> test;
  if (!rc.test_path.empty()) test = load_corpus(rc.test_path, rc.format, rc.labels, opts);
  report_skips("train", train);
  report_skips("dev", dev);
  if (test) report_skips("test", *test);
  if (train.size() == 0 || dev.size() == 0) throw RunError("train and dev corpora must contain examples");

  std::vector<const NliDataset*> splits{&train, &dev};
  if (test) splits.push_back(&*test);
  const Vocabulary vocab = Vocabulary::build(splits);
  const EmbeddingTable emb = load_embeddings(rc.embeddings_path, vocab, rc.model.encoder.embed_dim);
  if (progress) {
    for (const auto& w : emb.warnings) *progress << "embeddings: " << w << "\n";
    *progress << "vocabulary " << vocab.size() << ", embedding coverage " << detail::fmt_g(emb.coverage, 4) << "\n";
  }

  ModelConfig mc = rc.model;
  mc.encoder.vocab_size = vocab.size();
  mc.classes = rc.labels.size();
  Rng init_rng(rc.train.seed);
  NliModel model = NliModel::init(mc, init_rng);
  std::copy(emb.table.data().begin(), emb.table.data().end(), model.encoder.embedding.data().begin());

  namespace fs = std::filesystem;
  fs::create_directories(rc.checkpoint_dir);
  TrainArtifacts out;
  out.embedding_coverage = emb.coverage;
  out.epoch_log = (fs::path(rc.checkpoint_dir) / "epochs.log").string();
  const fs::path report_dir = rc.report_dir.empty() ? fs::path(rc.checkpoint_dir) : fs::path(rc.report_dir);
  fs::create_directories(report_dir);
  out.metrics = (report_dir / "metrics.json").string();

  std::ofstream log(out.epoch_log, std::ios::trunc);
  if (!log) throw RunError("cannot write " + out.epoch_log);
  log << epoch_log_header(rc.config_hash, rc.train.seed);

  const std::map<std::string, std::string> meta{{"run.config_hash", rc.config_hash},
                                                {"run.seed", std::to_string(rc.train.seed)},
                                                {"data.labels", rc.labels.key()},
                                                {"data.vocab", detail::join(vocab.user_tokens())}};
  TrainConfig tc = rc.train;
  tc.checkpoint_dir = rc.checkpoint_dir;
  out.fit = fit(model, encode_dataset(train, vocab), encode_dataset(dev, vocab), tc, meta, [&](const EpochRecord& r) {
    log << epoch_log_line(r) << std::flush;
    if (progress) *progress << epoch_log_line(r);
  });
  log << "# stop=" << out.fit.stop_reason << " best_epoch=" << out.fit.best_epoch << "\n";
  out.checkpoint = out.fit.best_checkpoint;

  nlohmann::ordered_json j;
  j["config_hash"] = rc.config_hash;
  j["seed"] = rc.train.seed;
  j["variant"] = variant_key(mc.encoder.variant);
  j["epochs"] = out.fit.epochs.size();
  j["best_epoch"] = out.fit.best_epoch;
  j["best_dev_accuracy"] = out.fit.best_dev_accuracy;
  j["stop_reason"] = out.fit.stop_reason;
  j["final_lr"] = out.fit.epochs.empty() ? rc.train.lr0 : out.fit.epochs.back().lr;
  j["vocabulary"] = vocab.size();
  j["embedding_coverage"] = emb.coverage;
  if (test) {
    out.test = evaluate(model, *test, vocab);
    j["test"] = report_json(*out.test);
  }
  detail::write_text(out.metrics, j.dump(2) + "\n");
  return out;
}

/// A trained model together with the vocabulary and label set it was built with.
struct SavedRun {
  NliModel model;
  Vocabulary vocab;
  LabelSet labels;
  std::string config_hash;
  std::string seed;
};

inline SavedRun load_run(const std::string& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  std::vector<std::string> tokens;
  for (auto& t : detail::split(ck.get("data.vocab"), ' '))
    if (!t.empty()) tokens.push_back(std::move(t));
  SavedRun run{model_from_checkpoint(ck), Vocabulary::from_tokens(tokens), LabelSet::parse(ck.get("data.labels")),
               ck.get("run.config_hash"), ck.get("run.seed")};
  if (run.vocab.size() != run.model.config.encoder.vocab_size)
    throw CheckpointFormatError("checkpoint vocabulary has " + std::to_string(run.vocab.size()) +
                                " entries but the embedding table has " +
                                std::to_string(run.model.config.encoder.vocab_size) + " rows");
  return run;
}

struct EvalOptions {
  CorpusFormat format = CorpusFormat::jsonl;
  std::optional<LabelSet> labels;  // defaults to the checkpoint's
  double max_bad_fraction = 0.0;
  std::size_t bootstrap_samples = 0;  // 0: no interval
  std::size_t bootstrap_size = 1000;
  std::uint64_t bootstrap_seed = 0;
  bool categories = false;
  std::string predictions_path;  // empty: not written
  std::string report_dir;        // empty: not written
  std::string report_name = "eval";
};

struct EvalArtifacts {
  EvalReport report;
  std::string metrics;  // <report_dir>/<name>_metrics.json
  std::string text;     // <report_dir>/<name>_report.txt
};

inline EvalArtifacts run_eval(const std::string& checkpoint_path, const std::string& corpus_path,
                              const EvalOptions& opts) {
  const SavedRun run = load_run(checkpoint_path);
  const LabelSet labels = opts.labels.value_or(run.labels);
  if (labels != run.labels)
    throw RunError("label set mismatch: checkpoint predicts " + run.labels.key() + " " + run.labels.describe() +
                   " but the corpus uses " + labels.key() + " " + labels.describe());
  const NliDataset ds = load_corpus(corpus_path, opts.format, labels, {opts.max_bad_fraction});
  if (ds.size() == 0) throw RunError("corpus " + corpus_path + " contains no labelled examples");

  EvalArtifacts out;
  std::vector<int> predicted;
  out.report = evaluate(run.model, ds, run.vocab, &predicted);
  std::vector<int> gold;
  for (const auto& ex : ds.examples) gold.push_back(ex.label);
  if (opts.bootstrap_samples > 0)
    out.report.interval =
        bootstrap_ci(correctness(gold, predicted), opts.bootstrap_samples, opts.bootstrap_size, 0.95, opts.bootstrap_seed);
  if (opts.categories) {
    std::vector<std::vector<std::string>> tags;
    for (const auto& ex : ds.examples) tags.push_back(ex.tags);
    out.report.categories = category_breakdown(tags, gold, predicted, labels.names);
  }
  if (!opts.predictions_path.empty()) write_predictions_tsv(opts.predictions_path, gold, predicted, labels.names);
  if (!opts.report_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.report_dir);
    out.metrics = (fs::path(opts.report_dir) / (opts.report_name + "_metrics.json")).string();
    out.text = (fs::path(opts.report_dir) / (opts.report_name + "_report.txt")).string();
    nlohmann::ordered_json j;
    j["config_hash"] = run.config_hash;
    j["seed"] = run.seed;
    j["corpus"] = fs::path(corpus_path).filename().string();
    j.update(report_json(out.report));
    detail::write_text(out.metrics, j.dump(2) + "\n");
    detail::write_text(out.text, "# config_hash=" + run.config_hash + " seed=" + run.seed + "\n" +
                                     format_report(out.report));
  }
  return out;
}

}  // namespace hbmp
