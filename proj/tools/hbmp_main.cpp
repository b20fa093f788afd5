// hbmp: train, evaluate, analyze and gradient-check sentence-pair classifiers.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hbmp/hbmp.hpp"

namespace fs = std::filesystem;
using namespace hbmp;

namespace {

struct RunFlag {
  const char* flag;
  const char* key;
  const char* help;
};

// Flags that override entries of the run config file.
const std::vector<RunFlag> kRunFlags{
    {"--train", "train", "training corpus"},
    {"--dev", "dev", "development corpus (model selection, lr schedule)"},
    {"--test", "test", "optional test corpus, scored with the selected model"},
    {"--embeddings", "embeddings", "pre-trained vectors, GloVe text format"},
    {"--checkpoint-dir", "checkpoint_dir", "output directory for checkpoints, epoch log and metrics"},
    {"--report-dir", "report_dir", "output directory for reports"},
    {"--format", "format", "corpus format: jsonl | tsv (default jsonl)"},
    {"--labels", "labels", "label set: three-way | two-way (default three-way)"},
    {"--max-bad-fraction", "data.max_bad_fraction", "tolerated fraction of malformed rows (default 0)"},
    {"--variant", "encoder.variant", "encoder: hbmp | ens | ens-train | ens-tied | stack (default hbmp)"},
    {"--layers", "encoder.layers", "BiLSTM layers (default 3)"},
    {"--hidden", "encoder.hidden", "hidden units per direction (default 600)"},
    {"--embed-dim", "encoder.embed_dim", "word vector size (default 300)"},
    {"--mlp-width", "head.mlp_width", "classifier hidden width (default 600)"},
    {"--dropout", "head.dropout", "dropout between classifier layers (default 0.1)"},
    {"--lr", "train.lr", "initial Adam learning rate (default 5e-4)"},
    {"--decay", "train.decay", "lr factor per non-improving epoch (default 0.2)"},
    {"--batch-size", "train.batch_size", "minibatch size (default 64)"},
    {"--patience", "train.patience", "non-improving epochs tolerated before stopping (default 3)"},
    {"--max-epochs", "train.max_epochs", "epoch limit (default 20)"},
    {"--seed", "seed", "seed for init, shuffling and dropout (default 1234)"},
};

KeyValueConfig read_run_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  KeyValueConfig kv;
  if (!path.empty()) {
    kv = KeyValueConfig::load(path);
    kv.resolve_paths(fs::absolute(path).parent_path(), RunConfig::kPathKeys);
  }
  for (const auto& [k, v] : overrides) kv.set(k, v);
  kv.resolve_paths(fs::current_path(), RunConfig::kPathKeys);
  return kv;
}

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides, bool quiet) {
  const RunConfig rc = RunConfig::from(read_run_config(config_path, overrides));
  std::cout << "config " << rc.config_hash << " seed " << rc.train.seed << " variant "
            << variant_key(rc.model.encoder.variant) << "\n";
  const TrainArtifacts out = run_training(rc, quiet ? nullptr : &std::cout);
  std::printf("best epoch %zu, dev accuracy %.2f%% (%s after %zu epochs)\n", out.fit.best_epoch,
              100.0 * out.fit.best_dev_accuracy, out.fit.stop_reason.c_str(), out.fit.epochs.size());
  if (out.test) std::printf("test accuracy %.2f%%\n", 100.0 * out.test->accuracy);
  std::cout << "checkpoint " << out.checkpoint << "\nlog " << out.epoch_log << "\nmetrics " << out.metrics << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, EvalOptions opts) {
  if (opts.report_dir.empty()) opts.report_dir = fs::absolute(checkpoint).parent_path().string();
  const EvalArtifacts out = run_eval(checkpoint, corpus, opts);
  std::cout << format_report(out.report);
  std::cout << "\nmetrics " << out.metrics << "\nreport " << out.text << "\n";
  if (!opts.predictions_path.empty()) std::cout << "predictions " << opts.predictions_path << "\n";
  return 0;
}

int cmd_gradcheck(const std::vector<EncoderVariant>& variants, const PipelineCheckDims& dims, std::uint64_t seed,
                  bool corrupt) {
  test_hooks::corrupt_linear_backward = corrupt;
  bool all_passed = true;
  for (auto v : variants) {
    const PipelineCheckReport r = check_pipeline(v, dims, seed);
    std::printf("variant %s (draw %zu)\n", std::string(variant_key(v)).c_str(), r.draws);
    for (const auto& b : r.blocks) std::printf("  %-34s %.3e\n", b.name.c_str(), b.max_error);
    std::printf("  %-34s %.3e  %s\n", "max", r.max_error, r.passed() ? "PASS" : "FAIL");
    all_passed = all_passed && r.passed();
  }
  std::printf("%s (threshold %.0e)\n", all_passed ? "PASS" : "FAIL", kGradCheckThreshold);
  return all_passed ? 0 : 1;
}

int cmd_synth(const std::string& dir, std::size_t pairs, std::size_t dev_pairs, std::size_t dim, std::uint64_t seed) {
  fs::create_directories(dir);
  const auto train = make_synthetic_corpus(pairs, seed);
  write_jsonl((fs::path(dir) / "train.jsonl").string(), train);
  write_jsonl((fs::path(dir) / "dev.jsonl").string(), make_synthetic_corpus(dev_pairs, seed + 1));
  write_synthetic_embeddings((fs::path(dir) / "embeddings.txt").string(), dim, seed + 2);
  std::ofstream cfg(fs::path(dir) / "run.cfg");
  cfg << "# synthetic corpus, seed " << seed << "\n"
      << "train = train.jsonl\ndev = dev.jsonl\nembeddings = embeddings.txt\ncheckpoint_dir = run\n"
      << "encoder.variant = hbmp\nencoder.layers = 3\nencoder.hidden = 32\nencoder.embed_dim = " << dim << "\n"
      << "head.mlp_width = 64\nhead.dropout = 0.1\n"
      << "train.lr = 1e-3\ntrain.batch_size = 32\ntrain.patience = 3\ntrain.max_epochs = 50\nseed = 5\n";
  std::cout << "wrote " << pairs << " train and " << dev_pairs << " dev pairs, " << dim << "-d embeddings and run.cfg to "
            << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical BiLSTM max-pooling sentence encoders for natural language inference"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  auto* train = app.add_subcommand("train", "train a model from a run config (flags override config entries)");
  std::string config_path;
  bool quiet = false;
  train->add_option("--config", config_path, "run config file (key = value lines)")->check(CLI::ExistingFile);
  train->add_flag("--quiet", quiet, "do not echo epoch lines");
  std::map<std::string, std::string> overrides;
  std::vector<std::pair<const RunFlag*, CLI::Option*>> run_opts;
  std::vector<std::string> run_values(kRunFlags.size());
  for (std::size_t i = 0; i < kRunFlags.size(); ++i)
    run_opts.emplace_back(&kRunFlags[i], train->add_option(kRunFlags[i].flag, run_values[i], kRunFlags[i].help));

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a labelled corpus");
  auto* analyze = app.add_subcommand("analyze", "accuracy by annotation tag and gold label");
  std::string checkpoint, corpus, format = "jsonl", labels, predictions, report_dir;
  double max_bad = 0.0;
  std::vector<std::size_t> bootstrap;
  std::uint64_t bootstrap_seed = 0;
  for (auto* sub : {eval, analyze}) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);
    sub->add_option("--corpus", corpus, "labelled corpus")->required()->check(CLI::ExistingFile);
    sub->add_option("--format", format, "jsonl | tsv")->capture_default_str();
    sub->add_option("--labels", labels, "label set of the corpus (default: the checkpoint's)");
    sub->add_option("--max-bad-fraction", max_bad, "tolerated fraction of malformed rows")->capture_default_str();
    sub->add_option("--report-dir", report_dir, "where reports go (default: the checkpoint's directory)");
    sub->add_option("--predictions", predictions, "also write index/gold/predicted tsv here");
  }
  eval->add_option("--bootstrap", bootstrap, "percentile bootstrap: SAMPLES SIZE (e.g. 1000 1000)")
      ->expected(2)
      ->check(CLI::PositiveNumber);
  eval->add_option("--bootstrap-seed", bootstrap_seed, "resampling seed")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the full pipeline at tiny sizes");
  std::string variant = "hbmp";
  bool all = false, corrupt = false;
  PipelineCheckDims dims;
  std::uint64_t grad_seed = 1;
  grad->add_option("--variant", variant, "encoder variant")->capture_default_str();
  grad->add_flag("--all", all, "check all five variants");
  grad->add_option("--vocab", dims.vocab, "V")->capture_default_str();
  grad->add_option("--embed", dims.embed, "E")->capture_default_str();
  grad->add_option("--hidden", dims.hidden, "H")->capture_default_str();
  grad->add_option("--layers", dims.layers, "L")->capture_default_str();
  grad->add_option("--steps", dims.steps, "T")->capture_default_str();
  grad->add_option("--batch", dims.batch, "batch rows")->capture_default_str();
  grad->add_option("--mlp", dims.mlp, "classifier hidden width")->capture_default_str();
  grad->add_option("--seed", grad_seed, "problem seed")->capture_default_str();
  grad->add_flag("--corrupt-backward", corrupt)->group("");

  auto* synth = app.add_subcommand("synth", "write a seeded separable synthetic corpus, embeddings and run.cfg");
  std::string out_dir;
  std::size_t pairs = 200, dev_pairs = 60, dim = 16;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--pairs", pairs, "training pairs")->capture_default_str();
  synth->add_option("--dev-pairs", dev_pairs, "dev pairs")->capture_default_str();
  synth->add_option("--dim", dim, "embedding size")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      for (std::size_t i = 0; i < run_opts.size(); ++i)
        if (run_opts[i].second->count()) overrides[run_opts[i].first->key] = run_values[i];
      return cmd_train(config_path, overrides, quiet);
    }
    if (eval->parsed() || analyze->parsed()) {
      EvalOptions opts;
      opts.format = parse_format(format);
      if (!labels.empty()) opts.labels = LabelSet::parse(labels);
      opts.max_bad_fraction = max_bad;
      opts.predictions_path = predictions;
      opts.report_dir = report_dir;
      if (!bootstrap.empty()) {
        opts.bootstrap_samples = bootstrap[0];
        opts.bootstrap_size = bootstrap[1];
        opts.bootstrap_seed = bootstrap_seed;
      }
      if (analyze->parsed()) {
        opts.categories = true;
        opts.report_name = "analysis";
      }
      return cmd_eval(checkpoint, corpus, opts);
    }
    if (grad->parsed()) {
      std::vector<EncoderVariant> variants;
      if (all)
        variants = {EncoderVariant::hbmp, EncoderVariant::ens, EncoderVariant::ens_train, EncoderVariant::ens_tied,
                    EncoderVariant::stack};
      else
        variants = {parse_variant(variant)};
      return cmd_gradcheck(variants, dims, grad_seed, corrupt);
    }
    if (synth->parsed()) return cmd_synth(out_dir, pairs, dev_pairs, dim, synth_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
