#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hbmp/hbmp.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args) {
  const std::string cmd = std::string(HBMP_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "hbmp_cli_test";
    fs::remove_all(root_);
    ASSERT_EQ(run("synth --out " + (root_ / "synth").string() + " --pairs 60 --dev-pairs 15").status, 0);
  }
  static fs::path root_;
  static std::string cfg() { return (root_ / "synth" / "run.cfg").string(); }
  static std::string quick() { return " --hidden 8 --layers 2 --mlp-width 16 --max-epochs 4 --quiet"; }
};
fs::path Cli::root_;

}  // namespace

TEST_F(Cli, HelpShowsTrainingDefaults) {
  const auto r = run("train --help");
  EXPECT_EQ(r.status, 0);
  for (const char* d : {"5e-4", "0.2", "64", "600", "0.1"}) EXPECT_NE(r.output.find(d), std::string::npos) << d;
}

TEST_F(Cli, TrainWritesCheckpointLogAndMetrics) {
  const auto dir = root_ / "train";
  const auto r = run("train --config " + cfg() + " --checkpoint-dir " + dir.string() + quick());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  const std::string log = slurp(dir / "epochs.log");
  EXPECT_NE(log.find("config_hash="), std::string::npos);
  EXPECT_NE(log.find("seed=5"), std::string::npos);
  EXPECT_NE(log.find("epoch\ttrain_loss\tdev_loss\tdev_accuracy\tlr"), std::string::npos);
  const auto metrics = nlohmann::json::parse(slurp(dir / "metrics.json"));
  EXPECT_EQ(metrics["seed"], 5);
  EXPECT_EQ(metrics["config_hash"].get<std::string>().size(), 16u);
}

TEST_F(Cli, MissingEmbeddingsNamesTheField) {
  const auto r = run("train --config " + cfg() + " --embeddings " + (root_ / "absent.txt").string() +
                     " --checkpoint-dir " + (root_ / "x").string() + quick());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("'embeddings'"), std::string::npos) << r.output;
}

TEST_F(Cli, BadOverrideNamesTheField) {
  const auto r = run("train --config " + cfg() + " --batch-size 0" + quick());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("train.batch_size"), std::string::npos) << r.output;
}

TEST_F(Cli, SameSeedGivesIdenticalLogs) {
  const auto a = root_ / "seed_a", b = root_ / "seed_b";
  ASSERT_EQ(run("train --config " + cfg() + " --seed 7 --checkpoint-dir " + a.string() + quick()).status, 0);
  ASSERT_EQ(run("train --config " + cfg() + " --seed 7 --checkpoint-dir " + b.string() + quick()).status, 0);
  EXPECT_EQ(slurp(a / "epochs.log"), slurp(b / "epochs.log"));
  EXPECT_EQ(slurp(a / "metrics.json"), slurp(b / "metrics.json"));
  EXPECT_EQ(slurp(a / "best.ckpt"), slurp(b / "best.ckpt"));
  EXPECT_NE(slurp(a / "epochs.log").find("seed=7"), std::string::npos);
}

TEST_F(Cli, EvalOnTrainAfterTrainingIsPerfect) {
  const auto dir = root_ / "overfit";
  ASSERT_EQ(run("train --config " + cfg() + " --checkpoint-dir " + dir.string() + " --dev " +
                (root_ / "synth" / "train.jsonl").string() + " --quiet")
                .status,
            0);
  const auto pred = root_ / "pred.tsv";
  const auto r = run("eval --checkpoint " + (dir / "best.ckpt").string() + " --corpus " +
                     (root_ / "synth" / "train.jsonl").string() + " --bootstrap 100 60 --predictions " + pred.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("accuracy  100.0%"), std::string::npos) << r.output;
  const auto metrics = nlohmann::json::parse(slurp(dir / "eval_metrics.json"));
  EXPECT_DOUBLE_EQ(metrics["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(metrics["bootstrap"]["samples"], 100);
  EXPECT_EQ(metrics["seed"], "5");
  EXPECT_EQ(count(slurp(pred), "\n"), 61u);

  const auto a = run("analyze --checkpoint " + (dir / "best.ckpt").string() + " --corpus " +
                     (root_ / "synth" / "train.jsonl").string());
  ASSERT_EQ(a.status, 0) << a.output;
  EXPECT_NE(a.output.find("negation"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "analysis_metrics.json"));
}

TEST_F(Cli, TwoClassCheckpointOnThreeClassCorpusIsAnError) {
  hbmp::ModelConfig mc;
  mc.encoder = {hbmp::EncoderVariant::hbmp, 4, 3, 2, 1};
  mc.mlp_width = 4;
  mc.classes = 2;
  hbmp::Rng rng(1);
  const auto model = hbmp::NliModel::init(mc, rng);
  const auto path = (root_ / "two.ckpt").string();
  hbmp::save_checkpoint(path, hbmp::make_checkpoint(model, {{"data.labels", "two-way"},
                                                            {"data.vocab", "a b"},
                                                            {"run.config_hash", "0"},
                                                            {"run.seed", "0"}}));
  const auto r = run("eval --checkpoint " + path + " --corpus " + (root_ / "synth" / "train.jsonl").string() +
                     " --labels three-way");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("label set mismatch"), std::string::npos) << r.output;
  const auto implicit = run("eval --checkpoint " + path + " --corpus " + (root_ / "synth" / "train.jsonl").string());
  EXPECT_NE(implicit.status, 0);
  EXPECT_NE(implicit.output.find("label"), std::string::npos) << implicit.output;
}

TEST_F(Cli, GradcheckPassesAndCatchesCorruption) {
  const auto ok = run("gradcheck --variant hbmp");
  EXPECT_EQ(ok.status, 0) << ok.output;
  EXPECT_NE(ok.output.find("PASS"), std::string::npos);
  EXPECT_NE(ok.output.find("encoder.embedding"), std::string::npos);
  const auto bad = run("gradcheck --variant hbmp --corrupt-backward");
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, GradcheckAllReportsFiveVariants) {
  const auto r = run("gradcheck --all");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(count(r.output, "variant "), 5u);
  EXPECT_EQ(count(r.output, "  PASS"), 5u);
}

TEST_F(Cli, UnknownSubcommandFails) { EXPECT_NE(run("frobnicate").status, 0); }
