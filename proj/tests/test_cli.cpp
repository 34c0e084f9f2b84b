// End-to-end runs of the fewshot binary on small inputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "json.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome fewshot(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "stdout.txt";
  const std::string cmd = std::string(FEWSHOT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// One synthetic corpus + encoder shared by the train/eval/report tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fixture::temp_dir("cli");
    const Outcome r = fewshot("synth --classes 8 --per-class 20 --d-h 16 --max-len 8 --out " + (dir_ / "syn").string(), dir_);
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string data() {
    return "--corpus " + (dir_ / "syn/corpus.tsv").string() + " --encoder " + (dir_ / "syn/encoder.bin").string();
  }
  static std::string train_args(const fs::path& out) {
    return "train " + data() + " --n-way 2 --k-shot 1 --q-query 2 --episodes 6 --eval-every 3 --hidden 16 --out " +
           out.string();
  }

  static fs::path dir_;
};

fs::path CliPipeline::dir_;

}  // namespace

TEST(CliIngest, AtisFixtureKeepsSixteenClasses) {
  const auto dir = fixture::temp_dir("cli_ingest");
  fixture::write_lines(dir / "atis.txt", fixture::atis_lines());
  const Outcome r = fewshot("ingest " + (dir / "atis.txt").string() + " --out " + (dir / "o").string(), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto summary = nlohmann::json::parse(slurp(dir / "o/summary.json"));
  EXPECT_EQ(summary["classes"], 16);
  EXPECT_EQ(summary["utterances"], 5836);
  EXPECT_EQ(summary["dropped_utterances"], 9);
  EXPECT_EQ(count_lines(slurp(dir / "o/corpus.tsv")), 5836);
  EXPECT_TRUE(fs::exists(dir / "o/ingest_config.txt"));
  fs::remove_all(dir);
}

TEST(CliIngest, UsageAndDataErrorsHaveDistinctCodes) {
  const auto dir = fixture::temp_dir("cli_err");
  fixture::write_lines(dir / "empty.txt", {});
  EXPECT_EQ(fewshot("ingest " + (dir / "empty.txt").string() + " --format xml", dir).code, 2);
  EXPECT_EQ(fewshot("frobnicate", dir).code, 2);
  const Outcome empty = fewshot("ingest " + (dir / "empty.txt").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(empty.code, 1);
  EXPECT_NE(empty.out.find("EmptyCorpus"), std::string::npos) << empty.out;
  EXPECT_EQ(fewshot("ingest " + (dir / "missing.txt").string() + " --out " + (dir / "o").string(), dir).code, 1);
  fs::remove_all(dir);
}

TEST_F(CliPipeline, PretrainZeroEpochsLeavesEncoderUntouched) {
  const auto out = dir_ / "pre0";
  const Outcome r = fewshot("pretrain " + data() + " --epochs 0 --out " + out.string(), dir_);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(out / "encoder.bin"), slurp(dir_ / "syn/encoder.bin"));
  const std::string echo = slurp(out / "pretrain_config.txt");
  EXPECT_NE(echo.find("select-rate=0.25"), std::string::npos) << echo;
  EXPECT_NE(echo.find("mask-frac=0.8"), std::string::npos) << echo;
}

TEST_F(CliPipeline, PretrainRejectsBadMaskingFractions) {
  const Outcome r = fewshot("pretrain " + data() + " --epochs 0 --mask-frac 0.9 --out " + (dir_ / "pre_bad").string(), dir_);
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST_F(CliPipeline, TrainIsDeterministic) {
  const auto a = dir_ / "ta", b = dir_ / "tb";
  ASSERT_EQ(fewshot(train_args(a), dir_).code, 0);
  ASSERT_EQ(fewshot(train_args(b), dir_).code, 0);
  for (const char* f : {"pia.bin", "history.csv", "split.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST_F(CliPipeline, TrainRejectsMoreWaysThanSeenClasses) {
  // 8 classes at seen 0.5 -> 4 training classes
  const Outcome r = fewshot("train " + data() + " --n-way 7 --episodes 1 --out " + (dir_ / "t7").string(), dir_);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("InsufficientClasses"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, ConfigFileAppliesAndFlagsWin) {
  const auto cfg = dir_ / "run.cfg";
  fixture::write_lines(cfg, {"k-shot=2", "episodes=3", "hidden=16"});
  const auto out = dir_ / "tcfg";
  const Outcome r = fewshot("train " + data() + " --n-way 2 --q-query 2 --eval-every 3 --config " + cfg.string() +
                            " --episodes 4 --out " + out.string(),
                        dir_);
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string echo = slurp(out / "train_config.txt");
  EXPECT_NE(echo.find("k-shot=2"), std::string::npos) << echo;
  EXPECT_NE(echo.find("episodes=4"), std::string::npos) << echo;

  fixture::write_lines(dir_ / "bad.cfg", {"no-such-key=1"});
  EXPECT_EQ(fewshot("train " + data() + " --config " + (dir_ / "bad.cfg").string(), dir_).code, 2);
}

TEST_F(CliPipeline, EvalAndReport) {
  const auto run = dir_ / "tr";
  ASSERT_EQ(fewshot(train_args(run), dir_).code, 0);
  const std::string common = "eval " + data() + " --checkpoint " + (run / "pia.bin").string() + " --split " +
                             (run / "split.json").string();

  const Outcome cos = fewshot(common + " --out " + (run / "cos").string(), dir_);
  ASSERT_EQ(cos.code, 0) << cos.out;
  const auto m = nlohmann::json::parse(slurp(run / "cos/metrics.json"));
  EXPECT_EQ(m["similarity"], "cosine");
  EXPECT_GE(m["accuracy"].get<double>(), 0.0);
  EXPECT_LE(m["accuracy"].get<double>(), 1.0);

  ASSERT_EQ(fewshot(common + " --similarity kl --out " + (run / "kl").string(), dir_).code, 0);
  ASSERT_EQ(fewshot(common + " --similarity all --out " + (run / "all").string(), dir_).code, 0);
  EXPECT_EQ(count_lines(slurp(run / "all/sweep.csv")), 1 + 13);
  EXPECT_EQ(fewshot(common + " --similarity euclid", dir_).code, 2);

  const Outcome rep = fewshot("report " + run.string() + " --out " + (dir_ / "rep").string(), dir_);
  ASSERT_EQ(rep.code, 0) << rep.out;
  const std::string csv = slurp(dir_ / "rep/report.csv");
  EXPECT_NE(csv.find("bias_category"), std::string::npos);
  // cos + kl + 13 sweep files, grouped by similarity
  EXPECT_EQ(count_lines(csv), 1 + 13);
  EXPECT_NE(csv.find("toy,0.5,1,cosine,2,"), std::string::npos) << csv;
  EXPECT_TRUE(fs::exists(dir_ / "rep/report.md"));

  EXPECT_EQ(fewshot("report " + (dir_ / "does_not_exist").string(), dir_).code, 1);
}
