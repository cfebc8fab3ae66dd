#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "adareg/harness.hpp"
#include "cli.hpp"
#include "test_util.hpp"

namespace adareg {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_tiny_config(const test::TempDir& dir) {
  const auto path = dir.path() / "tiny.json";
  test::write_text(path, to_json(test::tiny_config()).dump(2));
  return path.string();
}

TEST(Cli, TrainWritesMetricsAndEcho) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  const auto r = run_cli({"train", "--config", cfg, "--out", dir.str("run"), "--set",
                          "optimizer.family=adam_ar", "--set", "optimizer.alpha=0.02", "--snapshot"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "metrics.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "model.bin"));
  const auto echo = nlohmann::json::parse(test::read_file(dir.path() / "run" / "config.json"));
  EXPECT_EQ(echo["optimizer"]["family"], "adam_ar");
  EXPECT_EQ(echo["optimizer"]["alpha"], 0.02);
  EXPECT_EQ(echo["output_dir"], dir.str("run"));
}

TEST(Cli, TrainTwiceIsByteIdentical) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  ASSERT_EQ(run_cli({"train", "-c", cfg, "-o", dir.str("a")}).code, 0);
  ASSERT_EQ(run_cli({"train", "-c", cfg, "-o", dir.str("b")}).code, 0);
  EXPECT_EQ(test::read_file(dir.path() / "a" / "metrics.jsonl"),
            test::read_file(dir.path() / "b" / "metrics.jsonl"));
}

TEST(Cli, UnknownFlagAndSubcommand) {
  auto r = run_cli({"train", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error[usage]:", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  r = run_cli({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  r = run_cli({});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep-alpha"), std::string::npos);
}

TEST(Cli, ValidationErrorsExitOne) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  auto r = run_cli({"train", "-c", cfg, "-s", "optimizer.alpha=abc"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error[validation]: optimizer.alpha", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  r = run_cli({"train", "-c", dir.str("missing.json")});
  EXPECT_EQ(r.code, 1);
  r = run_cli({"compare", "-c", cfg, "-m", "adam,sgd"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  const auto r = run_cli({"train", "-c", cfg, "-o", dir.str("run"), "-s",
                          "optimizer.learning_rate=1.7976931348623157e308"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error[runtime]:", 0), 0u) << r.err;
}

TEST(Cli, BoundHandValue) {
  const auto r = run_cli({"bound", "--mf", "1", "--S", "1", "--T", "1", "--L", "1", "--sum-tau", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(r.out), 2.17741, 1e-5);
  EXPECT_EQ(run_cli({"bound", "--mf", "1", "--S", "1", "--T", "0", "--sum-tau", "1"}).code, 1);
}

TEST(Cli, BoundFromSnapshot) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  ASSERT_EQ(run_cli({"train", "-c", cfg, "-o", dir.str("run"), "--snapshot"}).code, 0);
  const auto r = run_cli({"bound", "--snapshot", dir.str("run/model.bin"), "--T", "960"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(test::read_file(dir.path() / "run" / "report.json"));
  EXPECT_NEAR(std::stod(r.out), report["epochs"].back()["rademacher_bound"].get<double>(), 1e-9);
}

TEST(Cli, StatsGenDataCompareAndSweeps) {
  test::TempDir dir("cli");
  const auto cfg = write_tiny_config(dir);
  auto r = run_cli({"stats", "-c", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("feature_index,unique_ids,mean_occurrences,mean_update_interval\n", 0), 0u);

  r = run_cli({"gen-data", "-c", cfg, "-o", dir.str("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = load_csv(dir.path() / "d.csv", true);
  const auto synth = load_dataset(test::tiny_config().data);
  EXPECT_EQ(csv.labels, synth.labels);
  EXPECT_EQ(csv.columns, synth.columns);

  r = run_cli({"compare", "-c", cfg, "-o", dir.str("cmp"), "-m", "adam,adam_ar,adam+meda"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| adam+meda |"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "cmp" / "adam_ar" / "metrics.jsonl"));

  r = run_cli({"sweep-alpha", "-c", cfg, "-o", dir.str("grid"), "--grid", "0.001,0.1", "-s",
               "optimizer.family=adam_ar"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "grid" / "grid.csv"));
  EXPECT_NE(r.out.find("best alpha"), std::string::npos);

  r = run_cli({"sweep-filter", "-c", cfg, "-o", dir.str("flt"), "-f", "1", "-r", "1,0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "flt" / "ratio_0" / "metrics.jsonl"));
  EXPECT_EQ(run_cli({"sweep-filter", "-c", cfg, "-f", "1", "-r", "1,x"}).code, 1);
}

}  // namespace
}  // namespace adareg
