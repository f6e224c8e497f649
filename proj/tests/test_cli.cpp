#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "collab/cli.hpp"
#include "collab/config.hpp"
#include "collab/embed_model.hpp"
#include "test_util.hpp"

using namespace collab;
using collab::testing::TempDir;

namespace {

std::size_t line_count(const std::filesystem::path& p) {
  const auto text = read_file(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::vector<std::string> config_errors(const KeyValues& kv) {
  try {
    validate_config(kv);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

// Small synthetic corpus shared by the dispatch tests.
class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ostringstream log;
    ASSERT_EQ(dispatch({"synth", "--users", "40", "--groups", "2", "--width", "30", "--height", "30", "--events",
                        "8000", "--out", (dir / "data").string()},
                       log),
              0)
        << log.str();
  }
  std::string events() const { return (dir / "data" / "events.csv").string(); }
  TempDir dir;
};

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const auto cfg = validate_config({});
  EXPECT_EQ(cfg.train.dim, 120u);
  EXPECT_DOUBLE_EQ(cfg.train.alpha, 0.04);
  EXPECT_DOUBLE_EQ(cfg.train.lambda, 0.01);
  EXPECT_EQ(cfg.train.epochs, 10u);
  EXPECT_EQ(cfg.split.min_actions, 10u);
  EXPECT_EQ(cfg.out, std::filesystem::path("out"));
  EXPECT_EQ(cfg.baselines.size(), 4u);
}

TEST(Config, ParsesValues) {
  const auto cfg = validate_config(parse_config_text("# comment\nk = 16\nalpha=0.5\nbaselines = count\ncandidates = 2-4,9\n"));
  EXPECT_EQ(cfg.train.dim, 16u);
  EXPECT_DOUBLE_EQ(cfg.train.alpha, 0.5);
  EXPECT_EQ(cfg.baselines, (std::vector<Method>{Method::kCount}));
  EXPECT_EQ(cfg.candidates, (std::vector<std::size_t>{2, 3, 4, 9}));
  EXPECT_THROW(parse_config_text("k 16\n"), ParseError);
}

TEST(Config, NamesOffendingKey) {
  const auto errs = config_errors({{"alpha", "-1"}});
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].rfind("alpha:", 0), 0u) << errs[0];
  const auto warm = config_errors({{"warmup_fraction", "1.0"}});
  ASSERT_EQ(warm.size(), 1u);
  EXPECT_EQ(warm[0].rfind("warmup_fraction:", 0), 0u);
}

TEST(Config, ReportsEveryError) {
  const auto errs = config_errors({{"alpha", "0"}, {"k", "lots"}, {"bogus", "1"}, {"events", "/no/such/file.csv"}});
  EXPECT_EQ(errs.size(), 4u);
  std::string all;
  for (const auto& e : errs) all += e + "\n";
  for (const char* key : {"alpha:", "k:", "bogus:", "events:"}) EXPECT_NE(all.find(key), std::string::npos) << all;
}

TEST(Dispatch, UsageErrorsExitTwo) {
  std::ostringstream log;
  EXPECT_EQ(dispatch({"frobnicate"}, log), 2);
  std::ostringstream log2;
  EXPECT_EQ(dispatch({"train", "--no-such-flag", "1"}, log2), 2);
  EXPECT_NE(log2.str().find("--epochs"), std::string::npos);  // subcommand help follows the error
  std::ostringstream log3;
  EXPECT_EQ(dispatch({"train", "--lr", "-3"}, log3), 2);
  EXPECT_NE(log3.str().find("alpha"), std::string::npos);
}

TEST(Dispatch, MissingInputExitsTwo) {
  std::ostringstream log;
  EXPECT_EQ(dispatch({"train", "--events", "/definitely/not/here.csv"}, log), 2);
}

TEST_F(CliRun, SynthWritesInputs) {
  for (const char* f : {"events.csv", "atlas.csv", "groups.csv"}) EXPECT_TRUE(std::filesystem::exists(dir / "data" / f));
  EXPECT_EQ(line_count(dir / "data" / "events.csv"), 8001u);
}

TEST_F(CliRun, TrainThenEval) {
  std::ostringstream log;
  const auto out = dir / "run";
  ASSERT_EQ(dispatch({"train", "--events", events(), "--k", "8", "--epochs", "2", "--out", out.string()}, log), 0)
      << log.str();
  EXPECT_EQ(line_count(out / "train_log.csv"), 3u);
  const auto model = load_model(out / "model.bin");
  EXPECT_EQ(model.dim(), 8u);
  EXPECT_TRUE(std::filesystem::exists(out / "embeddings.csv"));

  ASSERT_EQ(dispatch({"eval", "--events", events(), "--model", (out / "model.bin").string(), "--baselines",
                      "median,count", "--out", out.string()},
                     log),
            0)
      << log.str();
  const auto report = read_file(out / "report.csv");
  EXPECT_EQ(line_count(out / "report.csv"), 4u);
  for (const char* m : {"embedding,", "median,", "count,"}) EXPECT_NE(report.find(m), std::string::npos);
}

TEST_F(CliRun, FlagsOverrideConfigFile) {
  const auto conf = dir / "run.conf";
  std::ofstream(conf) << "k = 4\nepochs = 1\nevents = " << events() << "\n";
  std::ostringstream log;
  const auto out = dir / "conf";
  ASSERT_EQ(dispatch({"train", "--config", conf.string(), "--k", "6", "--out", out.string()}, log), 0) << log.str();
  EXPECT_EQ(load_model(out / "model.bin").dim(), 6u);
  EXPECT_EQ(line_count(out / "train_log.csv"), 2u);
}

TEST_F(CliRun, RuntimeFailureExitsOne) {
  const auto bad = dir / "bad_model.bin";
  std::ofstream(bad) << "not a model";
  std::ostringstream log;
  EXPECT_EQ(dispatch({"segment", "--events", events(), "--model", bad.string(), "--clusters", "3", "--out",
                      (dir / "seg").string()},
                     log),
            1);
  EXPECT_NE(log.str().find("error"), std::string::npos);
}

TEST(Dispatch, FailedEvalMethodExitsOne) {
  TempDir dir;
  // "b" has a single action, held out, so the median baseline has nothing to fit.
  std::ofstream csv(dir / "events.csv");
  csv << "ts,user,x,y,color\n";
  for (int i = 0; i < 12; ++i) csv << i << ",a," << i % 4 << ",0,1\n";
  csv << "20,b,1,1,2\n";
  csv.close();
  std::ostringstream log;
  EXPECT_EQ(dispatch({"eval", "--events", (dir / "events.csv").string(), "--width", "4", "--height", "4", "--k", "2",
                      "--epochs", "1", "--min-actions", "1", "--warmup-fraction", "0", "--baselines", "median,count",
                      "--out", (dir / "ev").string()},
                     log),
            1)
      << log.str();
  const auto report = read_file(dir / "ev" / "report.csv");
  EXPECT_NE(report.find("median,nan,nan,0"), std::string::npos) << report;
  EXPECT_EQ(report.find("count,nan"), std::string::npos) << report;
}

TEST_F(CliRun, SegmentAndGroups) {
  std::ostringstream log;
  const auto out = dir / "seg";
  ASSERT_EQ(dispatch({"train", "--events", events(), "--k", "8", "--epochs", "3", "--out", out.string()}, log), 0);
  const auto model = (out / "model.bin").string();
  const auto atlas = (dir / "data" / "atlas.csv").string();
  ASSERT_EQ(dispatch({"segment", "--events", events(), "--model", model, "--atlas", atlas, "--candidates", "2-4",
                      "--out", out.string()},
                     log),
            0)
      << log.str();
  EXPECT_EQ(line_count(out / "ari_curve.csv"), 4u);
  EXPECT_EQ(line_count(out / "segmentation.csv"), 901u);
  ASSERT_EQ(dispatch({"groups", "--events", events(), "--model", model, "--min-pts", "5", "--out", out.string()}, log),
            0)
      << log.str();
  EXPECT_EQ(line_count(out / "groups.csv"), 41u);
  EXPECT_TRUE(std::filesystem::exists(out / "traces.ppm"));
  ASSERT_EQ(dispatch({"stats", "--events", events(), "--atlas", atlas, "--out", out.string()}, log), 0) << log.str();
  EXPECT_TRUE(std::filesystem::exists(out / "heatmap.csv"));
}
