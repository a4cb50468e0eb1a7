#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dsteval/cli.hpp"
#include "test_support.hpp"

namespace dsteval {
namespace {

namespace fs = std::filesystem;
const fs::path kData = DSTEVAL_SAMPLE_DATA;

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("dsteval-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    unsetenv(kConfigEnvVar);
  }
  void TearDown() override {
    fs::remove_all(dir);
    unsetenv(kConfigEnvVar);
  }

  std::string write(const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  }
  std::string read(const std::string& name) {
    std::ifstream in(dir / name);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir;
  const std::string gold = (kData / "hypothetical_gold.json").string();
  const std::string p1 = (kData / "hypothetical_p1.json").string();
  const std::string p2 = (kData / "hypothetical_p2.json").string();
};

TEST_F(CliTest, EvaluateFixture) {
  const auto r = run({"evaluate", "--gold", gold, "--pred", p1});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"jga\": 0.8333"), std::string::npos);
  EXPECT_NE(r.out.find("\"rsa\": 0.9167"), std::string::npos);
  EXPECT_NE(r.out.find("\"fga\": 0.8333"), std::string::npos);
}

TEST_F(CliTest, EvaluatePercentAndFormats) {
  auto r = run({"evaluate", "--gold", gold, "--pred", p2, "--percent", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hypothetical,6,0.0000,75.0000,8.3333,8.3333,59.7507,66.6667"),
            std::string::npos)
      << r.out;
  r = run({"evaluate", "--gold", gold, "--pred", p2, "--format", "md"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("# Evaluation report"), std::string::npos);
}

TEST_F(CliTest, EvaluateMetricFlags) {
  const auto r = run({"evaluate", "--gold", gold, "--pred", p2, "--lambda", "1.0",
                      "--aggregate", "per-dialogue"});
  ASSERT_EQ(r.code, 0) << r.err;
  double sum = 0.0;
  for (int dt = 1; dt <= 5; ++dt) sum += 1.0 - std::exp(-1.0 * dt);
  char expected[64];
  std::snprintf(expected, sizeof expected, "\"fga\": %.4f", sum / 6.0);
  EXPECT_NE(r.out.find(expected), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\"aggregation\": \"per-dialogue\""), std::string::npos);
}

TEST_F(CliTest, EvaluateWritesOutFile) {
  const auto path = (dir / "report.json").string();
  const auto r = run({"evaluate", "--gold", gold, "--pred", p1, "--out", path});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(read("report.json").find("\"jga\": 0.8333"), std::string::npos);
}

TEST_F(CliTest, ByteIdenticalReports) {
  const auto a = run({"evaluate", "--gold", gold, "--pred", p2});
  const auto b = run({"evaluate", "--gold", gold, "--pred", p2});
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, PerturbAtZeroThenEvaluateIsPerfect) {
  const auto preds = (dir / "zero.json").string();
  auto r = run({"perturb", "--gold", gold, "--error-rate", "0", "--seed", "5", "--out", preds});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"evaluate", "--gold", gold, "--pred", preds});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto parsed = parse_report(r.out);
  for (Metric m : kAllMetrics) EXPECT_DOUBLE_EQ(*at(parsed.corpus, m), 1.0) << metric_name(m);
}

TEST_F(CliTest, PerturbIsDeterministic) {
  CorpusShape shape;
  shape.dialogues = 20;
  const auto corpus = write("corpus.json", write_corpus(random_corpus(shape, 3)));
  const std::vector<std::string> args = {"perturb", "--gold", corpus, "--error-rate", "0.4",
                                         "--kind-mix", "2,1,1", "--tail-bias", "1.5",
                                         "--concentration", "0.5", "--seed", "9"};
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("\"seed\": 9"), std::string::npos);
  EXPECT_NE(a.out.find("\"kind_mix\""), std::string::npos);
}

TEST_F(CliTest, CompareTwoSystemsFindsMaxGapDialogue) {
  const auto h = testing::hypothetical();
  Corpus c;
  c.dataset = "two";
  c.ontology = testing::ontology_of_size(4);
  c.dialogues.push_back(Dialogue::from_states("first", h.gold));
  c.dialogues.push_back(Dialogue::from_states("second", h.gold));
  c.dialogues.push_back(Dialogue::from_states("third", h.gold));
  const auto corpus = write("two.json", write_corpus(c));
  const PredictionSet a{"A", {{"first", h.p1}, {"second", h.gold}, {"third", h.p2}}};
  const PredictionSet b{"B", {{"first", h.p2}, {"second", h.p1}, {"third", h.p2}}};
  const auto pa = write("a.json", write_predictions(a));
  const auto pb = write("b.json", write_predictions(b));

  const auto r = run({"compare", "--gold", corpus, "--pred-a", pa, "--pred-b", pb,
                      "--metric", "fga", "--top", "1", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;

  // exhaustive oracle
  std::string best;
  double best_gap = -1.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double gap = std::abs(fga(h.gold, a.predictions[i].states, 0.5) -
                                fga(h.gold, b.predictions[i].states, 0.5));
    if (gap > best_gap) {
      best_gap = gap;
      best = a.predictions[i].dialogue_id;
    }
  }
  EXPECT_NE(r.out.find("\n1," + best + ","), std::string::npos) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
}

TEST_F(CliTest, CompareMetricsOnOneSystem) {
  const auto r = run({"compare", "--gold", gold, "--pred-a", p2, "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"a\": \"fga\""), std::string::npos);
  EXPECT_NE(r.out.find("\"gap\": 0.0692"), std::string::npos) << r.out;
}

TEST_F(CliTest, AnalyzeCorrelates) {
  CorpusShape shape;
  shape.dialogues = 60;
  const auto corpus = write("corpus.json", write_corpus(random_corpus(shape, 8)));
  const auto preds = (dir / "p.json").string();
  ASSERT_EQ(run({"perturb", "--gold", corpus, "--error-rate", "0.3", "--seed", "2", "--out",
                 preds})
                .code,
            0);
  const auto r = run({"analyze", "--gold", corpus, "--pred", preds, "--traits", "to,nu",
                      "--correlate", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"comparisons\": [\n"), std::string::npos);
  EXPECT_NE(r.out.find("\"trait\": \"nu\""), std::string::npos);
  const auto csv = run({"analyze", "--gold", corpus, "--pred", preds, "--format", "csv"});
  EXPECT_EQ(csv.out.substr(0, csv.out.find('\n')),
            "dialogue_id,mistakes,to,nu,jga,sa,aga,rsa,fga,gca");
}

TEST_F(CliTest, Validate) {
  auto r = run({"validate", "--gold", gold, "--pred", p2});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ok: corpus"), std::string::npos);
  EXPECT_NE(r.out.find("ok: predictions"), std::string::npos);
  const auto bad = write("bad.json", R"({"format_version": 1, "predictions": {"hypothetical": [{}]}})");
  r = run({"validate", "--gold", gold, "--pred", bad});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("E_LENGTH_MISMATCH"), std::string::npos) << r.err;
}

TEST_F(CliTest, InputErrorsExitOne) {
  const auto broken = write("broken.json", "{ not json");
  auto r = run({"evaluate", "--gold", broken, "--pred", p1});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error: E_PARSE"), std::string::npos) << r.err;
  r = run({"evaluate", "--gold", (dir / "missing.json").string(), "--pred", p1});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("E_IO"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"evaluate", "--gold", gold}).code, 2);
  EXPECT_EQ(run({"evaluate", "--gold", gold, "--pred", p1, "--format", "xml"}).code, 2);
  EXPECT_EQ(run({"evaluate", "--gold", gold, "--pred", p1, "--lambda", "2"}).code, 2);
  EXPECT_EQ(run({"evaluate", "--gold", gold, "--pred", p1, "--aggregate", "avg"}).code, 2);
  EXPECT_EQ(run({"perturb", "--gold", gold, "--kind-mix", "1,1"}).code, 2);
  EXPECT_EQ(run({"perturb", "--gold", gold, "--error-rate", "1.5"}).code, 2);
  EXPECT_EQ(run({"compare", "--gold", gold, "--pred-a", p1, "--top", "0"}).code, 2);
  EXPECT_EQ(run({"analyze", "--gold", gold, "--pred", p1, "--traits", "xx"}).code, 2);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("evaluate"), std::string::npos);
}

TEST_F(CliTest, ConfigFromEnvironmentAndFlagsOverride) {
  const auto cfg = write("cfg.json", R"({"metrics": {"lambda": 1.0}})");
  setenv(kConfigEnvVar, cfg.c_str(), 1);
  auto r = run({"evaluate", "--gold", gold, "--pred", p2});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"lambda\": 1.0000"), std::string::npos);
  r = run({"evaluate", "--gold", gold, "--pred", p2, "--lambda", "0.5"});
  EXPECT_NE(r.out.find("\"fga\": 0.5975"), std::string::npos);
  const auto other = write("other.json", R"({"metrics": {"lambda": 0.25}})");
  r = run({"evaluate", "--gold", gold, "--pred", p2, "--config", other});
  EXPECT_NE(r.out.find("\"lambda\": 0.2500"), std::string::npos);
}

}  // namespace
}  // namespace dsteval
