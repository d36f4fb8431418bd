#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rage/cli.hpp"
#include "rage/service.hpp"
#include "test_support.hpp"

namespace rage::cli {
namespace {

using nlohmann::json;
using rage::testing::FixturePath;
using rage::testing::kBigThree;
using rage::testing::kTimeline;
using rage::testing::ReadFile;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args, bool interactive = false) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err, interactive);
  return {code, out.str(), err.str()};
}

std::string WriteTemp(const std::string& name, const std::string& contents) {
  const auto dir = std::filesystem::temp_directory_path() / "rage_cli_test";
  std::filesystem::create_directories(dir);
  const auto p = dir / (name + "_" + std::to_string(::getpid()));
  std::ofstream(p, std::ios::binary) << contents;
  return p.string();
}

std::vector<std::string> BigThreeArgs(std::vector<std::string> head) {
  head.insert(head.end(), {kBigThree.question, "--corpus", FixturePath("big_three/corpus.jsonl"),
                           "--mock", FixturePath("big_three/oracle.json")});
  return head;
}

TEST(CliIndex, ReportsDocumentCount) {
  const std::string corpus = WriteTemp(
      "three.jsonl",
      "{\"id\":\"a\",\"contents\":\"alpha\"}\n{\"id\":\"b\",\"contents\":\"beta\"}\n"
      "{\"id\":\"c\",\"contents\":\"gamma\"}\n");
  const std::string index = WriteTemp("three.idx", "");
  const CliRun r = Cli({"index", "--corpus", corpus, "--index", index});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "indexed 3 documents\n");
  EXPECT_EQ(retrieval::Index::Load(index).num_documents(), 3);
}

TEST(CliIndex, EmptyCorpusFails) {
  const CliRun r = Cli({"index", "--corpus", WriteTemp("empty.jsonl", ""), "--index",
                     WriteTemp("empty.idx", "")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("EmptyCorpus"), std::string::npos) << r.err;
}

TEST(CliIndex, MalformedLineReportsLineNumber) {
  const std::string corpus =
      WriteTemp("bad.jsonl", "{\"id\":\"a\",\"contents\":\"alpha\"}\n{\"id\": \"b\", oops}\n");
  const CliRun r = Cli({"index", "--corpus", corpus, "--index", WriteTemp("bad.idx", "")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(CliIndex, DuplicateIdFails) {
  const std::string corpus = WriteTemp(
      "dup.jsonl", "{\"id\":\"a\",\"contents\":\"alpha\"}\n{\"id\":\"a\",\"contents\":\"beta\"}\n");
  const CliRun r = Cli({"index", "--corpus", corpus, "--index", WriteTemp("dup.idx", "")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("DuplicateId"), std::string::npos);
}

TEST(CliExplain, CombinationTableListsFirstSourceRule) {
  const CliRun r = Cli(BigThreeArgs({"explain", "--family", "combination", "--exhaustive",
                                  "--format", "table"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("roger federer <- requires {d1}"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("50.0%"), std::string::npos);
}

TEST(CliExplain, ReorderingMovesFirstSourceToSecondPosition) {
  const CliRun r = Cli(BigThreeArgs({"explain", "--kind", "reordering", "--format", "json"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json c = json::parse(r.out).at("outcome").at("counterfactual");
  EXPECT_EQ(c.at("perturbation"), json::array({1, 0, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(c.at("similarity").get<double>(), 0.8);
  EXPECT_EQ(c.at("new_answer").at("normalized"), "novak djokovic");
}

TEST(CliExplain, UsageErrors) {
  CliRun r = Cli({"explain", kBigThree.question, "--corpus", FixturePath("big_three/corpus.jsonl"),
               "--family", "combination"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--mock"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;

  r = Cli(BigThreeArgs({"explain", "--family", "combination", "--endpoint", "http://x"}));
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli(BigThreeArgs({"explain"}));
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli(BigThreeArgs({"explain", "--family", "combination", "--kind", "top_down"}));
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli(BigThreeArgs({"explain", "--family", "combination", "--max-perturbations", "0"}));
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST(CliExplain, LimitAndOracleFailuresHaveDistinctCodes) {
  CliRun r = Cli({"explain", kTimeline.question, "--corpus", FixturePath("timeline/corpus.jsonl"),
               "--mock", FixturePath("timeline/oracle.json"), "--top-k", "9", "--family",
               "permutation", "--exhaustive"});
  EXPECT_EQ(r.code, kExitLimits) << r.err;
  EXPECT_NE(r.err.find("KTooLarge"), std::string::npos);

  r = Cli(BigThreeArgs({"optimal", "--scoring", "AttentionSalience"}));
  EXPECT_EQ(r.code, kExitOracle) << r.err;

  ::setenv("RAGE_ORACLE_TIMEOUT_MS", "200", 1);
  r = Cli({"ask", kBigThree.question, "--corpus", FixturePath("big_three/corpus.jsonl"),
           "--endpoint", "http://127.0.0.1:9", "--model", "m"});
  ::unsetenv("RAGE_ORACLE_TIMEOUT_MS");
  EXPECT_EQ(r.code, kExitOracle) << r.err;
  EXPECT_NE(r.err.find("OracleUnavailable"), std::string::npos) << r.err;
}

TEST(CliOutput, FormatDefaultsFollowTerminal) {
  const CliRun piped = Cli(BigThreeArgs({"ask"}), false);
  ASSERT_EQ(piped.code, kExitOk) << piped.err;
  EXPECT_EQ(json::parse(piped.out).at("baselines").at("full").at("normalized"), "roger federer");
  const CliRun tty = Cli(BigThreeArgs({"ask"}), true);
  EXPECT_FALSE(json::accept(tty.out));
  EXPECT_NE(tty.out.find("full context answer:  roger federer"), std::string::npos);
}

TEST(CliOutput, SeededRunsAreByteIdentical) {
  const auto args = BigThreeArgs({"sample", "--sample-size", "30", "--seed", "11"});
  const CliRun a = Cli(args);
  const CliRun b = Cli(args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(json::parse(a.out).at("config").at("seed"), 11);
}

TEST(CliOutput, JsonMatchesServicePayloads) {
  service::ExplanationService svc(service::ServiceConfig{});
  svc.IngestCorpus(ReadFile(FixturePath("big_three/corpus.jsonl")));
  svc.RegisterOracle({{"type", "mock"},
                      {"fixture", json::parse(ReadFile(FixturePath("big_three/oracle.json")))}});
  const json session = svc.CreateSession({{"query", kBigThree.question}, {"oracle_id", "big-three"}});

  const CliRun ask = Cli(BigThreeArgs({"ask"}));
  json expected_context = session;
  for (const char* key : {"session_id", "oracle_id", "top_k", "created_at", "results"}) {
    expected_context.erase(key);
  }
  EXPECT_EQ(json::parse(ask.out), expected_context);

  struct Case {
    std::vector<std::string> cli;
    bool insight;
    json request;
  };
  const std::vector<Case> cases = {
      {{"explain", "--family", "combination", "--exhaustive"}, true, {{"family", "Combination"}, {"config", {{"exhaustive", true}}}}},
      {{"sample", "--sample-size", "25", "--seed", "4"}, true, {{"family", "Permutation"}, {"config", {{"sample_size", 25}, {"seed", 4}}}}},
      {{"optimal", "--s", "4"}, true, {{"family", "OptimalPermutation"}, {"config", {{"s", 4}}}}},
      {{"explain", "--kind", "top_down"}, false, {{"kind", "top_down"}}},
      {{"explain", "--kind", "bottom_up", "--target-answer", "Roger Federer"}, false, {{"kind", "bottom_up"}, {"config", {{"target_answer", "Roger Federer"}}}}},
  };
  for (const auto& c : cases) {
    const CliRun r = Cli(BigThreeArgs(c.cli));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const std::string sid = session.at("session_id");
    const auto submitted = c.insight ? svc.SubmitInsightJob(sid, c.request)
                                     : svc.SubmitCounterfactualJob(sid, c.request);
    const auto done = svc.WaitForJob(submitted.job_id, std::chrono::seconds(60));
    ASSERT_EQ(done.state, service::JobState::kDone);
    EXPECT_EQ(json::parse(r.out), svc.GetResult(*done.result_ref)) << c.request.dump();
  }
}

TEST(CliSample, TimelinePermutationsHaveOneGroupAndNoRules) {
  const CliRun r = Cli({"sample", kTimeline.question, "--corpus", FixturePath("timeline/corpus.jsonl"),
                     "--mock", FixturePath("timeline/oracle.json"), "--top-k", "10",
                     "--format", "table"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("no rules were found"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("100.0%"), std::string::npos);
}

TEST(CliStore, PersistentCacheSkipsRemoteWork) {
  const std::string store = WriteTemp("cache.db", "");
  std::filesystem::remove(store);
  auto args = BigThreeArgs({"explain", "--kind", "top_down", "--store", store});
  const CliRun first = Cli(args);
  const CliRun second = Cli(args);
  ASSERT_EQ(first.code, kExitOk) << first.err;
  EXPECT_EQ(first.out, second.out);
  KvStore kv(store);
  EXPECT_FALSE(kv.List("oracle_cache").empty());
}

TEST(CliExitCodes, Mapping) {
  EXPECT_EQ(ExitCodeFor(ErrorCode::kEmptyCorpus), kExitData);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kParseError), kExitData);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kInvalidArgument), kExitUsage);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kOracleUnavailable), kExitOracle);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kBudgetExhausted), kExitLimits);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kKTooLarge), kExitLimits);
}

}  // namespace
}  // namespace rage::cli
