#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "rage/service.hpp"
#include "test_support.hpp"

namespace rage::service {
namespace {

using nlohmann::json;
using rage::testing::FixturePath;
using rage::testing::ReadFile;
using namespace std::chrono_literals;

json Fixture(const std::string& rel) { return json::parse(ReadFile(FixturePath(rel))); }

std::string TempPath(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "rage_service_test";
  std::filesystem::create_directories(dir);
  const auto p = dir / (name + "_" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  return p.string();
}

// Three documents all matching "alpha".
std::vector<retrieval::CorpusRecord> AlphaCorpus() {
  return {{"p1", "alpha alpha alpha beta"}, {"p2", "alpha alpha gamma"}, {"p3", "alpha delta"}};
}

class ServiceTest : public ::testing::Test {
 protected:
  ServiceConfig Config() {
    ServiceConfig c;
    c.workers = 2;
    c.oracle_concurrency = 3;
    return c;
  }

  json Session(ExplanationService& svc, const rage::testing::UseCase& uc) {
    svc.IngestCorpus(ReadFile(FixturePath(uc.dir + "/corpus.jsonl")));
    const json desc = svc.RegisterOracle(
        {{"type", "mock"}, {"fixture", Fixture(uc.dir + "/oracle.json")}});
    return svc.CreateSession(
        {{"query", uc.question}, {"oracle_id", desc.at("id")}, {"top_k", uc.top_k}});
  }

  JobStatus Finish(ExplanationService& svc, const JobStatus& submitted) {
    return svc.WaitForJob(submitted.job_id, 60s);
  }
};

TEST_F(ServiceTest, SessionRecordsContextAndBaselines) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  EXPECT_EQ(s.at("k"), 5);
  EXPECT_EQ(s.at("sources").size(), 5u);
  EXPECT_EQ(s.at("sources")[0].at("doc_id"), "d1");
  EXPECT_EQ(s.at("baselines").at("full").at("normalized"), "roger federer");
  EXPECT_EQ(s.at("baselines").at("empty").at("normalized"), "novak djokovic");
  EXPECT_EQ(svc.GetSession(s.at("session_id")), s);
}

TEST_F(ServiceTest, StoredBaselinesEqualFreshEvaluations) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kUsOpen);
  const auto ctx = rage::testing::LoadUseCaseContext(rage::testing::kUsOpen);
  auto mock = rage::testing::LoadUseCaseOracle(rage::testing::kUsOpen);
  oracle::Gateway fresh(mock, std::make_shared<oracle::MemoryCache>());
  const auto [full, empty] = analysis::EvaluateBaselines(ctx, fresh);
  EXPECT_EQ(s.at("baselines").at("full"), json(full));
  EXPECT_EQ(s.at("baselines").at("empty"), json(empty));
}

TEST_F(ServiceTest, SessionErrors) {
  ExplanationService svc(Config());
  const json desc = svc.RegisterOracle({{"type", "mock"}, {"fixture", {{"default_answer", "x"}}}});
  const std::string oid = desc.at("id");
  try {
    svc.CreateSession({{"query", "alpha"}, {"oracle_id", oid}});
    FAIL() << "expected EmptyCorpus";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyCorpus);
  }
  svc.IngestRecords(AlphaCorpus());
  try {
    svc.CreateSession({{"query", "zebra unicorn"}, {"oracle_id", oid}});
    FAIL() << "expected NoResults";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoResults);
  }
  try {
    svc.CreateSession({{"query", "alpha"}, {"oracle_id", "nope"}});
    FAIL() << "expected UnknownOracle";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownOracle);
  }
  try {
    svc.CreateSession({{"query", "   "}, {"oracle_id", oid}});
    FAIL() << "expected EmptyQuery";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyQuery);
  }
  try {
    svc.CreateSession({{"query", "alpha"}, {"oracle_id", oid}, {"top_k", 0}});
    FAIL() << "expected InvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST_F(ServiceTest, CombinationExhaustiveEvaluatesAllSubsets) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const JobStatus done = Finish(
      svc, svc.SubmitInsightJob(s.at("session_id"), {{"family", "Combination"}}));
  ASSERT_EQ(done.state, JobState::kDone) << (done.error ? done.error->dump() : "");
  EXPECT_EQ(done.total, 32u);
  EXPECT_EQ(done.evaluated, 32u);
  const json r = svc.GetResult(*done.result_ref);
  EXPECT_EQ(r.at("family"), "Combination");
  EXPECT_EQ(r.at("insight").at("total_evaluated"), 32);
  EXPECT_EQ(r.at("insight").at("groups").at("roger federer").size(), 16u);
  const json session = svc.GetSession(s.at("session_id"));
  EXPECT_EQ(session.at("results"), json::array({*done.result_ref}));
}

TEST_F(ServiceTest, PermutationOnNineSourcesFailsWithKTooLarge) {
  ExplanationService svc(Config());
  rage::testing::UseCase uc = rage::testing::kTimeline;
  uc.top_k = 9;
  const json s = Session(svc, uc);
  ASSERT_EQ(s.at("k"), 9);
  const JobStatus done = Finish(
      svc, svc.SubmitInsightJob(s.at("session_id"),
                                {{"family", "Permutation"}, {"config", {{"exhaustive", true}}}}));
  ASSERT_EQ(done.state, JobState::kFailed);
  EXPECT_EQ(done.error->at("code"), "KTooLarge");
  EXPECT_FALSE(done.result_ref.has_value());
}

TEST_F(ServiceTest, AttentionScoringAgainstPlainOracleFails) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const JobStatus done = Finish(
      svc, svc.SubmitInsightJob(s.at("session_id"), {{"family", "OptimalPermutation"},
                                                     {"config", {{"scoring", "AttentionSalience"}}}}));
  ASSERT_EQ(done.state, JobState::kFailed);
  EXPECT_EQ(done.error->at("code"), "UnsupportedCapability");
}

TEST_F(ServiceTest, OptimalPermutationsCarryAnswers) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const JobStatus done = Finish(
      svc, svc.SubmitInsightJob(s.at("session_id"),
                                {{"family", "optimal"}, {"config", {{"s", 3}}}}));
  ASSERT_EQ(done.state, JobState::kDone) << (done.error ? done.error->dump() : "");
  const json r = svc.GetResult(*done.result_ref);
  ASSERT_EQ(r.at("permutations").size(), 3u);
  for (const auto& p : r.at("permutations")) {
    EXPECT_TRUE(p.contains("answer"));
    EXPECT_TRUE(p.at("answer").contains("normalized"));
  }
  EXPECT_EQ(r.at("profile").size(), 5u);
}

TEST_F(ServiceTest, TopDownOnBigThreeRemovesFirstSource) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const JobStatus done = Finish(
      svc, svc.SubmitCounterfactualJob(s.at("session_id"), {{"kind", "top_down"}}));
  ASSERT_EQ(done.state, JobState::kDone);
  const json outcome = svc.GetResult(*done.result_ref).at("outcome");
  EXPECT_EQ(outcome.at("status"), "Found");
  EXPECT_EQ(outcome.at("counterfactual").at("perturbation"), json::array({"d1"}));
  EXPECT_EQ(outcome.at("counterfactual").at("new_answer").at("normalized"), "novak djokovic");
}

TEST_F(ServiceTest, ReorderingOnOrderInsensitiveOracleIsNotFound) {
  ExplanationService svc(Config());
  svc.IngestRecords(AlphaCorpus());
  svc.RegisterOracle({{"id", "flat"}, {"type", "mock"}, {"fixture", {{"default_answer", "same"}}}});
  const json s = svc.CreateSession({{"query", "alpha"}, {"oracle_id", "flat"}, {"top_k", 3}});
  ASSERT_EQ(s.at("k"), 3);
  const JobStatus done = Finish(
      svc, svc.SubmitCounterfactualJob(s.at("session_id"), {{"kind", "reordering"}}));
  ASSERT_EQ(done.state, JobState::kDone);
  const json outcome = svc.GetResult(*done.result_ref).at("outcome");
  EXPECT_EQ(outcome.at("status"), "NotFound");
  EXPECT_EQ(outcome.at("perturbations_tested"), 5);
  EXPECT_TRUE(outcome.at("counterfactual").is_null());
}

TEST_F(ServiceTest, TightBudgetOnTwoRemovalFlipIsBudgetExhausted) {
  ExplanationService svc(Config());
  svc.IngestRecords(AlphaCorpus());
  // The answer only changes once both p1 and p2 are gone.
  svc.RegisterOracle({{"id", "pair"},
                      {"type", "mock"},
                      {"fixture",
                       {{"default_answer", "changed"},
                        {"rules",
                         {{{"requires", {"p1"}}, {"answer", "kept"}},
                          {{"requires", {"p2"}}, {"answer", "kept"}}}}}}});
  const json s = svc.CreateSession({{"query", "alpha"}, {"oracle_id", "pair"}, {"top_k", 3}});
  const JobStatus tight = Finish(
      svc, svc.SubmitCounterfactualJob(s.at("session_id"),
                                       {{"kind", "top_down"}, {"config", {{"max_perturbations", 1}}}}));
  ASSERT_EQ(tight.state, JobState::kDone);
  EXPECT_EQ(svc.GetResult(*tight.result_ref).at("outcome").at("status"), "BudgetExhausted");
  EXPECT_LE(tight.evaluated, 1u + 2u);
  EXPECT_LE(tight.remote_calls, 1 + 2);

  const JobStatus roomy = Finish(
      svc, svc.SubmitCounterfactualJob(s.at("session_id"), {{"kind", "top_down"}}));
  const json outcome = svc.GetResult(*roomy.result_ref).at("outcome");
  EXPECT_EQ(outcome.at("status"), "Found");
  EXPECT_EQ(outcome.at("counterfactual").at("perturbation"), json::array({"p1", "p2"}));
}

TEST_F(ServiceTest, RerunIsByteIdenticalAndServedFromCache) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const json request = {{"family", "Permutation"}, {"config", {{"sample_size", 40}, {"seed", 7}}}};
  const JobStatus first = Finish(svc, svc.SubmitInsightJob(s.at("session_id"), request));
  const JobStatus second = Finish(svc, svc.SubmitInsightJob(s.at("session_id"), request));
  ASSERT_EQ(first.state, JobState::kDone);
  ASSERT_EQ(second.state, JobState::kDone);
  EXPECT_GT(first.remote_calls, 0);
  EXPECT_EQ(second.remote_calls, 0);
  EXPECT_EQ(first.result_ref, second.result_ref);
  EXPECT_EQ(svc.GetResultText(*first.result_ref), svc.GetResultText(*second.result_ref));
  EXPECT_EQ(svc.GetSession(s.at("session_id")).at("results").size(), 1u);
}

TEST_F(ServiceTest, ProgressNeverExceedsBudgetPlusBaselines) {
  ExplanationService svc(Config());
  rage::testing::UseCase uc = rage::testing::kTimeline;
  const json s = Session(svc, uc);
  const int budget = 50;
  const JobStatus submitted = svc.SubmitCounterfactualJob(
      s.at("session_id"), {{"kind", "bottom_up"}, {"config", {{"max_perturbations", budget}}}});
  std::uint64_t last = 0;
  JobStatus st = submitted;
  while (st.state != JobState::kDone && st.state != JobState::kFailed) {
    st = svc.GetJob(submitted.job_id);
    EXPECT_GE(st.evaluated, last);
    EXPECT_LE(st.evaluated, static_cast<std::uint64_t>(budget + 2));
    last = st.evaluated;
    std::this_thread::sleep_for(1ms);
  }
  EXPECT_EQ(st.state, JobState::kDone);
  EXPECT_LE(st.remote_calls, budget + 2);
  EXPECT_EQ(svc.GetResult(*st.result_ref).at("outcome").at("status"), "BudgetExhausted");
}

TEST_F(ServiceTest, RejectsBadRequests) {
  ExplanationService svc(Config());
  const json s = Session(svc, rage::testing::kBigThree);
  const std::string id = s.at("session_id");
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  EXPECT_EQ(code_of([&] { svc.SubmitInsightJob("s-missing", {{"family", "Combination"}}); }),
            ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { svc.SubmitInsightJob(id, {{"family", "Nope"}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] {
              svc.SubmitInsightJob(id, {{"family", "Combination"}, {"config", {{"bogus", 1}}}});
            }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { svc.SubmitCounterfactualJob(id, {{"kind", "sideways"}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { svc.GetJob("j-missing"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { svc.GetResultText("r-missing"); }), ErrorCode::kNotFound);
}

TEST_F(ServiceTest, OracleRegistrationIsIdempotentPerDefinition) {
  ExplanationService svc(Config());
  const json fixture = Fixture("big_three/oracle.json");
  const json a = svc.RegisterOracle({{"type", "mock"}, {"fixture", fixture}});
  const json b = svc.RegisterOracle({{"type", "mock"}, {"fixture", fixture}});
  EXPECT_EQ(a, b);
  try {
    svc.RegisterOracle(
        {{"id", a.at("id")}, {"type", "mock"}, {"fixture", {{"default_answer", "other"}}}});
    FAIL() << "expected DuplicateId";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
  }
  EXPECT_EQ(svc.ListOracles().at("oracles").size(), 1u);
}

TEST_F(ServiceTest, HttpOracleSecretsAreNotPersisted) {
  ExplanationService svc(Config());
  svc.RegisterOracle({{"id", "remote"},
                      {"type", "http"},
                      {"config", {{"endpoint", "http://127.0.0.1:9/v1/chat/completions"},
                                  {"model", "m"},
                                  {"api_key", "sk-secret"}}}});
  const auto stored = svc.store().Get("oracles", "remote");
  ASSERT_TRUE(stored.has_value());
  EXPECT_EQ(stored->find("sk-secret"), std::string::npos);
}

TEST_F(ServiceTest, StatePersistsAcrossRestart) {
  ServiceConfig c = Config();
  c.store_path = TempPath("store.db");
  c.index_path = TempPath("index.bm25");
  std::string session_id, job_id, result_text;
  {
    ExplanationService svc(c);
    const json s = Session(svc, rage::testing::kBigThree);
    session_id = s.at("session_id");
    const JobStatus done =
        Finish(svc, svc.SubmitCounterfactualJob(session_id, {{"kind", "reordering"}}));
    ASSERT_EQ(done.state, JobState::kDone);
    job_id = done.job_id;
    result_text = svc.GetResultText(*done.result_ref);
  }
  ExplanationService svc(c);
  EXPECT_EQ(svc.ListOracles().at("oracles").size(), 1u);
  const JobStatus job = svc.GetJob(job_id);
  EXPECT_EQ(job.state, JobState::kDone);
  EXPECT_EQ(svc.GetResultText(*job.result_ref), result_text);
  // The restored session keeps working and is answered from the persistent cache.
  const JobStatus again =
      Finish(svc, svc.SubmitCounterfactualJob(session_id, {{"kind", "reordering"}}));
  EXPECT_EQ(again.remote_calls, 0);
  EXPECT_EQ(svc.GetResultText(*again.result_ref), result_text);
  // The index was reloaded from disk.
  const json fresh = svc.CreateSession({{"query", rage::testing::kBigThree.question},
                                        {"oracle_id", "big-three"}});
  EXPECT_EQ(fresh.at("k"), 5);
}

TEST_F(ServiceTest, UnfinishedJobsAreFailedOnRestart) {
  ServiceConfig c = Config();
  c.store_path = TempPath("interrupted.db");
  {
    KvStore store(c.store_path);
    JobStatus s;
    s.job_id = "j-stale";
    s.session_id = "s-x";
    s.type = "insight";
    s.analysis = "Combination";
    s.state = JobState::kRunning;
    store.Put("jobs", s.job_id, s.ToJson().dump());
  }
  ExplanationService svc(c);
  const JobStatus s = svc.GetJob("j-stale");
  EXPECT_EQ(s.state, JobState::kFailed);
  EXPECT_EQ(s.error->at("code"), "Internal");
}

TEST(ServiceConfigTest, FileAndEnvironment) {
  const json j = {{"store_path", "x.db"},
                  {"workers", 3},
                  {"limits", {{"default_max_perturbations", 200}}},
                  {"oracle_defaults", {{"model", "file-model"}}}};
  ServiceConfig c = ServiceConfig::FromJson(j);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.limits.default_max_perturbations, 200);
  ::setenv("RAGE_WORKERS", "5", 1);
  ::setenv("RAGE_ORACLE_MODEL", "env-model", 1);
  const ServiceConfig e = c.WithEnvironment();
  ::unsetenv("RAGE_WORKERS");
  ::unsetenv("RAGE_ORACLE_MODEL");
  EXPECT_EQ(e.workers, 5);
  EXPECT_EQ(e.oracle_defaults.at("model"), "env-model");
  EXPECT_EQ(e.store_path, "x.db");
  EXPECT_THROW(ServiceConfig::FromJson({{"workers", 0}}), Error);
}

TEST(JobStatusTest, JsonRoundTrip) {
  JobStatus s;
  s.job_id = "j-1";
  s.session_id = "s-1";
  s.type = "counterfactual";
  s.analysis = "top_down";
  s.state = JobState::kDone;
  s.evaluated = 4;
  s.total = 32;
  s.result_ref = "r-1";
  s.remote_calls = 3;
  const json j = s.ToJson();
  EXPECT_EQ(j.at("progress").at("evaluated"), 4);
  EXPECT_EQ(JobStatus::FromJson(j).ToJson(), j);
}

TEST(HttpStatusTest, MapsErrorFamilies) {
  EXPECT_EQ(HttpStatusFor(ErrorCode::kNotFound), 404);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kInvalidArgument), 400);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kUnknownOracle), 422);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kOracleUnavailable), 502);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kInternal), 500);
}

// HTTP front end --------------------------------------------------------------

class ApiTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig c;
    c.workers = 2;
    service_ = std::make_unique<ExplanationService>(c);
    server_ = std::make_unique<ApiServer>(*service_);
    port_ = server_->Bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->Run(); });
    server_->WaitUntilReady();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_->Stop();
    thread_.join();
  }

  std::pair<int, json> Post(const std::string& path, const std::string& body,
                            const std::string& type = "application/json") {
    auto res = client_->Post(path, body, type);
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body)};
  }
  std::pair<int, json> Post(const std::string& path, const json& body) {
    return Post(path, body.dump());
  }
  std::pair<int, json> Get(const std::string& path) {
    auto res = client_->Get(path);
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body)};
  }

  json WaitDone(const std::string& job_id) {
    for (int i = 0; i < 30000; ++i) {
      const auto [status, job] = Get("/jobs/" + job_id);
      EXPECT_EQ(status, 200);
      if (job.at("state") == "Done" || job.at("state") == "Failed") return job;
      std::this_thread::sleep_for(2ms);
    }
    return nullptr;
  }

  std::unique_ptr<ExplanationService> service_;
  std::unique_ptr<ApiServer> server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ApiTest, EndToEndUseCaseFlow) {
  const auto& uc = rage::testing::kBigThree;
  auto [cs, corpus] = Post("/corpus", ReadFile(FixturePath(uc.dir + "/corpus.jsonl")),
                           "application/x-ndjson");
  ASSERT_EQ(cs, 200) << corpus.dump();
  EXPECT_EQ(corpus.at("documents"), 7);

  auto [os, oracle] = Post("/oracles", json{{"type", "mock"}, {"fixture", Fixture(uc.dir + "/oracle.json")}});
  ASSERT_EQ(os, 201) << oracle.dump();
  EXPECT_EQ(oracle.at("id"), "big-three");
  EXPECT_EQ(Get("/oracles").second.at("oracles").size(), 1u);

  auto [ss, session] = Post("/sessions", json{{"query", uc.question}, {"oracle_id", "big-three"}});
  ASSERT_EQ(ss, 201) << session.dump();
  const std::string sid = session.at("session_id");
  EXPECT_EQ(Get("/sessions/" + sid).second, session);

  auto [is, job] = Post("/sessions/" + sid + "/insights",
                        json{{"family", "Combination"}, {"config", {{"exhaustive", true}}}});
  ASSERT_EQ(is, 202) << job.dump();
  const json done = WaitDone(job.at("job_id"));
  ASSERT_EQ(done.at("state"), "Done") << done.dump();
  EXPECT_EQ(done.at("progress").at("evaluated"), 32);

  auto res = client_->Get("/results/" + done.at("result_ref").get<std::string>());
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, service_->GetResultText(done.at("result_ref")));
  const json insight = json::parse(res->body).at("insight");
  EXPECT_DOUBLE_EQ(insight.at("proportions").at("roger federer").get<double>(), 0.5);

  auto [rs, cjob] = Post("/sessions/" + sid + "/counterfactuals", json{{"kind", "reordering"}});
  ASSERT_EQ(rs, 202);
  const json cdone = WaitDone(cjob.at("job_id"));
  const json outcome =
      Get("/results/" + cdone.at("result_ref").get<std::string>()).second.at("outcome");
  EXPECT_EQ(outcome.at("counterfactual").at("perturbation"), json::array({1, 0, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(outcome.at("counterfactual").at("similarity").get<double>(), 0.8);
}

TEST_F(ApiTest, StructuredCorpusUpload) {
  json docs = json::array();
  for (const auto& r : AlphaCorpus()) docs.push_back({{"id", r.id}, {"contents", r.contents}});
  const auto [status, body] = Post("/corpus", json{{"documents", docs}});
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body.at("documents"), 3);
}

TEST_F(ApiTest, ErrorPayloadsAreStructured) {
  auto expect_error = [](const std::pair<int, json>& r, int status, const std::string& code) {
    EXPECT_EQ(r.first, status) << r.second.dump();
    ASSERT_TRUE(r.second.is_object());
    EXPECT_EQ(r.second.at("code"), code);
    EXPECT_TRUE(r.second.contains("message"));
    EXPECT_TRUE(r.second.contains("details"));
  };
  expect_error(Get("/sessions/s-none"), 404, "NotFound");
  expect_error(Get("/jobs/j-none"), 404, "NotFound");
  expect_error(Get("/results/r-none"), 404, "NotFound");
  expect_error(Get("/no/such/route"), 404, "NotFound");
  expect_error(Post("/sessions", std::string("{not json")), 400, "ParseError");
  expect_error(Post("/corpus", std::string("{\"id\": \"a\"}\n")), 400, "ParseError");
  Post("/corpus", json{{"documents", {{{"id", "a"}, {"contents", "alpha"}}}}});
  expect_error(Post("/sessions", json{{"query", "alpha"}, {"oracle_id", "ghost"}}), 422,
               "UnknownOracle");
  expect_error(Post("/oracles", json{{"type", "carrier-pigeon"}}), 400, "InvalidArgument");
}

TEST_F(ApiTest, Health) {
  const auto [status, body] = Get("/health");
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body.at("status"), "ok");
}

}  // namespace
}  // namespace rage::service
