#pragma once

// Explanation service core: corpus ingestion, oracle registry, sessions and
// asynchronous analysis jobs, persisted in one KvStore file.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rage/analysis.hpp"
#include "rage/oracle.hpp"
#include "rage/retrieval.hpp"
#include "rage/store.hpp"

namespace rage::service {

struct ServiceConfig {
  // Index file written on ingestion and loaded at start-up; empty keeps the
  // index in memory only.
  std::string index_path;
  std::string store_path = ":memory:";
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 2;
  // Global cap on concurrent remote oracle calls, across all jobs.
  int oracle_concurrency = 4;
  int default_top_k = 5;
  retrieval::Bm25Params bm25;
  analysis::Limits limits;
  // Defaults merged under every HTTP oracle registration.
  nlohmann::json oracle_defaults = nlohmann::json::object();
  // Registrations applied at start-up.
  nlohmann::json oracles = nlohmann::json::array();

  static ServiceConfig FromJson(const nlohmann::json& j);
  static ServiceConfig FromFile(const std::string& path);
  // RAGE_INDEX_PATH, RAGE_STORE_PATH, RAGE_HOST, RAGE_PORT, RAGE_WORKERS,
  // RAGE_ORACLE_CONCURRENCY, RAGE_MAX_PERTURBATIONS, and the RAGE_ORACLE_*
  // oracle defaults.
  ServiceConfig WithEnvironment() const;
};

enum class JobState { kPending, kRunning, kDone, kFailed };
std::string_view ToString(JobState s);

struct JobStatus {
  std::string job_id;
  std::string session_id;
  // "insight" or "counterfactual", and the family or kind name.
  std::string type;
  std::string analysis;
  JobState state = JobState::kPending;
  std::uint64_t evaluated = 0;
  std::uint64_t total = 0;
  std::optional<std::string> result_ref;
  // {code, message, details} when Failed.
  std::optional<nlohmann::json> error;
  long remote_calls = 0;

  nlohmann::json ToJson() const;
  static JobStatus FromJson(const nlohmann::json& j);
};

class ExplanationService {
 public:
  explicit ExplanationService(ServiceConfig config);
  ~ExplanationService();
  ExplanationService(const ExplanationService&) = delete;
  ExplanationService& operator=(const ExplanationService&) = delete;

  // Replaces the corpus. Returns {"documents": n}.
  nlohmann::json IngestCorpus(std::string_view jsonl);
  nlohmann::json IngestRecords(std::vector<retrieval::CorpusRecord> records);

  // {"id"?, "type": "mock", "fixture": {...}} or
  // {"id", "type": "http", "config": {...}}. Re-registering an id with a
  // different definition raises kDuplicateId.
  nlohmann::json RegisterOracle(const nlohmann::json& registration);
  nlohmann::json ListOracles() const;

  // {"query", "oracle_id", "top_k"?}. Retrieves the context and evaluates the
  // full and empty baselines before returning.
  nlohmann::json CreateSession(const nlohmann::json& request);
  nlohmann::json GetSession(const std::string& session_id) const;

  // {"family", "config"?} and {"kind", "config"?}. Request errors are raised
  // here; analysis errors surface as a Failed job.
  JobStatus SubmitInsightJob(const std::string& session_id, const nlohmann::json& request);
  JobStatus SubmitCounterfactualJob(const std::string& session_id,
                                    const nlohmann::json& request);

  JobStatus GetJob(const std::string& job_id) const;
  // Blocks until the job is Done or Failed, or the timeout passes.
  JobStatus WaitForJob(const std::string& job_id, std::chrono::milliseconds timeout) const;

  // The stored payload text, byte for byte.
  std::string GetResultText(const std::string& result_id) const;
  nlohmann::json GetResult(const std::string& result_id) const;

  const ServiceConfig& config() const { return config_; }
  KvStore& store() { return *store_; }

 private:
  struct OracleEntry {
    std::shared_ptr<oracle::Oracle> oracle;
    std::unique_ptr<oracle::Gateway> gateway;
    nlohmann::json registration;
  };
  struct SessionEntry {
    std::shared_ptr<const ContextSequence> context;
    std::string oracle_id;
  };
  struct Job;

  OracleEntry& FindOracle(const std::string& oracle_id) const;
  SessionEntry FindSession(const std::string& session_id) const;
  std::shared_ptr<const retrieval::Index> CurrentIndex() const;
  JobStatus Submit(const std::string& session_id, std::string type, std::string analysis,
                   std::uint64_t total,
                   std::function<nlohmann::json(const ContextSequence&, oracle::Gateway&)> work);
  void WorkerLoop(std::stop_token stop);
  void RunJob(const std::shared_ptr<Job>& job);
  void Persist(const JobStatus& status);
  void AttachResult(const std::string& session_id, const std::string& result_id);

  ServiceConfig config_;
  std::shared_ptr<KvStore> store_;
  std::shared_ptr<oracle::EvaluationCache> cache_;
  std::shared_ptr<oracle::CallLimiter> limiter_;

  mutable std::shared_mutex index_mu_;
  std::shared_ptr<const retrieval::Index> index_;

  mutable std::mutex oracles_mu_;
  std::map<std::string, std::unique_ptr<OracleEntry>> oracles_;

  mutable std::mutex sessions_mu_;
  mutable std::map<std::string, SessionEntry> sessions_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::condition_variable_any queue_cv_;
  std::vector<std::jthread> workers_;
};

// Maps error codes onto HTTP status codes for the API layer.
int HttpStatusFor(ErrorCode code);

// HTTP+JSON front end. Routes:
//   POST /corpus, POST /sessions, GET /sessions/{id},
//   POST /sessions/{id}/insights, POST /sessions/{id}/counterfactuals,
//   GET /jobs/{id}, GET /results/{id}, GET /oracles, POST /oracles.
class ApiServer {
 public:
  explicit ApiServer(ExplanationService& service);
  ~ApiServer();

  // Binds the listening socket; port 0 picks a free port. Returns the port.
  int Bind(const std::string& host, int port);
  // Serves until Stop(). Call after Bind().
  void Run();
  void Stop();
  void WaitUntilReady();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rage::service
