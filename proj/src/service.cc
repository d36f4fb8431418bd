#include "rage/service.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace rage::service {

using nlohmann::json;

namespace {

constexpr std::string_view kSessions = "sessions";
constexpr std::string_view kJobs = "jobs";
constexpr std::string_view kResults = "results";
constexpr std::string_view kOracles = "oracles";

const char* Env(const char* name) {
  const char* v = std::getenv(name);
  return (v && *v) ? v : nullptr;
}

int EnvInt(const char* name, int fallback) {
  const char* v = Env(name);
  if (!v) return fallback;
  char* end = nullptr;
  const long parsed = std::strtol(v, &end, 10);
  if (end == v || *end != '\0') {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be an integer",
                {{"value", v}});
  }
  return static_cast<int>(parsed);
}

std::string NewId(std::string_view prefix) {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return std::string(prefix) + buf;
}

std::string UtcNow() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

JobState ParseJobState(std::string_view s) {
  for (JobState st : {JobState::kPending, JobState::kRunning, JobState::kDone, JobState::kFailed}) {
    if (ToString(st) == s) return st;
  }
  throw Error(ErrorCode::kParseError, "unknown job state: " + std::string(s));
}

bool Terminal(JobState s) { return s == JobState::kDone || s == JobState::kFailed; }

// Persisted registrations never carry credentials.
json WithoutSecrets(json registration) {
  if (registration.contains("config") && registration["config"].is_object()) {
    registration["config"].erase("api_key");
  }
  return registration;
}

}  // namespace

// Config ---------------------------------------------------------------------

ServiceConfig ServiceConfig::FromJson(const json& j) {
  ServiceConfig c;
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "service config must be an object");
  try {
    c.index_path = j.value("index_path", c.index_path);
    c.store_path = j.value("store_path", c.store_path);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.oracle_concurrency = j.value("oracle_concurrency", c.oracle_concurrency);
    c.default_top_k = j.value("default_top_k", c.default_top_k);
    if (j.contains("bm25")) {
      const json& b = j.at("bm25");
      c.bm25.k1 = b.value("k1", c.bm25.k1);
      c.bm25.b = b.value("b", c.bm25.b);
    }
    c.limits = analysis::Limits::FromJson(j.value("limits", json()), c.limits);
    c.oracle_defaults = j.value("oracle_defaults", json::object());
    c.oracles = j.value("oracles", json::array());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("invalid service config: ") + e.what());
  }
  if (c.workers < 1 || c.oracle_concurrency < 1 || c.default_top_k < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "workers, oracle_concurrency and default_top_k must be positive");
  }
  c.bm25.Validate();
  return c;
}

ServiceConfig ServiceConfig::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read service config: " + path);
  try {
    return FromJson(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

ServiceConfig ServiceConfig::WithEnvironment() const {
  ServiceConfig c = *this;
  if (const char* v = Env("RAGE_INDEX_PATH")) c.index_path = v;
  if (const char* v = Env("RAGE_STORE_PATH")) c.store_path = v;
  if (const char* v = Env("RAGE_HOST")) c.host = v;
  c.port = EnvInt("RAGE_PORT", c.port);
  c.workers = EnvInt("RAGE_WORKERS", c.workers);
  c.oracle_concurrency = EnvInt("RAGE_ORACLE_CONCURRENCY", c.oracle_concurrency);
  c.limits.default_max_perturbations =
      EnvInt("RAGE_MAX_PERTURBATIONS", c.limits.default_max_perturbations);
  c.limits.max_perturbations =
      std::max(c.limits.max_perturbations, c.limits.default_max_perturbations);
  if (const char* v = Env("RAGE_ORACLE_ENDPOINT")) c.oracle_defaults["endpoint"] = v;
  if (const char* v = Env("RAGE_ORACLE_MODEL")) c.oracle_defaults["model"] = v;
  if (const char* v = Env("RAGE_ORACLE_API_KEY")) c.oracle_defaults["api_key"] = v;
  if (Env("RAGE_ORACLE_TIMEOUT_MS")) {
    c.oracle_defaults["timeout_ms"] = EnvInt("RAGE_ORACLE_TIMEOUT_MS", 0);
  }
  return c;
}

// Job status -------------------------------------------------------------------

std::string_view ToString(JobState s) {
  switch (s) {
    case JobState::kPending: return "Pending";
    case JobState::kRunning: return "Running";
    case JobState::kDone: return "Done";
    case JobState::kFailed: return "Failed";
  }
  return "?";
}

json JobStatus::ToJson() const {
  return {{"job_id", job_id},
          {"session_id", session_id},
          {"type", type},
          {"analysis", analysis},
          {"state", ToString(state)},
          {"progress", {{"evaluated", evaluated}, {"total", total}}},
          {"result_ref", result_ref ? json(*result_ref) : json(nullptr)},
          {"error", error ? *error : json(nullptr)},
          {"remote_calls", remote_calls}};
}

JobStatus JobStatus::FromJson(const json& j) {
  JobStatus s;
  s.job_id = j.at("job_id").get<std::string>();
  s.session_id = j.at("session_id").get<std::string>();
  s.type = j.at("type").get<std::string>();
  s.analysis = j.at("analysis").get<std::string>();
  s.state = ParseJobState(j.at("state").get<std::string>());
  s.evaluated = j.at("progress").at("evaluated").get<std::uint64_t>();
  s.total = j.at("progress").at("total").get<std::uint64_t>();
  if (!j.at("result_ref").is_null()) s.result_ref = j.at("result_ref").get<std::string>();
  if (!j.at("error").is_null()) s.error = j.at("error");
  s.remote_calls = j.at("remote_calls").get<long>();
  return s;
}

struct ExplanationService::Job {
  mutable std::mutex mu;
  JobStatus status;
  std::atomic<std::uint64_t> evaluated{0};
  std::shared_ptr<const ContextSequence> context;
  std::string oracle_id;
  std::function<json(const ContextSequence&, oracle::Gateway&)> work;
  std::unique_ptr<oracle::Gateway> gateway;

  JobStatus Snapshot() const {
    std::lock_guard lock(mu);
    JobStatus s = status;
    if (s.state == JobState::kRunning) {
      s.evaluated = std::min(evaluated.load(), s.total);
      if (gateway) s.remote_calls = gateway->remote_calls();
    }
    return s;
  }
};

// Service ----------------------------------------------------------------------

ExplanationService::ExplanationService(ServiceConfig config)
    : config_(std::move(config)),
      store_(std::make_shared<KvStore>(config_.store_path)),
      cache_(std::make_shared<oracle::StoreCache>(store_)),
      limiter_(std::make_shared<oracle::CallLimiter>(config_.oracle_concurrency)) {
  if (!config_.index_path.empty() && std::filesystem::exists(config_.index_path)) {
    index_ = std::make_shared<const retrieval::Index>(retrieval::Index::Load(config_.index_path));
  }
  // Jobs left unfinished by a previous process can never complete.
  for (const auto& [id, text] : store_->List(kJobs)) {
    JobStatus s = JobStatus::FromJson(json::parse(text));
    if (!Terminal(s.state)) {
      s.state = JobState::kFailed;
      s.error = Error(ErrorCode::kInternal, "job interrupted by a service restart").ToJson();
      Persist(s);
    }
  }
  for (const auto& [id, text] : store_->List(kOracles)) RegisterOracle(json::parse(text));
  for (const auto& registration : config_.oracles) RegisterOracle(registration);

  for (int i = 0; i < config_.workers; ++i) {
    workers_.emplace_back([this](std::stop_token stop) { WorkerLoop(stop); });
  }
}

ExplanationService::~ExplanationService() {
  for (auto& w : workers_) w.request_stop();
  queue_cv_.notify_all();
  workers_.clear();
}

json ExplanationService::IngestCorpus(std::string_view jsonl) {
  std::istringstream in{std::string(jsonl)};
  return IngestRecords(retrieval::ReadCorpusJsonl(in));
}

json ExplanationService::IngestRecords(std::vector<retrieval::CorpusRecord> records) {
  auto index = std::make_shared<const retrieval::Index>(retrieval::Index::Build(records));
  if (!config_.index_path.empty()) index->Save(config_.index_path);
  std::unique_lock lock(index_mu_);
  index_ = index;
  return {{"documents", index->num_documents()}};
}

std::shared_ptr<const retrieval::Index> ExplanationService::CurrentIndex() const {
  std::shared_lock lock(index_mu_);
  return index_;
}

json ExplanationService::RegisterOracle(const json& registration) {
  if (!registration.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "oracle registration must be an object");
  }
  const std::string type = registration.value("type", std::string("mock"));
  json normalized;
  std::shared_ptr<oracle::Oracle> built;
  try {
    if (type == "mock") {
      json fixture;
      if (registration.contains("fixture")) {
        fixture = registration.at("fixture");
      } else if (registration.contains("fixture_path")) {
        std::ifstream in(registration.at("fixture_path").get<std::string>());
        if (!in) throw Error(ErrorCode::kIoError, "cannot read mock fixture");
        fixture = json::parse(in);
      } else {
        throw Error(ErrorCode::kInvalidArgument, "mock registration needs a fixture");
      }
      std::optional<std::string> id;
      if (registration.contains("id")) id = registration.at("id").get<std::string>();
      built = oracle::MockOracle::FromJson(fixture, id);
      normalized = {{"id", built->id()}, {"type", "mock"}, {"fixture", fixture}};
    } else if (type == "http") {
      json cfg = config_.oracle_defaults;
      cfg.update(registration.value("config", json::object()));
      const std::string id =
          registration.value("id", "http-" + StableHash(WithoutSecrets({{"config", cfg}}).dump()));
      built = std::make_shared<oracle::HttpOracle>(id, oracle::HttpOracleConfig::FromJson(cfg));
      normalized = {{"id", id}, {"type", "http"}, {"config", cfg}};
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown oracle type: " + type,
                  {{"type", type}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("invalid oracle registration: ") + e.what());
  }

  const std::string id = built->id();
  const json persisted = WithoutSecrets(normalized);
  std::lock_guard lock(oracles_mu_);
  if (auto it = oracles_.find(id); it != oracles_.end()) {
    if (WithoutSecrets(it->second->registration) != persisted) {
      throw Error(ErrorCode::kDuplicateId,
                  "oracle id already registered with a different definition", {{"id", id}});
    }
    return it->second->oracle->Describe();
  }
  auto entry = std::make_unique<OracleEntry>();
  entry->oracle = built;
  entry->gateway = std::make_unique<oracle::Gateway>(built, cache_, limiter_,
                                                     config_.oracle_concurrency);
  entry->registration = normalized;
  store_->Put(kOracles, id, persisted.dump());
  const json description = built->Describe();
  oracles_.emplace(id, std::move(entry));
  return description;
}

json ExplanationService::ListOracles() const {
  std::lock_guard lock(oracles_mu_);
  json list = json::array();
  for (const auto& [id, entry] : oracles_) list.push_back(entry->oracle->Describe());
  return {{"oracles", list}};
}

ExplanationService::OracleEntry& ExplanationService::FindOracle(const std::string& id) const {
  std::lock_guard lock(oracles_mu_);
  auto it = oracles_.find(id);
  if (it == oracles_.end()) {
    throw Error(ErrorCode::kUnknownOracle, "no oracle registered under " + id,
                {{"oracle_id", id}});
  }
  // Entries are never removed, so the reference stays valid.
  return *it->second;
}

json ExplanationService::CreateSession(const json& request) {
  if (!request.is_object()) throw Error(ErrorCode::kInvalidArgument, "request must be an object");
  if (!request.contains("query") || !request.at("query").is_string()) {
    throw Error(ErrorCode::kEmptyQuery, "query is required");
  }
  if (!request.contains("oracle_id") || !request.at("oracle_id").is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "oracle_id is required", {{"key", "oracle_id"}});
  }
  const std::string oracle_id = request.at("oracle_id").get<std::string>();
  int top_k = config_.default_top_k;
  if (request.contains("top_k")) {
    const json& t = request.at("top_k");
    if (!t.is_number_integer() || t.get<long long>() < 1 ||
        t.get<long long>() > config_.limits.max_top_k) {
      throw Error(ErrorCode::kInvalidArgument, "top_k must be an integer in [1, max_top_k]",
                  {{"key", "top_k"}, {"max_top_k", config_.limits.max_top_k}});
    }
    top_k = t.get<int>();
  }
  const Query query = Query::FromText(request.at("query").get<std::string>());
  OracleEntry& entry = FindOracle(oracle_id);
  const auto index = CurrentIndex();
  if (!index) throw Error(ErrorCode::kEmptyCorpus, "no corpus has been ingested");

  retrieval::Bm25Params params = config_.bm25;
  params.top_k = top_k;
  auto ctx = std::make_shared<const ContextSequence>(
      retrieval::RetrieveContext(*index, query, params));
  auto gateway = entry.gateway->Fork();
  const auto [full, empty] = analysis::EvaluateBaselines(*ctx, *gateway);

  const std::string session_id = NewId("s-");
  json session = analysis::ContextPayload(*ctx, full, empty);
  session["session_id"] = session_id;
  session["oracle_id"] = oracle_id;
  session["top_k"] = top_k;
  session["created_at"] = UtcNow();
  session["results"] = json::array();
  {
    std::lock_guard lock(sessions_mu_);
    store_->Put(kSessions, session_id, session.dump());
    sessions_[session_id] = {ctx, oracle_id};
  }
  return session;
}

json ExplanationService::GetSession(const std::string& session_id) const {
  auto text = store_->Get(kSessions, session_id);
  if (!text) {
    throw Error(ErrorCode::kNotFound, "no such session: " + session_id,
                {{"session_id", session_id}});
  }
  return json::parse(*text);
}

ExplanationService::SessionEntry ExplanationService::FindSession(
    const std::string& session_id) const {
  {
    std::lock_guard lock(sessions_mu_);
    if (auto it = sessions_.find(session_id); it != sessions_.end()) return it->second;
  }
  const json s = GetSession(session_id);
  SessionEntry entry{std::make_shared<const ContextSequence>(
                         s.at("query").get<Query>(),
                         s.at("sources").get<std::vector<SourceDocument>>()),
                     s.at("oracle_id").get<std::string>()};
  std::lock_guard lock(sessions_mu_);
  sessions_.emplace(session_id, entry);
  return entry;
}

void ExplanationService::AttachResult(const std::string& session_id,
                                      const std::string& result_id) {
  std::lock_guard lock(sessions_mu_);
  auto text = store_->Get(kSessions, session_id);
  if (!text) return;
  json session = json::parse(*text);
  auto& results = session["results"];
  if (std::find(results.begin(), results.end(), result_id) == results.end()) {
    results.push_back(result_id);
    store_->Put(kSessions, session_id, session.dump());
  }
}

JobStatus ExplanationService::SubmitInsightJob(const std::string& session_id,
                                               const json& request) {
  const SessionEntry session = FindSession(session_id);
  if (!request.is_object() || !request.contains("family") || !request.at("family").is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "family is required", {{"key", "family"}});
  }
  const analysis::Family family = analysis::ParseFamily(request.at("family").get<std::string>());
  const analysis::AnalysisConfig config =
      analysis::AnalysisConfig::FromJson(request.value("config", json()), config_.limits);
  const analysis::Limits limits = config_.limits;
  return Submit(session_id, "insight", std::string(analysis::ToString(family)),
                analysis::PlannedEvaluations(*session.context, family, config),
                [family, config, limits](const ContextSequence& ctx, oracle::Gateway& gw) {
                  return analysis::RunInsight(ctx, gw, family, config, limits);
                });
}

JobStatus ExplanationService::SubmitCounterfactualJob(const std::string& session_id,
                                                      const json& request) {
  const SessionEntry session = FindSession(session_id);
  if (!request.is_object() || !request.contains("kind") || !request.at("kind").is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "kind is required", {{"key", "kind"}});
  }
  const CounterfactualKind kind = analysis::ParseKind(request.at("kind").get<std::string>());
  const analysis::AnalysisConfig config =
      analysis::AnalysisConfig::FromJson(request.value("config", json()), config_.limits);
  const analysis::Limits limits = config_.limits;
  return Submit(session_id, "counterfactual", std::string(analysis::KindName(kind)),
                analysis::PlannedEvaluations(*session.context, kind, config),
                [kind, config, limits](const ContextSequence& ctx, oracle::Gateway& gw) {
                  return analysis::RunCounterfactual(ctx, gw, kind, config, limits);
                });
}

JobStatus ExplanationService::Submit(
    const std::string& session_id, std::string type, std::string analysis_name,
    std::uint64_t total, std::function<json(const ContextSequence&, oracle::Gateway&)> work) {
  const SessionEntry session = FindSession(session_id);
  FindOracle(session.oracle_id);
  auto job = std::make_shared<Job>();
  job->status.job_id = NewId("j-");
  job->status.session_id = session_id;
  job->status.type = std::move(type);
  job->status.analysis = std::move(analysis_name);
  job->status.total = total;
  job->context = session.context;
  job->oracle_id = session.oracle_id;
  job->work = std::move(work);
  const JobStatus snapshot = job->Snapshot();
  Persist(snapshot);
  {
    std::lock_guard lock(jobs_mu_);
    jobs_.emplace(snapshot.job_id, job);
    queue_.push_back(job);
  }
  queue_cv_.notify_one();
  return snapshot;
}

void ExplanationService::WorkerLoop(std::stop_token stop) {
  while (true) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(jobs_mu_);
      if (!queue_cv_.wait(lock, stop, [this] { return !queue_.empty(); })) return;
      job = queue_.front();
      queue_.pop_front();
    }
    RunJob(job);
  }
}

void ExplanationService::RunJob(const std::shared_ptr<Job>& job) {
  std::unique_ptr<oracle::Gateway> gateway;
  try {
    gateway = FindOracle(job->oracle_id).gateway->Fork([job] { job->evaluated.fetch_add(1); });
  } catch (const Error& e) {
    std::lock_guard lock(job->mu);
    job->status.state = JobState::kFailed;
    job->status.error = e.ToJson();
  }
  if (gateway) {
    oracle::Gateway* gw = gateway.get();
    {
      std::lock_guard lock(job->mu);
      job->status.state = JobState::kRunning;
      job->gateway = std::move(gateway);
    }
    Persist(job->Snapshot());

    std::optional<std::string> result_id;
    std::optional<json> error;
    try {
      const std::string text = job->work(*job->context, *gw).dump();
      result_id = "r-" + StableHash(text);
      store_->Put(kResults, *result_id, text);
      AttachResult(job->status.session_id, *result_id);
    } catch (const Error& e) {
      error = e.ToJson();
    } catch (const std::exception& e) {
      error = Error(ErrorCode::kInternal, e.what()).ToJson();
    }
    std::lock_guard lock(job->mu);
    job->status.evaluated = std::min(job->evaluated.load(), job->status.total);
    job->status.remote_calls = gw->remote_calls();
    job->status.result_ref = result_id;
    job->status.error = error;
    job->status.state = error ? JobState::kFailed : JobState::kDone;
  }
  Persist(job->Snapshot());
}

void ExplanationService::Persist(const JobStatus& status) {
  store_->Put(kJobs, status.job_id, status.ToJson().dump());
}

JobStatus ExplanationService::GetJob(const std::string& job_id) const {
  {
    std::lock_guard lock(jobs_mu_);
    if (auto it = jobs_.find(job_id); it != jobs_.end()) return it->second->Snapshot();
  }
  if (auto text = store_->Get(kJobs, job_id)) return JobStatus::FromJson(json::parse(*text));
  throw Error(ErrorCode::kNotFound, "no such job: " + job_id, {{"job_id", job_id}});
}

JobStatus ExplanationService::WaitForJob(const std::string& job_id,
                                         std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    JobStatus s = GetJob(job_id);
    if (Terminal(s.state) || std::chrono::steady_clock::now() >= deadline) return s;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

std::string ExplanationService::GetResultText(const std::string& result_id) const {
  auto text = store_->Get(kResults, result_id);
  if (!text) {
    throw Error(ErrorCode::kNotFound, "no such result: " + result_id,
                {{"result_id", result_id}});
  }
  return *text;
}

json ExplanationService::GetResult(const std::string& result_id) const {
  return json::parse(GetResultText(result_id));
}

}  // namespace rage::service
