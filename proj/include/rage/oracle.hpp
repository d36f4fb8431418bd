#pragma once

// Prompt construction, answer oracles (mock and HTTP), evaluation caching.

#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rage/core.hpp"
#include "rage/store.hpp"

namespace rage::oracle {

struct PromptText {
  std::string text;
};

struct OracleCapabilities {
  bool supports_attention = false;
  int max_context_chars = 100000;
};

struct EvaluationKey {
  std::string query_id;
  std::vector<std::string> ordered_doc_ids;
  std::string oracle_id;

  // Unambiguous text form used as the cache key.
  std::string Canonical() const;
};

inline constexpr std::string_view kPromptInstruction =
    "Answer the question using only the information in the sources below. "
    "Reply with the answer alone, without explanation.";

// Throws kContextTooLarge when the prompt exceeds max_context_chars.
PromptText BuildPrompt(const Query& query, std::span<const SourceDocument> selected,
                       int max_context_chars);

// Maps (query, ordered sources) to an answer. Implementations must be safe for
// concurrent calls.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual const std::string& id() const = 0;
  virtual OracleCapabilities capabilities() const = 0;

  // One answer-generation call. Throws kOracleUnavailable or
  // kOracleMalformedResponse.
  virtual std::string Answer(const PromptText& prompt,
                             std::span<const SourceDocument> selected) = 0;

  // Raw per-source salience mass, aligned with `selected`. Only invoked when
  // capabilities().supports_attention is set.
  virtual std::vector<double> Salience(const PromptText& prompt,
                                       std::span<const SourceDocument> selected);

  // Short description for listings, e.g. {"type": "mock", ...}.
  virtual nlohmann::json Describe() const = 0;
};

// Deterministic rule-table oracle. Rules are checked top-down over the ordered
// doc id list and the first match wins.
class MockOracle final : public Oracle {
 public:
  struct Rule {
    std::vector<std::string> requires_ids;
    std::vector<std::string> forbids_ids;
    std::map<int, std::string> position_equals;
    std::string answer;

    bool Matches(std::span<const std::string> ordered_ids) const;
  };

  MockOracle(std::string id, std::string default_answer, std::vector<Rule> rules,
             std::map<std::string, double> salience = {});

  // Fixture schema: {default_answer, rules: [{requires, forbids,
  // position_equals, answer}], salience?: {doc_id: mass}}. The id defaults to
  // "mock-" plus a hash of the fixture text.
  static std::shared_ptr<MockOracle> FromJson(const nlohmann::json& fixture,
                                              std::optional<std::string> id = {});
  static std::shared_ptr<MockOracle> FromFile(const std::string& path,
                                              std::optional<std::string> id = {});

  const std::string& id() const override { return id_; }
  OracleCapabilities capabilities() const override;
  std::string Answer(const PromptText& prompt,
                     std::span<const SourceDocument> selected) override;
  std::vector<double> Salience(const PromptText& prompt,
                               std::span<const SourceDocument> selected) override;
  nlohmann::json Describe() const override;

  std::string AnswerFor(std::span<const std::string> ordered_ids) const;
  long calls() const { return calls_.load(); }

 private:
  std::string id_;
  std::string default_answer_;
  std::vector<Rule> rules_;
  std::map<std::string, double> salience_;
  std::atomic<long> calls_{0};
};

struct HttpOracleConfig {
  // Base URL such as "http://localhost:8000"; https requires OpenSSL.
  std::string endpoint;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  bool supports_attention = false;
  int max_context_chars = 100000;

  static HttpOracleConfig FromJson(const nlohmann::json& j);
  // RAGE_ORACLE_ENDPOINT, RAGE_ORACLE_MODEL, RAGE_ORACLE_API_KEY,
  // RAGE_ORACLE_TIMEOUT_MS override the given values when set.
  HttpOracleConfig WithEnvironment() const;
};

// Chat-completion client: system + user message, temperature 0, one choice.
// A response may carry "source_salience": [...] aligned with the sources.
class HttpOracle final : public Oracle {
 public:
  HttpOracle(std::string id, HttpOracleConfig config);

  const std::string& id() const override { return id_; }
  OracleCapabilities capabilities() const override;
  std::string Answer(const PromptText& prompt,
                     std::span<const SourceDocument> selected) override;
  std::vector<double> Salience(const PromptText& prompt,
                               std::span<const SourceDocument> selected) override;
  nlohmann::json Describe() const override;

  nlohmann::json RequestBody(const PromptText& prompt) const;

 private:
  nlohmann::json Post(const PromptText& prompt);

  std::string id_;
  HttpOracleConfig config_;
};

class EvaluationCache {
 public:
  virtual ~EvaluationCache() = default;
  virtual std::optional<std::string> Get(const EvaluationKey& key) = 0;
  virtual void Put(const EvaluationKey& key, const std::string& raw_answer) = 0;
};

class MemoryCache final : public EvaluationCache {
 public:
  std::optional<std::string> Get(const EvaluationKey& key) override;
  void Put(const EvaluationKey& key, const std::string& raw_answer) override;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

// Persistent cache in the "oracle_cache" namespace of a KvStore.
class StoreCache final : public EvaluationCache {
 public:
  explicit StoreCache(std::shared_ptr<KvStore> store) : store_(std::move(store)) {}
  std::optional<std::string> Get(const EvaluationKey& key) override;
  void Put(const EvaluationKey& key, const std::string& raw_answer) override;

 private:
  std::shared_ptr<KvStore> store_;
};

// Called after every completed evaluation (cache hit or miss).
using EvaluationObserver = std::function<void()>;

using CallLimiter = std::counting_semaphore<>;

// Cached, coalescing front end to one oracle. Safe for concurrent callers; at
// most `limiter` remote calls are in flight at once and concurrent requests
// for the same key share one remote call.
class Gateway {
 public:
  Gateway(std::shared_ptr<Oracle> oracle, std::shared_ptr<EvaluationCache> cache,
          int max_concurrency = 4);
  Gateway(std::shared_ptr<Oracle> oracle, std::shared_ptr<EvaluationCache> cache,
          std::shared_ptr<CallLimiter> limiter, int max_concurrency);

  // A view sharing oracle, cache, limiter and in-flight table, with its own
  // remote-call counter and observer.
  std::unique_ptr<Gateway> Fork(EvaluationObserver observer = {}) const;

  AnswerRecord Evaluate(const ContextSequence& ctx, const Perturbation& perturbation);
  AnswerRecord Evaluate(const Query& query, std::span<const SourceDocument> selected,
                        Perturbation perturbation);

  // Evaluates every perturbation with bounded parallelism; results are in
  // input order.
  std::vector<AnswerRecord> EvaluateBatch(const ContextSequence& ctx,
                                          std::span<const Perturbation> perturbations);

  // Normalized attention salience over `selected`. Throws
  // kUnsupportedCapability when the oracle does not report attention.
  RelevanceVector AttentionSalience(const Query& query,
                                    std::span<const SourceDocument> selected);

  Oracle& oracle() const { return *shared_->oracle; }
  // Remote calls issued through this view.
  long remote_calls() const { return remote_calls_.load(); }
  void set_observer(EvaluationObserver observer) { observer_ = std::move(observer); }

 private:
  struct Shared {
    std::shared_ptr<Oracle> oracle;
    std::shared_ptr<EvaluationCache> cache;
    std::shared_ptr<CallLimiter> limiter;
    int max_concurrency = 1;
    std::mutex inflight_mu;
    std::map<std::string, std::shared_future<std::string>> inflight;
  };

  explicit Gateway(std::shared_ptr<Shared> shared) : shared_(std::move(shared)) {}
  std::string RawAnswer(const Query& query, std::span<const SourceDocument> selected);

  std::shared_ptr<Shared> shared_;
  std::atomic<long> remote_calls_{0};
  EvaluationObserver observer_;
};

}  // namespace rage::oracle
