#include "rage/oracle.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace rage::oracle {

using nlohmann::json;

std::string EvaluationKey::Canonical() const {
  return json::array({query_id, oracle_id, ordered_doc_ids}).dump();
}

PromptText BuildPrompt(const Query& query, std::span<const SourceDocument> selected,
                       int max_context_chars) {
  std::string text;
  text.append(kPromptInstruction);
  text.append("\n\n");
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    text.append("[BEGIN SOURCE ").append(n).append("]\n");
    text.append(selected[i].text);
    text.append("\n[END SOURCE ").append(n).append("]\n\n");
  }
  text.append("Question: ").append(query.text).append("\nAnswer:");
  if (static_cast<long>(text.size()) > max_context_chars) {
    throw Error(ErrorCode::kContextTooLarge, "prompt exceeds the oracle context limit",
                {{"prompt_chars", text.size()}, {"max_context_chars", max_context_chars}});
  }
  return {std::move(text)};
}

std::vector<double> Oracle::Salience(const PromptText&, std::span<const SourceDocument>) {
  throw Error(ErrorCode::kUnsupportedCapability,
              "oracle " + id() + " does not report attention salience");
}

// MockOracle ----------------------------------------------------------------

bool MockOracle::Rule::Matches(std::span<const std::string> ordered_ids) const {
  auto present = [&](const std::string& id) {
    return std::find(ordered_ids.begin(), ordered_ids.end(), id) != ordered_ids.end();
  };
  for (const auto& id : requires_ids) {
    if (!present(id)) return false;
  }
  for (const auto& id : forbids_ids) {
    if (present(id)) return false;
  }
  for (const auto& [pos, id] : position_equals) {
    if (pos < 0 || pos >= static_cast<int>(ordered_ids.size()) || ordered_ids[pos] != id) {
      return false;
    }
  }
  return true;
}

MockOracle::MockOracle(std::string id, std::string default_answer, std::vector<Rule> rules,
                       std::map<std::string, double> salience)
    : id_(std::move(id)),
      default_answer_(std::move(default_answer)),
      rules_(std::move(rules)),
      salience_(std::move(salience)) {}

std::shared_ptr<MockOracle> MockOracle::FromJson(const json& fixture,
                                                 std::optional<std::string> id) {
  try {
    std::vector<Rule> rules;
    for (const auto& r : fixture.value("rules", json::array())) {
      Rule rule;
      rule.requires_ids = r.value("requires", std::vector<std::string>{});
      rule.forbids_ids = r.value("forbids", std::vector<std::string>{});
      const json positions = r.value("position_equals", json::object());
      for (const auto& [pos, doc] : positions.items()) {
        rule.position_equals[std::stoi(pos)] = doc.get<std::string>();
      }
      rule.answer = r.at("answer").get<std::string>();
      rules.push_back(std::move(rule));
    }
    std::map<std::string, double> salience;
    if (fixture.contains("salience")) fixture.at("salience").get_to(salience);
    std::string oracle_id = id ? *id : fixture.value("id", "mock-" + StableHash(fixture.dump()));
    return std::make_shared<MockOracle>(std::move(oracle_id),
                                        fixture.at("default_answer").get<std::string>(),
                                        std::move(rules), std::move(salience));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("invalid mock oracle fixture: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kParseError, "position_equals keys must be integers");
  }
}

std::shared_ptr<MockOracle> MockOracle::FromFile(const std::string& path,
                                                 std::optional<std::string> id) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read mock fixture: " + path);
  json fixture;
  try {
    fixture = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  return FromJson(fixture, std::move(id));
}

OracleCapabilities MockOracle::capabilities() const {
  OracleCapabilities caps;
  caps.supports_attention = !salience_.empty();
  return caps;
}

std::string MockOracle::AnswerFor(std::span<const std::string> ordered_ids) const {
  for (const auto& rule : rules_) {
    if (rule.Matches(ordered_ids)) return rule.answer;
  }
  return default_answer_;
}

std::string MockOracle::Answer(const PromptText&, std::span<const SourceDocument> selected) {
  calls_.fetch_add(1);
  std::vector<std::string> ids;
  ids.reserve(selected.size());
  for (const auto& d : selected) ids.push_back(d.doc_id);
  return AnswerFor(ids);
}

std::vector<double> MockOracle::Salience(const PromptText& prompt,
                                         std::span<const SourceDocument> selected) {
  if (salience_.empty()) return Oracle::Salience(prompt, selected);
  std::vector<double> out;
  out.reserve(selected.size());
  for (const auto& d : selected) {
    auto it = salience_.find(d.doc_id);
    out.push_back(it == salience_.end() ? 0.0 : it->second);
  }
  return out;
}

json MockOracle::Describe() const {
  return {{"id", id_},
          {"type", "mock"},
          {"rules", rules_.size()},
          {"supports_attention", capabilities().supports_attention}};
}

// Caches ----------------------------------------------------------------------

std::optional<std::string> MemoryCache::Get(const EvaluationKey& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key.Canonical());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void MemoryCache::Put(const EvaluationKey& key, const std::string& raw_answer) {
  std::lock_guard lock(mu_);
  entries_.emplace(key.Canonical(), raw_answer);
}

std::size_t MemoryCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

namespace {
constexpr std::string_view kCacheNamespace = "oracle_cache";
}  // namespace

std::optional<std::string> StoreCache::Get(const EvaluationKey& key) {
  return store_->Get(kCacheNamespace, key.Canonical());
}

void StoreCache::Put(const EvaluationKey& key, const std::string& raw_answer) {
  store_->PutIfAbsent(kCacheNamespace, key.Canonical(), raw_answer);
}

// Gateway ---------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Oracle> oracle, std::shared_ptr<EvaluationCache> cache,
                 int max_concurrency)
    : Gateway(std::move(oracle), std::move(cache),
              std::make_shared<CallLimiter>(std::max(1, max_concurrency)), max_concurrency) {}

Gateway::Gateway(std::shared_ptr<Oracle> oracle, std::shared_ptr<EvaluationCache> cache,
                 std::shared_ptr<CallLimiter> limiter, int max_concurrency)
    : shared_(std::make_shared<Shared>()) {
  if (!oracle) throw Error(ErrorCode::kInvalidArgument, "gateway requires an oracle");
  shared_->oracle = std::move(oracle);
  shared_->cache = cache ? std::move(cache) : std::make_shared<MemoryCache>();
  shared_->max_concurrency = std::max(1, max_concurrency);
  shared_->limiter =
      limiter ? std::move(limiter) : std::make_shared<CallLimiter>(shared_->max_concurrency);
}

std::unique_ptr<Gateway> Gateway::Fork(EvaluationObserver observer) const {
  std::unique_ptr<Gateway> view(new Gateway(shared_));
  view->observer_ = std::move(observer);
  return view;
}

std::string Gateway::RawAnswer(const Query& query, std::span<const SourceDocument> selected) {
  Shared& sh = *shared_;
  EvaluationKey key{query.id, {}, sh.oracle->id()};
  for (const auto& d : selected) key.ordered_doc_ids.push_back(d.doc_id);
  if (auto hit = sh.cache->Get(key)) return *hit;

  const PromptText prompt =
      BuildPrompt(query, selected, sh.oracle->capabilities().max_context_chars);
  const std::string canonical = key.Canonical();

  std::promise<std::string> promise;
  std::shared_future<std::string> future;
  bool leader = false;
  {
    std::lock_guard lock(sh.inflight_mu);
    auto it = sh.inflight.find(canonical);
    if (it != sh.inflight.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      sh.inflight.emplace(canonical, future);
      leader = true;
    }
  }
  if (!leader) return future.get();

  try {
    // A concurrent leader may have finished between our cache check and
    // registering as in-flight.
    std::optional<std::string> raw = sh.cache->Get(key);
    if (!raw) {
      sh.limiter->acquire();
      try {
        remote_calls_.fetch_add(1);
        raw = sh.oracle->Answer(prompt, selected);
      } catch (...) {
        sh.limiter->release();
        throw;
      }
      sh.limiter->release();
      sh.cache->Put(key, *raw);
    }
    promise.set_value(*raw);
  } catch (...) {
    promise.set_exception(std::current_exception());
  }
  {
    std::lock_guard lock(sh.inflight_mu);
    sh.inflight.erase(canonical);
  }
  return future.get();
}

AnswerRecord Gateway::Evaluate(const Query& query, std::span<const SourceDocument> selected,
                               Perturbation perturbation) {
  std::string raw = RawAnswer(query, selected);
  AnswerRecord record;
  record.normalized = NormalizeAnswer(raw);
  record.raw = std::move(raw);
  record.perturbation = std::move(perturbation);
  record.oracle_calls_used = 1;
  if (observer_) observer_();
  return record;
}

AnswerRecord Gateway::Evaluate(const ContextSequence& ctx, const Perturbation& perturbation) {
  const auto selected = SelectSources(ctx, perturbation);
  return Evaluate(ctx.query(), selected, perturbation);
}

std::vector<AnswerRecord> Gateway::EvaluateBatch(const ContextSequence& ctx,
                                                 std::span<const Perturbation> perturbations) {
  std::vector<AnswerRecord> out(perturbations.size());
  const int workers =
      static_cast<int>(std::min<std::size_t>(shared_->max_concurrency, perturbations.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < perturbations.size(); ++i) {
      out[i] = Evaluate(ctx, perturbations[i]);
    }
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < perturbations.size();
             i = next.fetch_add(1)) {
          {
            std::lock_guard lock(error_mu);
            if (error) return;
          }
          try {
            out[i] = Evaluate(ctx, perturbations[i]);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            return;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

RelevanceVector Gateway::AttentionSalience(const Query& query,
                                           std::span<const SourceDocument> selected) {
  Oracle& oracle = *shared_->oracle;
  if (!oracle.capabilities().supports_attention) {
    throw Error(ErrorCode::kUnsupportedCapability,
                "oracle " + oracle.id() + " does not report attention salience",
                {{"oracle_id", oracle.id()}});
  }
  const PromptText prompt =
      BuildPrompt(query, selected, oracle.capabilities().max_context_chars);
  remote_calls_.fetch_add(1);
  const auto mass = oracle.Salience(prompt, selected);
  if (mass.size() != selected.size()) {
    throw Error(ErrorCode::kOracleMalformedResponse, "salience length does not match sources",
                {{"expected", selected.size()}, {"actual", mass.size()}});
  }
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw Error(ErrorCode::kOracleMalformedResponse, "salience must be non-negative");
    }
    total += m;
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kOracleMalformedResponse, "salience mass is zero");
  }
  RelevanceVector rv;
  rv.method = ScoringMethod::kAttentionSalience;
  rv.normalized = true;
  // Already-normalized mass passes through untouched.
  const double scale = std::abs(total - 1.0) <= 1e-12 ? 1.0 : total;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    rv.scores[selected[i].doc_id] = mass[i] / scale;
  }
  return rv;
}

}  // namespace rage::oracle
