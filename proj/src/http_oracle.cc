#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "rage/oracle.hpp"

namespace rage::oracle {

using nlohmann::json;

namespace {

constexpr std::string_view kSystemMessage =
    "You answer questions strictly from the numbered sources supplied by the user.";

const char* Env(const char* name) {
  const char* v = std::getenv(name);
  return (v && *v) ? v : nullptr;
}

}  // namespace

HttpOracleConfig HttpOracleConfig::FromJson(const json& j) {
  HttpOracleConfig c;
  c.endpoint = j.value("endpoint", std::string());
  c.path = j.value("path", c.path);
  c.model = j.value("model", std::string());
  c.api_key = j.value("api_key", std::string());
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.initial_backoff = std::chrono::milliseconds(j.value("backoff_ms", c.initial_backoff.count()));
  c.supports_attention = j.value("supports_attention", false);
  c.max_context_chars = j.value("max_context_chars", c.max_context_chars);
  return c;
}

HttpOracleConfig HttpOracleConfig::WithEnvironment() const {
  HttpOracleConfig c = *this;
  if (const char* v = Env("RAGE_ORACLE_ENDPOINT")) c.endpoint = v;
  if (const char* v = Env("RAGE_ORACLE_MODEL")) c.model = v;
  if (const char* v = Env("RAGE_ORACLE_API_KEY")) c.api_key = v;
  if (const char* v = Env("RAGE_ORACLE_TIMEOUT_MS")) {
    c.timeout = std::chrono::milliseconds(std::atol(v));
  }
  return c;
}

HttpOracle::HttpOracle(std::string id, HttpOracleConfig config)
    : id_(std::move(id)), config_(std::move(config)) {
  if (config_.endpoint.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "oracle endpoint is not configured");
  }
  if (config_.max_attempts < 1) config_.max_attempts = 1;
}

OracleCapabilities HttpOracle::capabilities() const {
  return {config_.supports_attention, config_.max_context_chars};
}

json HttpOracle::Describe() const {
  return {{"id", id_},
          {"type", "http"},
          {"endpoint", config_.endpoint},
          {"model", config_.model},
          {"supports_attention", config_.supports_attention}};
}

json HttpOracle::RequestBody(const PromptText& prompt) const {
  return {{"model", config_.model},
          {"temperature", 0},
          {"n", 1},
          {"messages",
           json::array({{{"role", "system"}, {"content", kSystemMessage}},
                        {{"role", "user"}, {"content", prompt.text}}})}};
}

json HttpOracle::Post(const PromptText& prompt) {
  const std::string body = RequestBody(prompt).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(config_.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(config_.path, headers, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kOracleMalformedResponse,
                    std::string("oracle returned invalid JSON: ") + e.what());
      }
    }
    bool retryable = true;
    if (res) {
      last_error = "HTTP " + std::to_string(res->status);
      retryable = res->status == 429 || res->status >= 500;
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (!retryable) break;
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::kOracleUnavailable, "oracle request failed: " + last_error,
              {{"endpoint", config_.endpoint}, {"oracle_id", id_}});
}

std::string HttpOracle::Answer(const PromptText& prompt, std::span<const SourceDocument>) {
  const json response = Post(prompt);
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kOracleMalformedResponse,
                std::string("unexpected completion payload: ") + e.what());
  }
}

std::vector<double> HttpOracle::Salience(const PromptText& prompt,
                                         std::span<const SourceDocument> selected) {
  if (!config_.supports_attention) return Oracle::Salience(prompt, selected);
  const json response = Post(prompt);
  if (!response.contains("source_salience")) {
    throw Error(ErrorCode::kOracleMalformedResponse,
                "oracle advertises attention but returned no source_salience");
  }
  try {
    return response.at("source_salience").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kOracleMalformedResponse,
                std::string("bad source_salience: ") + e.what());
  }
}

}  // namespace rage::oracle
