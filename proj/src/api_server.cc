#include "httplib.h"
#include "rage/service.hpp"

namespace rage::service {

using nlohmann::json;

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kUnknownOracle:
    case ErrorCode::kNoResults:
    case ErrorCode::kUnsupportedCapability:
    case ErrorCode::kKTooLarge:
    case ErrorCode::kBudgetExhausted:
    case ErrorCode::kContextTooLarge:
    case ErrorCode::kAllZeroScores:
      return 422;
    case ErrorCode::kDuplicateId: return 409;
    case ErrorCode::kEmptyCorpus: return 409;
    case ErrorCode::kOracleUnavailable:
    case ErrorCode::kOracleMalformedResponse:
      return 502;
    case ErrorCode::kIoError:
    case ErrorCode::kInternal:
      return 500;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kEmptyQuery:
    case ErrorCode::kLengthMismatch:
    case ErrorCode::kUndefined:
    case ErrorCode::kNonSquareMatrix:
    case ErrorCode::kNonFiniteEntry:
    case ErrorCode::kParseError:
      return 400;
  }
  return 500;
}

namespace {

constexpr const char* kJson = "application/json";

void Send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void SendError(httplib::Response& res, const Error& e) {
  Send(res, HttpStatusFor(e.code()), e.ToJson());
}

json ParseBody(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("request body is not valid JSON: ") + e.what());
  }
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler Guard(Handler inner) {
  return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
    try {
      inner(req, res);
    } catch (const Error& e) {
      SendError(res, e);
    } catch (const json::exception& e) {
      SendError(res, Error(ErrorCode::kParseError, e.what()));
    } catch (const std::exception& e) {
      SendError(res, Error(ErrorCode::kInternal, e.what()));
    }
  };
}

}  // namespace

struct ApiServer::Impl {
  explicit Impl(ExplanationService& s) : service(s) {}

  void Routes() {
    server.Post("/corpus", Guard([this](const auto& req, auto& res) {
      // Either raw JSONL or {"documents": [{"id", "contents"}, ...]}.
      json body;
      bool structured = false;
      try {
        body = json::parse(req.body);
        structured = body.is_object() && body.contains("documents");
      } catch (const json::parse_error&) {
      }
      if (structured) {
        std::vector<retrieval::CorpusRecord> records;
        for (const auto& d : body.at("documents")) {
          records.push_back({d.at("id").get<std::string>(), d.at("contents").get<std::string>()});
        }
        Send(res, 200, service.IngestRecords(std::move(records)));
      } else {
        Send(res, 200, service.IngestCorpus(req.body));
      }
    }));
    server.Get("/oracles", Guard([this](const auto&, auto& res) {
      Send(res, 200, service.ListOracles());
    }));
    server.Post("/oracles", Guard([this](const auto& req, auto& res) {
      Send(res, 201, service.RegisterOracle(ParseBody(req)));
    }));
    server.Post("/sessions", Guard([this](const auto& req, auto& res) {
      Send(res, 201, service.CreateSession(ParseBody(req)));
    }));
    server.Get(R"(/sessions/([^/]+))", Guard([this](const auto& req, auto& res) {
      Send(res, 200, service.GetSession(req.matches[1]));
    }));
    server.Post(R"(/sessions/([^/]+)/insights)", Guard([this](const auto& req, auto& res) {
      Send(res, 202, service.SubmitInsightJob(req.matches[1], ParseBody(req)).ToJson());
    }));
    server.Post(R"(/sessions/([^/]+)/counterfactuals)", Guard([this](const auto& req, auto& res) {
      Send(res, 202, service.SubmitCounterfactualJob(req.matches[1], ParseBody(req)).ToJson());
    }));
    server.Get(R"(/jobs/([^/]+))", Guard([this](const auto& req, auto& res) {
      Send(res, 200, service.GetJob(req.matches[1]).ToJson());
    }));
    server.Get(R"(/results/([^/]+))", Guard([this](const auto& req, auto& res) {
      res.status = 200;
      res.set_content(service.GetResultText(req.matches[1]), kJson);
    }));
    server.Get("/health", [](const auto&, auto& res) { Send(res, 200, {{"status", "ok"}}); });
    server.set_error_handler([](const auto& req, auto& res) {
      if (!res.body.empty()) return;
      const Error e(ErrorCode::kNotFound, "no route for " + req.method + " " + req.path,
                    {{"path", req.path}});
      res.set_content(e.ToJson().dump(), kJson);
    });
  }

  ExplanationService& service;
  httplib::Server server;
};

ApiServer::ApiServer(ExplanationService& service) : impl_(std::make_unique<Impl>(service)) {
  impl_->Routes();
}

ApiServer::~ApiServer() { Stop(); }

int ApiServer::Bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIoError, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ApiServer::Run() { impl_->server.listen_after_bind(); }

void ApiServer::Stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void ApiServer::WaitUntilReady() { impl_->server.wait_until_ready(); }

}  // namespace rage::service
