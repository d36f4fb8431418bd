#include "rage/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rage/analysis.hpp"
#include "rage/oracle.hpp"
#include "rage/retrieval.hpp"
#include "rage/store.hpp"

namespace rage::cli {

using nlohmann::json;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kOracleUnavailable:
    case ErrorCode::kOracleMalformedResponse:
    case ErrorCode::kUnsupportedCapability:
    case ErrorCode::kUnknownOracle:
      return kExitOracle;
    case ErrorCode::kKTooLarge:
    case ErrorCode::kBudgetExhausted:
    case ErrorCode::kContextTooLarge:
      return kExitLimits;
    default:
      return kExitData;
  }
}

namespace {

enum class Format { kJson, kTable };

struct Options {
  std::string question;
  std::string corpus;
  std::string index;
  std::string mock;
  std::string endpoint;
  std::string model;
  std::string store;
  std::string format;
  int top_k = 5;
  std::string family;
  std::string kind;
  bool exhaustive = false;
  std::optional<std::uint64_t> sample_size;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_perturbations;
  std::string scoring;
  std::optional<std::string> target_answer;
  std::optional<std::uint64_t> s;
  std::string profile;
};

struct UsageError {
  std::string message;
};

// Text tables ------------------------------------------------------------------

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void PrintTable(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) s += "  ";
      s += cells[c];
      if (c + 1 < cells.size()) s.append(width[c] - cells[c].size(), ' ');
    }
    out << s << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& r : rows) line(r);
}

std::string Join(const json& arr, const std::string& sep = ", ") {
  std::string s;
  for (const auto& v : arr) {
    if (!s.empty()) s += sep;
    s += v.is_string() ? v.get<std::string>() : v.dump();
  }
  return s;
}

// Permutation indices rendered as doc ids; combinations already are ids.
std::string Perturbation(const json& p, const json& context) {
  if (!p.empty() && p.front().is_number_integer()) {
    json ids = json::array();
    for (const auto& i : p) ids.push_back(context.at(i.get<std::size_t>()));
    return "[" + Join(ids) + "]";
  }
  return "{" + Join(p) + "}";
}

void PrintContext(std::ostream& out, const json& payload) {
  out << "query: " << payload.at("query").at("text").get<std::string>() << "\n\n";
  std::vector<std::vector<std::string>> rows;
  double total = 0.0;
  for (const auto& s : payload.at("sources")) total += s.at("retrieval_score").get<double>();
  int rank = 0;
  for (const auto& s : payload.at("sources")) {
    const double score = s.at("retrieval_score").get<double>();
    std::string text = s.at("text").get<std::string>();
    if (text.size() > 60) text = text.substr(0, 57) + "...";
    rows.push_back({std::to_string(rank++), s.at("doc_id").get<std::string>(), Fixed(score, 4),
                    Fixed(total > 0 ? score / total : 0.0, 4), text});
  }
  PrintTable(out, {"pos", "doc_id", "score", "relevance", "text"}, rows);
  const json& b = payload.at("baselines");
  out << "\nfull context answer:  " << b.at("full").at("normalized").get<std::string>() << '\n';
  out << "empty context answer: " << b.at("empty").at("normalized").get<std::string>() << '\n';
}

void PrintInsight(std::ostream& out, const json& payload) {
  const json& insight = payload.at("insight");
  out << "family: " << payload.at("family").get<std::string>()
      << "  evaluated: " << insight.at("total_evaluated") << "\n\n";
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& [answer, members] : insight.at("groups").items()) {
    groups.emplace_back(answer, members.size());
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::vector<std::string>> rows;
  for (const auto& [answer, count] : groups) {
    rows.push_back({answer, std::to_string(count),
                    Fixed(100.0 * insight.at("proportions").at(answer).get<double>(), 1) + "%"});
  }
  PrintTable(out, {"answer", "count", "proportion"}, rows);
  out << "\nrules:\n";
  if (insight.at("rules").empty()) {
    out << "  no rules were found\n";
    return;
  }
  for (const auto& r : insight.at("rules")) {
    out << "  " << r.at("answer").get<std::string>() << " <- ";
    if (r.at("kind") == "RequiredSources") {
      out << "requires {" << Join(r.at("required_ids")) << "}";
    } else {
      std::string fixed;
      for (const auto& [pos, id] : r.at("fixed_positions").items()) {
        if (!fixed.empty()) fixed += ", ";
        fixed += pos + ": " + id.get<std::string>();
      }
      out << "positions {" << fixed << "}";
    }
    out << '\n';
  }
}

void PrintOptimal(std::ostream& out, const json& payload) {
  out << "family: OptimalPermutation  scoring: "
      << payload.at("config").at("scoring").get<std::string>() << "\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : payload.at("permutations")) {
    rows.push_back({std::to_string(p.at("rank").get<int>()), Fixed(p.at("score").get<double>(), 6),
                    "[" + Join(p.at("doc_ids")) + "]",
                    p.at("answer").at("normalized").get<std::string>()});
  }
  PrintTable(out, {"rank", "score", "order", "answer"}, rows);
}

void PrintCounterfactual(std::ostream& out, const json& payload) {
  const json& o = payload.at("outcome");
  out << "kind: " << payload.at("kind").get<std::string>()
      << "  status: " << o.at("status").get<std::string>()
      << "  tested: " << o.at("perturbations_tested") << '\n';
  out << "baseline answer: " << o.at("baseline").at("normalized").get<std::string>() << '\n';
  if (o.at("counterfactual").is_null()) {
    out << (o.at("status") == "BudgetExhausted" ? "search budget exhausted\n"
                                                 : "no counterfactual exists\n");
    return;
  }
  const json& c = o.at("counterfactual");
  const std::string kind = payload.at("kind");
  const char* label = kind == "top_down" ? "removed:  " : kind == "bottom_up" ? "retained: " : "order:    ";
  out << label << Perturbation(c.at("perturbation"), payload.at("context")) << '\n';
  out << "answer:   " << c.at("original_answer").at("normalized").get<std::string>() << " -> "
      << c.at("new_answer").at("normalized").get<std::string>() << '\n';
  if (!c.at("similarity").is_null()) {
    out << "kendall tau: " << Fixed(c.at("similarity").get<double>(), 4) << '\n';
  }
}

// Pipeline -------------------------------------------------------------------------

retrieval::Index LoadIndex(const Options& o) {
  if (!o.index.empty() && std::filesystem::exists(o.index)) return retrieval::Index::Load(o.index);
  if (!o.corpus.empty()) {
    std::ifstream in(o.corpus);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read corpus: " + o.corpus);
    return retrieval::Index::Build(retrieval::ReadCorpusJsonl(in));
  }
  if (!o.index.empty()) throw Error(ErrorCode::kIoError, "index file not found: " + o.index);
  throw UsageError{"one of --index or --corpus is required"};
}

std::unique_ptr<oracle::Gateway> MakeGateway(const Options& o) {
  std::shared_ptr<oracle::Oracle> orc;
  if (!o.mock.empty()) {
    orc = oracle::MockOracle::FromFile(o.mock);
  } else if (!o.endpoint.empty()) {
    oracle::HttpOracleConfig cfg = oracle::HttpOracleConfig{}.WithEnvironment();
    cfg.endpoint = o.endpoint;
    if (!o.model.empty()) cfg.model = o.model;
    orc = std::make_shared<oracle::HttpOracle>("http", cfg);
  } else {
    throw UsageError{"one of --mock or --endpoint is required"};
  }
  std::shared_ptr<oracle::EvaluationCache> cache;
  if (o.store.empty()) {
    cache = std::make_shared<oracle::MemoryCache>();
  } else {
    cache = std::make_shared<oracle::StoreCache>(std::make_shared<KvStore>(o.store));
  }
  return std::make_unique<oracle::Gateway>(orc, cache);
}

analysis::AnalysisConfig MakeConfig(const Options& o) {
  json cfg = json::object();
  if (o.exhaustive) cfg["exhaustive"] = true;
  if (o.sample_size) cfg["sample_size"] = *o.sample_size;
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.max_perturbations) cfg["max_perturbations"] = *o.max_perturbations;
  if (!o.scoring.empty()) cfg["scoring"] = o.scoring;
  if (o.target_answer) cfg["target_answer"] = *o.target_answer;
  if (o.s) cfg["s"] = *o.s;
  if (!o.profile.empty()) {
    if (o.profile.find(',') == std::string::npos &&
        o.profile.find_first_of("0123456789") == std::string::npos) {
      cfg["profile"] = o.profile;
    } else {
      json weights = json::array();
      std::stringstream ss(o.profile);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          std::size_t used = 0;
          weights.push_back(std::stod(item, &used));
          if (item.find_first_not_of(" ", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw UsageError{"--profile must be v_shaped or comma-separated weights"};
        }
      }
      cfg["profile"] = weights;
    }
  }
  return analysis::AnalysisConfig::FromJson(cfg, analysis::Limits{});
}

ContextSequence Retrieve(const Options& o) {
  const retrieval::Index index = LoadIndex(o);
  retrieval::Bm25Params params;
  params.top_k = o.top_k;
  return retrieval::RetrieveContext(index, Query::FromText(o.question), params);
}

void Emit(std::ostream& out, Format format, const json& payload,
          void (*table)(std::ostream&, const json&)) {
  if (format == Format::kJson) {
    out << payload.dump(2) << '\n';
  } else {
    table(out, payload);
  }
}

void RunIndex(const Options& o, std::ostream& out) {
  if (o.corpus.empty() || o.index.empty()) throw UsageError{"index needs --corpus and --index"};
  std::ifstream in(o.corpus);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read corpus: " + o.corpus);
  const auto index = retrieval::Index::Build(retrieval::ReadCorpusJsonl(in));
  index.Save(o.index);
  out << "indexed " << index.num_documents() << " documents\n";
}

void RunAsk(const Options& o, Format format, std::ostream& out) {
  auto gateway = MakeGateway(o);
  const ContextSequence ctx = Retrieve(o);
  const auto [full, empty] = analysis::EvaluateBaselines(ctx, *gateway);
  Emit(out, format, analysis::ContextPayload(ctx, full, empty), PrintContext);
}

void RunAnalysis(const Options& o, Format format, std::ostream& out,
                 std::optional<analysis::Family> family,
                 std::optional<CounterfactualKind> kind) {
  auto gateway = MakeGateway(o);
  const analysis::AnalysisConfig config = MakeConfig(o);
  const ContextSequence ctx = Retrieve(o);
  const analysis::Limits limits;
  if (family) {
    const json payload = analysis::RunInsight(ctx, *gateway, *family, config, limits);
    Emit(out, format, payload,
         *family == analysis::Family::kOptimalPermutation ? PrintOptimal : PrintInsight);
  } else {
    Emit(out, format, analysis::RunCounterfactual(ctx, *gateway, *kind, config, limits),
         PrintCounterfactual);
  }
}

void AddSource(CLI::App* cmd, Options& o) {
  cmd->add_option("--corpus", o.corpus, "corpus JSONL file (one {id, contents} per line)");
  cmd->add_option("--index,--index-path", o.index, "index file");
}

void AddOracle(CLI::App* cmd, Options& o) {
  auto* mock = cmd->add_option("--mock", o.mock, "mock oracle fixture file");
  auto* endpoint = cmd->add_option("--endpoint", o.endpoint, "chat-completion base URL");
  mock->excludes(endpoint);
  endpoint->excludes(mock);
  cmd->add_option("--model", o.model, "model name for --endpoint");
  cmd->add_option("--store,--store-path", o.store, "persistent answer cache file");
  cmd->add_option("--top-k,--top_k", o.top_k, "number of sources to retrieve")
      ->check(CLI::Range(1, 50));
  cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"json", "table"}));
  cmd->add_option("question", o.question, "question text")->required();
}

void AddAnalysis(CLI::App* cmd, Options& o, bool sampling_flags, bool optimal_flags) {
  cmd->add_option("--seed", o.seed, "random seed (default 0)");
  cmd->add_option("--max-perturbations,--max_perturbations", o.max_perturbations,
                  "oracle evaluation budget");
  cmd->add_option("--scoring", o.scoring, "RetrievalScore or AttentionSalience");
  if (sampling_flags) {
    auto* ex = cmd->add_flag("--exhaustive", o.exhaustive, "enumerate the full space");
    auto* ss = cmd->add_option("--sample-size,--sample_size", o.sample_size, "sampled perturbations");
    ex->excludes(ss);
    ss->excludes(ex);
  }
  if (optimal_flags) {
    cmd->add_option("--s", o.s, "number of ranked permutations");
    cmd->add_option("--profile", o.profile, "v_shaped or comma-separated position weights");
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           bool interactive) {
  CLI::App app{"Explain retrieval-augmented answers by perturbing their context."};
  app.name("rage-cli");
  app.require_subcommand(1);
  Options o;

  auto* index_cmd = app.add_subcommand("index", "build and save a BM25 index");
  index_cmd->add_option("--corpus", o.corpus, "corpus JSONL file")->required();
  index_cmd->add_option("--index,--index-path", o.index, "index file to write")->required();

  auto* ask = app.add_subcommand("ask", "retrieve sources and answer with full and empty context");
  AddSource(ask, o);
  AddOracle(ask, o);

  auto* explain = app.add_subcommand("explain", "run an insight family or a counterfactual search");
  AddSource(explain, o);
  AddOracle(explain, o);
  AddAnalysis(explain, o, true, true);
  auto* fam = explain->add_option("--family", o.family, "Combination, Permutation or OptimalPermutation");
  auto* kind = explain->add_option("--kind", o.kind, "top_down, bottom_up or reordering");
  fam->excludes(kind);
  kind->excludes(fam);
  explain->add_option("--target-answer,--target_answer", o.target_answer,
                      "answer a bottom-up search must reach");

  auto* sample = app.add_subcommand("sample", "sampled insights (permutations by default)");
  AddSource(sample, o);
  AddOracle(sample, o);
  AddAnalysis(sample, o, false, false);
  sample->add_option("--family", o.family, "Permutation or Combination");
  sample->add_option("--sample-size,--sample_size,--s", o.sample_size, "number of samples (default 100)");

  auto* optimal = app.add_subcommand("optimal", "rank permutations by expected attention");
  AddSource(optimal, o);
  AddOracle(optimal, o);
  AddAnalysis(optimal, o, false, true);

  std::vector<const char*> argv{"rage-cli"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  const Format format = o.format.empty() ? (interactive ? Format::kTable : Format::kJson)
                        : o.format == "json" ? Format::kJson
                                             : Format::kTable;
  try {
    if (active == index_cmd) {
      RunIndex(o, out);
    } else if (active == ask) {
      RunAsk(o, format, out);
    } else if (active == explain) {
      if (o.family.empty() == o.kind.empty()) {
        throw UsageError{"explain needs exactly one of --family or --kind"};
      }
      if (!o.family.empty()) {
        RunAnalysis(o, format, out, analysis::ParseFamily(o.family), std::nullopt);
      } else {
        RunAnalysis(o, format, out, std::nullopt, analysis::ParseKind(o.kind));
      }
    } else if (active == sample) {
      if (!o.sample_size) o.sample_size = 100;
      const analysis::Family family =
          o.family.empty() ? analysis::Family::kPermutation : analysis::ParseFamily(o.family);
      if (family == analysis::Family::kOptimalPermutation) {
        throw UsageError{"sample supports Permutation and Combination"};
      }
      RunAnalysis(o, format, out, family, std::nullopt);
    } else if (active == optimal) {
      RunAnalysis(o, format, out, analysis::Family::kOptimalPermutation, std::nullopt);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.message << "\n\n" << active->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace rage::cli
