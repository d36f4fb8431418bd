#include "rage/core.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cstdio>
#include <set>

namespace rage {

using nlohmann::json;

namespace {

bool IsBlank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  });
}

template <typename Enum, std::size_t N>
Enum ParseEnum(std::string_view s, const std::pair<Enum, std::string_view> (&table)[N],
               std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown " + std::string(what) + ": " + std::string(s));
}

constexpr std::pair<ScoringMethod, std::string_view> kScoringNames[] = {
    {ScoringMethod::kRetrievalScore, "RetrievalScore"},
    {ScoringMethod::kAttentionSalience, "AttentionSalience"},
};
constexpr std::pair<CounterfactualKind, std::string_view> kKindNames[] = {
    {CounterfactualKind::kTopDownRemoval, "TopDownRemoval"},
    {CounterfactualKind::kBottomUpRetention, "BottomUpRetention"},
    {CounterfactualKind::kReordering, "Reordering"},
};
constexpr std::pair<SearchStatus, std::string_view> kStatusNames[] = {
    {SearchStatus::kFound, "Found"},
    {SearchStatus::kNotFound, "NotFound"},
    {SearchStatus::kBudgetExhausted, "BudgetExhausted"},
};
constexpr std::pair<RuleKind, std::string_view> kRuleNames[] = {
    {RuleKind::kRequiredSources, "RequiredSources"},
    {RuleKind::kFixedPositions, "FixedPositions"},
};

template <typename Enum, std::size_t N>
std::string_view NameOf(Enum v, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

}  // namespace

Query Query::FromText(std::string_view text) {
  if (IsBlank(text)) {
    throw Error(ErrorCode::kEmptyQuery, "query text is empty");
  }
  return Query{"q-" + StableHash(text), std::string(text)};
}

ContextSequence::ContextSequence(Query query, std::vector<SourceDocument> sources)
    : query_(std::move(query)), sources_(std::move(sources)) {
  if (IsBlank(query_.text)) {
    throw Error(ErrorCode::kEmptyQuery, "query text is empty");
  }
  if (sources_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "context must hold at least one source");
  }
  std::set<std::string_view> seen;
  for (const auto& doc : sources_) {
    if (doc.text.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "source text is empty",
                  {{"doc_id", doc.doc_id}});
    }
    if (!seen.insert(doc.doc_id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate doc_id in context: " + doc.doc_id,
                  {{"doc_id", doc.doc_id}});
    }
  }
}

int ContextSequence::IndexOf(std::string_view doc_id) const {
  for (int i = 0; i < k(); ++i) {
    if (sources_[i].doc_id == doc_id) return i;
  }
  return -1;
}

std::vector<std::string> ContextSequence::DocIds() const {
  std::vector<std::string> ids;
  ids.reserve(sources_.size());
  for (const auto& d : sources_) ids.push_back(d.doc_id);
  return ids;
}

std::vector<double> RelevanceVector::InContextOrder(const ContextSequence& ctx) const {
  if (scores.size() != static_cast<std::size_t>(ctx.k())) {
    throw Error(ErrorCode::kInvalidArgument,
                "relevance vector must have one entry per source",
                {{"expected", ctx.k()}, {"actual", scores.size()}});
  }
  std::vector<double> out;
  out.reserve(ctx.k());
  for (const auto& doc : ctx.sources()) {
    auto it = scores.find(doc.doc_id);
    if (it == scores.end()) {
      throw Error(ErrorCode::kInvalidArgument, "relevance missing for " + doc.doc_id);
    }
    if (!(it->second >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "relevance must be non-negative",
                  {{"doc_id", doc.doc_id}});
    }
    out.push_back(it->second);
  }
  return out;
}

Combination Combination::FromMask(const ContextSequence& ctx, std::uint64_t mask) {
  Combination c;
  for (int i = 0; i < ctx.k(); ++i) {
    if (mask & (std::uint64_t{1} << i)) c.member_ids.push_back(ctx.sources()[i].doc_id);
  }
  return c;
}

std::uint64_t Combination::ToMask(const ContextSequence& ctx) const {
  std::uint64_t mask = 0;
  for (const auto& id : member_ids) {
    const int idx = ctx.IndexOf(id);
    if (idx < 0) {
      throw Error(ErrorCode::kInvalidArgument, "combination member not in context: " + id);
    }
    mask |= std::uint64_t{1} << idx;
  }
  return mask;
}

std::vector<SourceDocument> Combination::Select(const ContextSequence& ctx) const {
  const std::uint64_t mask = ToMask(ctx);
  std::vector<SourceDocument> out;
  for (int i = 0; i < ctx.k(); ++i) {
    if (mask & (std::uint64_t{1} << i)) out.push_back(ctx.sources()[i]);
  }
  return out;
}

bool Combination::Contains(std::string_view doc_id) const {
  return std::find(member_ids.begin(), member_ids.end(), doc_id) != member_ids.end();
}

Permutation Permutation::Identity(int k) {
  Permutation p;
  p.order.resize(k);
  for (int i = 0; i < k; ++i) p.order[i] = i;
  return p;
}

bool Permutation::IsBijection() const {
  std::vector<bool> seen(order.size(), false);
  for (int v : order) {
    if (v < 0 || v >= size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

bool Permutation::IsIdentity() const {
  for (int i = 0; i < size(); ++i) {
    if (order[i] != i) return false;
  }
  return true;
}

Permutation Permutation::Inverse() const {
  Permutation inv;
  inv.order.resize(order.size());
  for (int i = 0; i < size(); ++i) inv.order[order[i]] = i;
  return inv;
}

Permutation Permutation::Compose(const Permutation& other) const {
  if (other.size() != size()) {
    throw Error(ErrorCode::kLengthMismatch, "cannot compose permutations of different length");
  }
  Permutation out;
  out.order.resize(order.size());
  for (int i = 0; i < size(); ++i) out.order[i] = other.order[order[i]];
  return out;
}

std::vector<SourceDocument> Permutation::Apply(const ContextSequence& ctx) const {
  if (size() != ctx.k() || !IsBijection()) {
    throw Error(ErrorCode::kInvalidArgument, "permutation is not a bijection on the context");
  }
  std::vector<SourceDocument> out;
  out.reserve(order.size());
  for (int idx : order) out.push_back(ctx.sources()[idx]);
  return out;
}

std::vector<SourceDocument> SelectSources(const ContextSequence& ctx,
                                          const Perturbation& perturbation) {
  if (const auto* combo = std::get_if<Combination>(&perturbation)) {
    return combo->Select(ctx);
  }
  return std::get<Permutation>(perturbation).Apply(ctx);
}

std::string NormalizeAnswer(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(raw.data());
  const int32_t length = static_cast<int32_t>(raw.size());
  bool pending_space = false;
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) continue;  // malformed byte sequence
    if (u_ispunct(c)) continue;
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    const UChar32 lower = u_tolower(c);
    char buf[U8_MAX_LENGTH];
    int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, lower);
    out.append(buf, n);
  }
  return out;
}

bool AnswersEqual(std::string_view a, std::string_view b) {
  return NormalizeAnswer(a) == NormalizeAnswer(b);
}

std::string StableHash(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view ToString(ScoringMethod m) { return NameOf(m, kScoringNames); }
std::string_view ToString(CounterfactualKind k) { return NameOf(k, kKindNames); }
std::string_view ToString(SearchStatus s) { return NameOf(s, kStatusNames); }
std::string_view ToString(RuleKind k) { return NameOf(k, kRuleNames); }

ScoringMethod ParseScoringMethod(std::string_view s) {
  return ParseEnum(s, kScoringNames, "scoring method");
}
CounterfactualKind ParseCounterfactualKind(std::string_view s) {
  return ParseEnum(s, kKindNames, "counterfactual kind");
}

// JSON ----------------------------------------------------------------------

void to_json(json& j, const Query& v) { j = {{"id", v.id}, {"text", v.text}}; }
void from_json(const json& j, Query& v) {
  j.at("id").get_to(v.id);
  j.at("text").get_to(v.text);
}

void to_json(json& j, const SourceDocument& v) {
  j = {{"doc_id", v.doc_id}, {"text", v.text}, {"retrieval_score", v.retrieval_score}};
}
void from_json(const json& j, SourceDocument& v) {
  j.at("doc_id").get_to(v.doc_id);
  j.at("text").get_to(v.text);
  v.retrieval_score = j.value("retrieval_score", 0.0);
}

void to_json(json& j, const ContextSequence& v) {
  j = {{"query", v.query()}, {"sources", v.sources()}, {"k", v.k()}};
}
ContextSequence ContextFromJson(const json& j) {
  return ContextSequence(j.at("query").get<Query>(),
                         j.at("sources").get<std::vector<SourceDocument>>());
}

void to_json(json& j, const RelevanceVector& v) {
  j = {{"method", ToString(v.method)}, {"scores", v.scores}, {"normalized", v.normalized}};
}
void from_json(const json& j, RelevanceVector& v) {
  v.method = ParseScoringMethod(j.at("method").get<std::string>());
  j.at("scores").get_to(v.scores);
  v.normalized = j.value("normalized", false);
}

void to_json(json& j, const Combination& v) { j = v.member_ids; }
void from_json(const json& j, Combination& v) { j.get_to(v.member_ids); }

void to_json(json& j, const Permutation& v) { j = v.order; }
void from_json(const json& j, Permutation& v) { j.get_to(v.order); }

json PerturbationToJson(const Perturbation& v) {
  return std::visit([](const auto& p) { return json(p); }, v);
}

Perturbation PerturbationFromJson(const json& j) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kParseError, "perturbation must be an array");
  }
  if (!j.empty() && j.front().is_number_integer()) return j.get<Permutation>();
  return j.get<Combination>();
}

void to_json(json& j, const AnswerRecord& v) {
  j = {{"raw", v.raw},
       {"normalized", v.normalized},
       {"perturbation", PerturbationToJson(v.perturbation)},
       {"oracle_calls_used", v.oracle_calls_used}};
}
void from_json(const json& j, AnswerRecord& v) {
  j.at("raw").get_to(v.raw);
  j.at("normalized").get_to(v.normalized);
  v.perturbation = PerturbationFromJson(j.at("perturbation"));
  v.oracle_calls_used = j.value("oracle_calls_used", 0);
}

void to_json(json& j, const Counterfactual& v) {
  j = {{"kind", ToString(v.kind)},
       {"perturbation", PerturbationToJson(v.perturbation)},
       {"original_answer", v.original_answer},
       {"new_answer", v.new_answer},
       {"perturbations_tested", v.perturbations_tested}};
  j["similarity"] = v.similarity ? json(*v.similarity) : json(nullptr);
}
void from_json(const json& j, Counterfactual& v) {
  v.kind = ParseCounterfactualKind(j.at("kind").get<std::string>());
  v.perturbation = PerturbationFromJson(j.at("perturbation"));
  j.at("original_answer").get_to(v.original_answer);
  j.at("new_answer").get_to(v.new_answer);
  j.at("perturbations_tested").get_to(v.perturbations_tested);
  if (j.contains("similarity") && !j.at("similarity").is_null()) {
    v.similarity = j.at("similarity").get<double>();
  } else {
    v.similarity.reset();
  }
}

void to_json(json& j, const CounterfactualOutcome& v) {
  j = {{"status", ToString(v.status)},
       {"baseline", v.baseline},
       {"perturbations_tested", v.perturbations_tested}};
  j["counterfactual"] = v.counterfactual ? json(*v.counterfactual) : json(nullptr);
}
void from_json(const json& j, CounterfactualOutcome& v) {
  v.status = ParseEnum(j.at("status").get<std::string>(), kStatusNames, "search status");
  j.at("baseline").get_to(v.baseline);
  j.at("perturbations_tested").get_to(v.perturbations_tested);
  if (!j.at("counterfactual").is_null()) {
    v.counterfactual = j.at("counterfactual").get<Counterfactual>();
  } else {
    v.counterfactual.reset();
  }
}

void to_json(json& j, const AnswerRule& v) {
  j = {{"answer", v.answer}, {"kind", ToString(v.kind)}};
  if (v.kind == RuleKind::kRequiredSources) {
    j["required_ids"] = v.required_ids;
  } else {
    json fixed = json::object();
    for (const auto& [pos, id] : v.fixed_positions) fixed[std::to_string(pos)] = id;
    j["fixed_positions"] = fixed;
  }
}
void from_json(const json& j, AnswerRule& v) {
  j.at("answer").get_to(v.answer);
  v.kind = ParseEnum(j.at("kind").get<std::string>(), kRuleNames, "rule kind");
  v.required_ids.clear();
  v.fixed_positions.clear();
  if (v.kind == RuleKind::kRequiredSources) {
    j.at("required_ids").get_to(v.required_ids);
  } else {
    for (const auto& [pos, id] : j.at("fixed_positions").items()) {
      v.fixed_positions[std::stoi(pos)] = id.get<std::string>();
    }
  }
}

void to_json(json& j, const PerturbationInsight& v) {
  json groups = json::object();
  for (const auto& [answer, members] : v.groups) {
    json arr = json::array();
    for (const auto& p : members) arr.push_back(PerturbationToJson(p));
    groups[answer] = arr;
  }
  j = {{"groups", groups},
       {"proportions", v.proportions},
       {"rules", v.rules},
       {"total_evaluated", v.total_evaluated}};
}
void from_json(const json& j, PerturbationInsight& v) {
  v.groups.clear();
  for (const auto& [answer, arr] : j.at("groups").items()) {
    auto& members = v.groups[answer];
    for (const auto& p : arr) members.push_back(PerturbationFromJson(p));
  }
  j.at("proportions").get_to(v.proportions);
  j.at("rules").get_to(v.rules);
  j.at("total_evaluated").get_to(v.total_evaluated);
}

}  // namespace rage
