#pragma once

// Shared domain vocabulary: queries, sources, contexts, perturbations,
// answers and the insight/counterfactual records built from them.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rage/error.hpp"

namespace rage {

struct Query {
  std::string id;
  std::string text;

  // Builds a query whose id is a stable hash of the text, so that oracle
  // cache entries survive process restarts.
  static Query FromText(std::string_view text);

  friend bool operator==(const Query&, const Query&) = default;
};

struct SourceDocument {
  std::string doc_id;
  std::string text;
  double retrieval_score = 0.0;

  friend bool operator==(const SourceDocument&, const SourceDocument&) = default;
};

// The ordered context fed to the oracle for one query. Immutable once built.
class ContextSequence {
 public:
  // Throws kInvalidArgument on an empty list, duplicate doc ids, empty text or
  // an empty query.
  ContextSequence(Query query, std::vector<SourceDocument> sources);

  const Query& query() const { return query_; }
  const std::vector<SourceDocument>& sources() const { return sources_; }
  int k() const { return static_cast<int>(sources_.size()); }

  // Position of doc_id in the context, or -1.
  int IndexOf(std::string_view doc_id) const;
  std::vector<std::string> DocIds() const;

  friend bool operator==(const ContextSequence&, const ContextSequence&) = default;

 private:
  Query query_;
  std::vector<SourceDocument> sources_;
};

enum class ScoringMethod { kRetrievalScore, kAttentionSalience };

struct RelevanceVector {
  ScoringMethod method = ScoringMethod::kRetrievalScore;
  std::map<std::string, double> scores;
  bool normalized = false;

  // Scores laid out in context order. Throws kInvalidArgument unless there is
  // exactly one non-negative entry per source.
  std::vector<double> InContextOrder(const ContextSequence& ctx) const;
};

// A subset of the context. Members are kept in their context order, which is
// also the order in which they are handed to the oracle.
struct Combination {
  std::vector<std::string> member_ids;

  static Combination FromMask(const ContextSequence& ctx, std::uint64_t mask);
  std::uint64_t ToMask(const ContextSequence& ctx) const;
  std::vector<SourceDocument> Select(const ContextSequence& ctx) const;
  bool Contains(std::string_view doc_id) const;

  friend bool operator==(const Combination&, const Combination&) = default;
};

// order[rank] = index of the source in the original context.
struct Permutation {
  std::vector<int> order;

  static Permutation Identity(int k);
  int size() const { return static_cast<int>(order.size()); }
  bool IsBijection() const;
  bool IsIdentity() const;
  Permutation Inverse() const;
  // (this ∘ other)[i] = other.order[this->order[i]]
  Permutation Compose(const Permutation& other) const;
  std::vector<SourceDocument> Apply(const ContextSequence& ctx) const;

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;
};

using Perturbation = std::variant<Combination, Permutation>;

// Ordered sources a perturbation hands to the oracle.
std::vector<SourceDocument> SelectSources(const ContextSequence& ctx,
                                          const Perturbation& perturbation);

struct AnswerRecord {
  std::string raw;
  std::string normalized;
  Perturbation perturbation;
  int oracle_calls_used = 0;

  friend bool operator==(const AnswerRecord&, const AnswerRecord&) = default;
};

enum class CounterfactualKind { kTopDownRemoval, kBottomUpRetention, kReordering };

struct Counterfactual {
  CounterfactualKind kind = CounterfactualKind::kTopDownRemoval;
  // Removal set, retention set, or the reordering.
  Perturbation perturbation;
  AnswerRecord original_answer;
  AnswerRecord new_answer;
  int perturbations_tested = 0;
  std::optional<double> similarity;
};

enum class SearchStatus { kFound, kNotFound, kBudgetExhausted };

// Result of a counterfactual search. kNotFound means the candidate space was
// exhausted; kBudgetExhausted means the search stopped at max_perturbations.
struct CounterfactualOutcome {
  SearchStatus status = SearchStatus::kNotFound;
  std::optional<Counterfactual> counterfactual;
  AnswerRecord baseline;
  int perturbations_tested = 0;
};

enum class RuleKind { kRequiredSources, kFixedPositions };

struct AnswerRule {
  std::string answer;
  RuleKind kind = RuleKind::kRequiredSources;
  std::vector<std::string> required_ids;
  std::map<int, std::string> fixed_positions;

  // An empty rule is reported as "no rule found".
  bool empty() const {
    return kind == RuleKind::kRequiredSources ? required_ids.empty()
                                              : fixed_positions.empty();
  }
};

struct PerturbationInsight {
  std::map<std::string, std::vector<Perturbation>> groups;
  std::map<std::string, double> proportions;
  // Non-empty rules only; an answer without one has no rule.
  std::vector<AnswerRule> rules;
  int total_evaluated = 0;
};

// Lowercases, strips Unicode punctuation (categories P*), trims, and
// collapses internal whitespace runs to one space. Idempotent.
std::string NormalizeAnswer(std::string_view raw);

bool AnswersEqual(std::string_view a, std::string_view b);

// 64-bit FNV-1a, hex encoded. Stable across platforms.
std::string StableHash(std::string_view data);

std::string_view ToString(ScoringMethod m);
std::string_view ToString(CounterfactualKind k);
std::string_view ToString(SearchStatus s);
std::string_view ToString(RuleKind k);
ScoringMethod ParseScoringMethod(std::string_view s);
CounterfactualKind ParseCounterfactualKind(std::string_view s);

void to_json(nlohmann::json& j, const Query& v);
void from_json(const nlohmann::json& j, Query& v);
void to_json(nlohmann::json& j, const SourceDocument& v);
void from_json(const nlohmann::json& j, SourceDocument& v);
void to_json(nlohmann::json& j, const ContextSequence& v);
ContextSequence ContextFromJson(const nlohmann::json& j);
void to_json(nlohmann::json& j, const RelevanceVector& v);
void from_json(const nlohmann::json& j, RelevanceVector& v);
void to_json(nlohmann::json& j, const Combination& v);
void from_json(const nlohmann::json& j, Combination& v);
void to_json(nlohmann::json& j, const Permutation& v);
void from_json(const nlohmann::json& j, Permutation& v);
nlohmann::json PerturbationToJson(const Perturbation& v);
Perturbation PerturbationFromJson(const nlohmann::json& j);
void to_json(nlohmann::json& j, const AnswerRecord& v);
void from_json(const nlohmann::json& j, AnswerRecord& v);
void to_json(nlohmann::json& j, const Counterfactual& v);
void from_json(const nlohmann::json& j, Counterfactual& v);
void to_json(nlohmann::json& j, const CounterfactualOutcome& v);
void from_json(const nlohmann::json& j, CounterfactualOutcome& v);
void to_json(nlohmann::json& j, const AnswerRule& v);
void from_json(const nlohmann::json& j, AnswerRule& v);
void to_json(nlohmann::json& j, const PerturbationInsight& v);
void from_json(const nlohmann::json& j, PerturbationInsight& v);

}  // namespace rage
