#pragma once

// Request-level analyses shared by the service and the command line: config
// parsing, evaluation planning and the JSON result payloads. Both front ends
// emit exactly these payloads.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rage/core.hpp"
#include "rage/oracle.hpp"

namespace rage::analysis {

enum class Family { kCombination, kPermutation, kOptimalPermutation };

// Accepts "Combination", "combination", "OptimalPermutation", "optimal",
// "optimal_permutation" and the like.
Family ParseFamily(std::string_view s);
std::string_view ToString(Family f);

// "top_down", "bottom_up", "reordering" (wire form).
CounterfactualKind ParseKind(std::string_view s);
std::string_view KindName(CounterfactualKind k);

struct Limits {
  // Budget used when a request does not name one, and the largest accepted.
  int default_max_perturbations = 1000;
  int max_perturbations = 100000;
  int combination_max_k = 20;
  int permutation_max_k = 8;
  std::uint64_t max_s = 1000;
  int max_top_k = 50;

  static Limits FromJson(const nlohmann::json& j, const Limits& defaults);
  nlohmann::json ToJson() const;
};

struct AnalysisConfig {
  // Unset means exhaustive.
  std::optional<std::uint64_t> sample_size;
  std::uint64_t seed = 0;
  int max_perturbations = 1000;
  ScoringMethod scoring = ScoringMethod::kRetrievalScore;
  std::optional<std::string> target_answer;
  // Optimal permutations: how many to rank, and the position weights (empty
  // means the V-shaped profile).
  std::uint64_t s = 3;
  std::vector<double> profile;

  // Keys: sample_size, exhaustive, seed, max_perturbations, scoring,
  // target_answer, s, profile ("v_shaped" or a weight array). Unknown keys
  // and values outside `limits` raise kInvalidArgument.
  static AnalysisConfig FromJson(const nlohmann::json& j, const Limits& limits);
  nlohmann::json ToJson() const;
};

// Upper bound on oracle evaluations an analysis performs, used as the job
// progress total. Baselines are included.
std::uint64_t PlannedEvaluations(const ContextSequence& ctx, Family family,
                                 const AnalysisConfig& config);
std::uint64_t PlannedEvaluations(const ContextSequence& ctx, CounterfactualKind kind,
                                 const AnalysisConfig& config);

// Query, retrieved sources and the full/empty context answers.
nlohmann::json ContextPayload(const ContextSequence& ctx, const AnswerRecord& full,
                              const AnswerRecord& empty);
// Evaluates both baselines through the gateway.
std::pair<AnswerRecord, AnswerRecord> EvaluateBaselines(const ContextSequence& ctx,
                                                        oracle::Gateway& gateway);

nlohmann::json RunInsight(const ContextSequence& ctx, oracle::Gateway& gateway, Family family,
                          const AnalysisConfig& config, const Limits& limits);
nlohmann::json RunCounterfactual(const ContextSequence& ctx, oracle::Gateway& gateway,
                                 CounterfactualKind kind, const AnalysisConfig& config,
                                 const Limits& limits);

}  // namespace rage::analysis
