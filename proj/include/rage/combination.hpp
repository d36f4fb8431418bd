#pragma once

// Presence-based explanations: which subsets of the context change the answer.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rage/core.hpp"
#include "rage/oracle.hpp"

namespace rage::combination {

inline constexpr int kDefaultMaxExhaustiveK = 20;

enum class Direction { kTopDown, kBottomUp };

struct SearchConfig {
  Direction direction = Direction::kTopDown;
  // Compared after normalization. Unset means "any different answer".
  std::optional<std::string> target_answer;
  int max_perturbations = 1000;
  ScoringMethod scoring = ScoringMethod::kRetrievalScore;
  // Insight mode only: evaluate this many distinct subsets instead of all 2^k.
  std::optional<std::uint64_t> sample_size;
  std::uint64_t seed = 0;
  int max_exhaustive_k = kDefaultMaxExhaustiveK;
};

// Masks of the given size in visiting order: descending relevance sum, ties
// by the lexicographic doc id sequence of the members. Bit i is source i.
std::vector<std::uint64_t> OrderedMasksOfSize(const ContextSequence& ctx,
                                              std::span<const double> relevance, int size);

// All 2^k subsets grouped by ascending size, each group in OrderedMasksOfSize
// order. Throws kContextTooLarge when k > max_k.
std::vector<Combination> EnumerateCombinationsOrdered(const ContextSequence& ctx,
                                                      const RelevanceVector& relevance,
                                                      int max_k = kDefaultMaxExhaustiveK);

// Relative relevance from retrieval scores, or attention salience from the
// oracle over the full context.
RelevanceVector ScoreSources(const ContextSequence& ctx, oracle::Gateway& gateway,
                             ScoringMethod method);

// Top-down: smallest removal set that flips the full-context answer.
// Bottom-up: smallest retention set that flips the empty-context answer.
CounterfactualOutcome FindCombinationCounterfactual(const ContextSequence& ctx,
                                                    oracle::Gateway& gateway,
                                                    const SearchConfig& config);

// Answer distribution over all subsets or a seeded uniform sample of distinct
// subsets (the empty and full sets are always part of a sample). Throws
// kBudgetExhausted when the evaluation set exceeds max_perturbations plus the
// two baselines.
PerturbationInsight CombinationInsights(const ContextSequence& ctx, oracle::Gateway& gateway,
                                        const SearchConfig& config);

// Sources present in every combination; empty when there is none.
AnswerRule MineCombinationRule(const std::string& answer,
                               std::span<const Combination> combos);

}  // namespace rage::combination
