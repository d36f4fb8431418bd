#pragma once

// Order-based explanations: how reordering the context changes the answer.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rage/core.hpp"
#include "rage/oracle.hpp"

namespace rage::permutation {

inline constexpr int kDefaultMaxExhaustiveK = 8;

struct SearchConfig {
  int max_perturbations = 1000;
  // Insight mode only: s independent shuffles instead of all k! orders.
  std::optional<std::uint64_t> sample_size;
  std::uint64_t seed = 0;
  int max_exhaustive_k = kDefaultMaxExhaustiveK;
};

// concordant - discordant over all unordered item pairs.
long long ConcordanceBalance(const Permutation& p, const Permutation& reference);

// Kendall's tau in [-1, 1]. Throws kLengthMismatch or kUndefined (k < 2).
double KendallTau(const Permutation& p, const Permutation& reference);

// All k! orders sorted by descending tau against the identity, ties in
// lexicographic order. Throws kKTooLarge when k > max_k.
std::vector<Permutation> PermutationsBySimilarity(int k, int max_k = kDefaultMaxExhaustiveK);

// Most similar reordering (by tau against the retrieval order) that changes
// the full-context answer.
CounterfactualOutcome FindPermutationCounterfactual(const ContextSequence& ctx,
                                                    oracle::Gateway& gateway,
                                                    const SearchConfig& config);

// s independent Fisher-Yates shuffles of [0, k). Each shuffle performs exactly
// k - 1 swaps; the running total is added to *swap_count when given.
std::vector<Permutation> SamplePermutations(int k, std::uint64_t s, std::uint64_t seed,
                                            std::uint64_t* swap_count = nullptr);

// Answer distribution over all k! orders or a seeded sample. Sampled orders are
// evaluated once each but counted with multiplicity.
PerturbationInsight PermutationInsights(const ContextSequence& ctx, oracle::Gateway& gateway,
                                        const SearchConfig& config);

// Positions holding the same source in every permutation.
AnswerRule MinePermutationRule(const std::string& answer, std::span<const Permutation> perms,
                               const ContextSequence& ctx);

}  // namespace rage::permutation
