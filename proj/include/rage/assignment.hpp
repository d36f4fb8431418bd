#pragma once

// Ranked linear assignment of sources to context positions.
//
// Positions are rows and sources are columns. A solution is a Permutation
// whose order[i] is the source placed at position i. Among assignments of
// equal cost (within a relative 1e-9 tolerance) the lexicographically smallest
// permutation array wins, both inside one solve and across the ranking.

#include <cstdint>
#include <span>
#include <vector>

#include "rage/core.hpp"

namespace rage::assignment {

struct AttentionProfile {
  // weights[i] = expected attention paid to context position i.
  std::vector<double> weights;

  // Throws kInvalidArgument unless every weight is finite and positive.
  void Validate() const;
};

// Endpoints 1.0, middle 0.5, linear in between; [1.0] for k = 1.
AttentionProfile VShapedProfile(int k);

class CostMatrix {
 public:
  // Throws kNonSquareMatrix, kNonFiniteEntry, or kInvalidArgument when empty.
  static CostMatrix FromRows(const std::vector<std::vector<double>>& rows);

  int size() const { return k_; }
  double at(int row, int col) const { return cells_[static_cast<std::size_t>(row) * k_ + col]; }
  double Total(const Permutation& p) const;

 private:
  int k_ = 0;
  std::vector<double> cells_;
};

// cost[i][j] = -relevance[j] * weights[i].
CostMatrix BuildCostMatrix(std::span<const double> relevance, const AttentionProfile& profile);

struct RankedAssignment {
  Permutation permutation;
  double cost = 0.0;
  // Maximization form, -cost.
  double score = 0.0;
  int rank = 0;
};

// Minimum-cost perfect matching, O(k^3) shortest augmenting paths.
RankedAssignment SolveBestAssignment(const CostMatrix& cost);

// The min(s, k!) cheapest distinct assignments in non-decreasing cost order,
// by solution-space partitioning over forced/forbidden position-source pairs.
std::vector<RankedAssignment> SolveSBestAssignments(const CostMatrix& cost, std::uint64_t s);

// Orders that put the most relevant sources in the highest-attention
// positions. Relevance is used as given (no normalization).
std::vector<RankedAssignment> OptimalPermutations(const ContextSequence& ctx,
                                                  const RelevanceVector& relevance,
                                                  const AttentionProfile& profile,
                                                  std::uint64_t s);

nlohmann::json ToJson(const RankedAssignment& a, const ContextSequence* ctx = nullptr);

}  // namespace rage::assignment
