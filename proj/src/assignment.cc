#include "rage/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <utility>

namespace rage::assignment {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRelativeTolerance = 1e-9;

// A node of the partitioned solution space.
struct Subproblem {
  std::vector<int> forced;                     // forced[row] = col or -1
  std::vector<std::pair<int, int>> forbidden;  // (row, col) pairs
};

struct Solution {
  Subproblem space;
  Permutation perm;
  double cost = 0.0;
};

class Solver {
 public:
  explicit Solver(const CostMatrix& cost) : cost_(cost), k_(cost.size()) {
    double max_abs = 0.0;
    for (int i = 0; i < k_; ++i) {
      for (int j = 0; j < k_; ++j) max_abs = std::max(max_abs, std::abs(cost_.at(i, j)));
    }
    tolerance_ = kRelativeTolerance * (1.0 + max_abs);
  }

  double tolerance() const { return tolerance_; }

  // Cheapest assignment in the subspace, lexicographically smallest among
  // ties, or nullopt when the subspace is empty.
  std::optional<Solution> Solve(Subproblem space) const {
    std::vector<int> rows;
    std::vector<int> cols;
    std::vector<bool> col_taken(k_, false);
    for (int r = 0; r < k_; ++r) {
      if (space.forced[r] >= 0) col_taken[space.forced[r]] = true;
    }
    for (int r = 0; r < k_; ++r) {
      if (space.forced[r] < 0) rows.push_back(r);
    }
    for (int c = 0; c < k_; ++c) {
      if (!col_taken[c]) cols.push_back(c);
    }
    const int n = static_cast<int>(rows.size());
    std::vector<int> local_row(k_, -1);
    std::vector<int> local_col(k_, -1);
    for (int i = 0; i < n; ++i) local_row[rows[i]] = i;
    for (int j = 0; j < n; ++j) local_col[cols[j]] = j;

    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a[i * n + j] = cost_.at(rows[i], cols[j]);
    }
    for (const auto& [r, c] : space.forbidden) {
      if (local_row[r] >= 0 && local_col[c] >= 0) a[local_row[r] * n + local_col[c]] = kInf;
    }

    std::vector<int> col_of(n, -1);
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    if (n > 0 && !Hungarian(a, n, col_of, u, v)) return std::nullopt;
    if (n > 0) LexicographicTieBreak(a, n, col_of, u, v);

    Solution sol;
    sol.perm.order = space.forced;
    for (int i = 0; i < n; ++i) sol.perm.order[rows[i]] = cols[col_of[i]];
    sol.cost = cost_.Total(sol.perm);
    sol.space = std::move(space);
    return sol;
  }

 private:
  // Shortest augmenting path method with row/column potentials. Fills col_of
  // and dual values u (rows, 1-based) and v (columns, 1-based).
  static bool Hungarian(const std::vector<double>& a, int n, std::vector<int>& col_of,
                        std::vector<double>& u, std::vector<double>& v) {
    std::vector<int> p(n + 1, 0);    // p[j] = row matched to column j (1-based)
    std::vector<int> way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
      p[0] = i;
      int j0 = 0;
      std::vector<double> minv(n + 1, kInf);
      std::vector<bool> used(n + 1, false);
      do {
        used[j0] = true;
        const int i0 = p[j0];
        double delta = kInf;
        int j1 = -1;
        for (int j = 1; j <= n; ++j) {
          if (used[j]) continue;
          const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
        if (j1 < 0 || delta == kInf) return false;
        for (int j = 0; j <= n; ++j) {
          if (used[j]) {
            u[p[j]] += delta;
            v[j] -= delta;
          } else {
            minv[j] -= delta;
          }
        }
        j0 = j1;
      } while (p[j0] != 0);
      do {
        const int j1 = way[j0];
        p[j0] = p[j1];
        j0 = j1;
      } while (j0 != 0);
    }
    for (int j = 1; j <= n; ++j) col_of[p[j] - 1] = j - 1;
    return true;
  }

  // Every optimal matching lives on the zero-reduced-cost edges of an optimal
  // dual. Walk rows in order and move each to its smallest column for which
  // an alternating cycle through the unfixed rows exists.
  void LexicographicTieBreak(const std::vector<double>& a, int n, std::vector<int>& col_of,
                             const std::vector<double>& u, const std::vector<double>& v) const {
    auto tight = [&](int i, int j) {
      const double c = a[i * n + j];
      return c != kInf && c - u[i + 1] - v[j + 1] <= tolerance_;
    };
    std::vector<int> row_of(n);
    for (int i = 0; i < n; ++i) row_of[col_of[i]] = i;
    std::vector<bool> fixed(n, false);
    std::vector<int> via(n);
    std::vector<bool> seen(n);

    for (int i = 0; i < n; ++i) {
      const int target = col_of[i];
      for (int j = 0; j < target; ++j) {
        if (!tight(i, j)) continue;
        const int start = row_of[j];
        if (fixed[start]) continue;
        // Search a path start -> ... -> target that frees column j for row i.
        std::fill(seen.begin(), seen.end(), false);
        seen[j] = true;
        std::deque<int> queue{start};
        bool found = false;
        while (!queue.empty() && !found) {
          const int x = queue.front();
          queue.pop_front();
          for (int y = 0; y < n && !found; ++y) {
            if (seen[y] || !tight(x, y)) continue;
            if (y == target) {
              via[y] = x;
              found = true;
              break;
            }
            const int owner = row_of[y];
            if (owner == i || fixed[owner]) continue;
            seen[y] = true;
            via[y] = x;
            queue.push_back(owner);
          }
        }
        if (!found) continue;
        std::vector<std::pair<int, int>> moves;
        for (int y = target;;) {
          const int x = via[y];
          moves.emplace_back(x, y);
          if (x == start) break;
          y = col_of[x];
        }
        moves.emplace_back(i, j);
        for (const auto& [x, y] : moves) {
          col_of[x] = y;
          row_of[y] = x;
        }
        break;
      }
      fixed[i] = true;
    }
  }

  const CostMatrix& cost_;
  int k_;
  double tolerance_ = 0.0;
};

RankedAssignment ToRanked(const Solution& s, int rank) {
  return {s.perm, s.cost, -s.cost, rank};
}

}  // namespace

void AttentionProfile::Validate() const {
  if (weights.empty()) throw Error(ErrorCode::kInvalidArgument, "attention profile is empty");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "attention weights must be positive and finite");
    }
  }
}

AttentionProfile VShapedProfile(int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  AttentionProfile profile;
  if (k == 1) {
    profile.weights = {1.0};
    return profile;
  }
  profile.weights.resize(k);
  for (int i = 0; i < k; ++i) {
    profile.weights[i] = 0.5 + std::abs(2.0 * i - (k - 1)) / (2.0 * (k - 1));
  }
  return profile;
}

CostMatrix CostMatrix::FromRows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, "cost matrix is empty");
  CostMatrix m;
  m.k_ = static_cast<int>(rows.size());
  m.cells_.reserve(rows.size() * rows.size());
  for (const auto& row : rows) {
    if (row.size() != rows.size()) {
      throw Error(ErrorCode::kNonSquareMatrix, "cost matrix must be square",
                  {{"rows", rows.size()}, {"cols", row.size()}});
    }
    for (double c : row) {
      if (!std::isfinite(c)) throw Error(ErrorCode::kNonFiniteEntry, "cost entry is not finite");
      m.cells_.push_back(c);
    }
  }
  return m;
}

double CostMatrix::Total(const Permutation& p) const {
  double total = 0.0;
  for (int i = 0; i < k_; ++i) total += at(i, p.order[i]);
  return total;
}

CostMatrix BuildCostMatrix(std::span<const double> relevance, const AttentionProfile& profile) {
  profile.Validate();
  if (relevance.size() != profile.weights.size()) {
    throw Error(ErrorCode::kLengthMismatch, "profile length must equal the number of sources",
                {{"sources", relevance.size()}, {"positions", profile.weights.size()}});
  }
  const std::size_t k = relevance.size();
  std::vector<std::vector<double>> rows(k, std::vector<double>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) rows[i][j] = -relevance[j] * profile.weights[i];
  }
  return CostMatrix::FromRows(rows);
}

RankedAssignment SolveBestAssignment(const CostMatrix& cost) {
  Solver solver(cost);
  Subproblem root{std::vector<int>(cost.size(), -1), {}};
  auto sol = solver.Solve(std::move(root));
  return ToRanked(*sol, 1);
}

std::vector<RankedAssignment> SolveSBestAssignments(const CostMatrix& cost, std::uint64_t s) {
  if (s < 1) throw Error(ErrorCode::kInvalidArgument, "s must be positive");
  Solver solver(cost);
  const int k = cost.size();
  const double tol = solver.tolerance();

  auto heavier = [](const Solution& a, const Solution& b) { return a.cost > b.cost; };
  std::priority_queue<Solution, std::vector<Solution>, decltype(heavier)> pool(heavier);
  pool.push(*solver.Solve(Subproblem{std::vector<int>(k, -1), {}}));

  std::vector<RankedAssignment> out;
  while (out.size() < s && !pool.empty()) {
    // Pull every solution tied with the cheapest and emit the
    // lexicographically smallest one.
    std::vector<Solution> tied;
    const double floor = pool.top().cost;
    while (!pool.empty() && pool.top().cost <= floor + tol) {
      tied.push_back(pool.top());
      pool.pop();
    }
    auto best = std::min_element(tied.begin(), tied.end(), [](const auto& a, const auto& b) {
      return a.perm.order < b.perm.order;
    });
    Solution chosen = std::move(*best);
    tied.erase(best);
    for (auto& t : tied) pool.push(std::move(t));

    out.push_back(ToRanked(chosen, static_cast<int>(out.size()) + 1));
    if (out.size() == s) break;

    // Partition the rest of chosen's subspace: child t keeps the first t-1
    // free pairs of the emitted solution and forbids the t-th.
    Subproblem prefix = chosen.space;
    for (int r = 0; r < k; ++r) {
      if (chosen.space.forced[r] >= 0) continue;
      Subproblem child = prefix;
      child.forbidden.emplace_back(r, chosen.perm.order[r]);
      if (auto sol = solver.Solve(std::move(child))) pool.push(std::move(*sol));
      prefix.forced[r] = chosen.perm.order[r];
    }
  }
  return out;
}

std::vector<RankedAssignment> OptimalPermutations(const ContextSequence& ctx,
                                                  const RelevanceVector& relevance,
                                                  const AttentionProfile& profile,
                                                  std::uint64_t s) {
  const auto scores = relevance.InContextOrder(ctx);
  return SolveSBestAssignments(BuildCostMatrix(scores, profile), s);
}

nlohmann::json ToJson(const RankedAssignment& a, const ContextSequence* ctx) {
  nlohmann::json j = {{"rank", a.rank},
                      {"permutation", a.permutation},
                      {"score", a.score},
                      {"cost", a.cost}};
  if (ctx) {
    nlohmann::json ids = nlohmann::json::array();
    for (int idx : a.permutation.order) ids.push_back(ctx->sources()[idx].doc_id);
    j["doc_ids"] = std::move(ids);
  }
  return j;
}

}  // namespace rage::assignment
