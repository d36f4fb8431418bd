#include "rage/permutation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace rage::permutation {

long long ConcordanceBalance(const Permutation& p, const Permutation& reference) {
  if (p.size() != reference.size()) {
    throw Error(ErrorCode::kLengthMismatch, "permutations differ in length",
                {{"left", p.size()}, {"right", reference.size()}});
  }
  if (!p.IsBijection() || !reference.IsBijection()) {
    throw Error(ErrorCode::kInvalidArgument, "not a permutation");
  }
  // Rank of each item in both orders.
  const Permutation rank_p = p.Inverse();
  const Permutation rank_r = reference.Inverse();
  long long balance = 0;
  const int k = p.size();
  for (int x = 0; x < k; ++x) {
    for (int y = x + 1; y < k; ++y) {
      const bool before_p = rank_p.order[x] < rank_p.order[y];
      const bool before_r = rank_r.order[x] < rank_r.order[y];
      balance += before_p == before_r ? 1 : -1;
    }
  }
  return balance;
}

double KendallTau(const Permutation& p, const Permutation& reference) {
  if (p.size() != reference.size()) {
    throw Error(ErrorCode::kLengthMismatch, "permutations differ in length");
  }
  const int k = p.size();
  if (k < 2) throw Error(ErrorCode::kUndefined, "Kendall's tau needs at least two items");
  const double pairs = static_cast<double>(k) * (k - 1) / 2.0;
  return static_cast<double>(ConcordanceBalance(p, reference)) / pairs;
}

std::vector<Permutation> PermutationsBySimilarity(int k, int max_k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (k > max_k) {
    throw Error(ErrorCode::kKTooLarge, "too many sources for exhaustive permutation search",
                {{"k", k}, {"limit", max_k}});
  }
  const Permutation identity = Permutation::Identity(k);
  std::vector<std::pair<long long, Permutation>> keyed;
  Permutation p = identity;
  do {
    keyed.emplace_back(ConcordanceBalance(p, identity), p);
  } while (std::next_permutation(p.order.begin(), p.order.end()));
  // Generated in lexicographic order, so a stable sort keeps that tie-break.
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Permutation> out;
  out.reserve(keyed.size());
  for (auto& [_, perm] : keyed) out.push_back(std::move(perm));
  return out;
}

CounterfactualOutcome FindPermutationCounterfactual(const ContextSequence& ctx,
                                                    oracle::Gateway& gateway,
                                                    const SearchConfig& config) {
  if (config.max_perturbations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_perturbations must be positive");
  }
  const int k = ctx.k();
  const auto candidates = PermutationsBySimilarity(k, config.max_exhaustive_k);
  const Permutation identity = Permutation::Identity(k);

  CounterfactualOutcome outcome;
  outcome.baseline = gateway.Evaluate(ctx, identity);

  int tested = 0;
  for (const auto& candidate : candidates) {
    if (candidate.IsIdentity()) continue;
    if (tested == config.max_perturbations) {
      outcome.status = SearchStatus::kBudgetExhausted;
      outcome.perturbations_tested = tested;
      return outcome;
    }
    AnswerRecord answer = gateway.Evaluate(ctx, candidate);
    ++tested;
    if (answer.normalized != outcome.baseline.normalized) {
      Counterfactual cf;
      cf.kind = CounterfactualKind::kReordering;
      cf.perturbation = candidate;
      cf.original_answer = outcome.baseline;
      cf.new_answer = std::move(answer);
      cf.perturbations_tested = tested;
      cf.similarity = KendallTau(candidate, identity);
      outcome.status = SearchStatus::kFound;
      outcome.perturbations_tested = tested;
      outcome.counterfactual = std::move(cf);
      return outcome;
    }
  }
  outcome.status = SearchStatus::kNotFound;
  outcome.perturbations_tested = tested;
  return outcome;
}

std::vector<Permutation> SamplePermutations(int k, std::uint64_t s, std::uint64_t seed,
                                            std::uint64_t* swap_count) {
  if (k < 1 || s < 1) {
    throw Error(ErrorCode::kInvalidArgument, "sample_permutations needs k >= 1 and s >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<Permutation> out;
  out.reserve(s);
  std::uint64_t swaps = 0;
  for (std::uint64_t draw = 0; draw < s; ++draw) {
    Permutation p = Permutation::Identity(k);
    for (int i = k - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(p.order[i], p.order[pick(rng)]);
      ++swaps;
    }
    out.push_back(std::move(p));
  }
  if (swap_count) *swap_count += swaps;
  return out;
}

PerturbationInsight PermutationInsights(const ContextSequence& ctx, oracle::Gateway& gateway,
                                        const SearchConfig& config) {
  const int k = ctx.k();
  std::vector<Permutation> evaluated;
  if (config.sample_size) {
    evaluated = SamplePermutations(k, *config.sample_size, config.seed);
  } else {
    if (k > config.max_exhaustive_k) {
      throw Error(ErrorCode::kKTooLarge,
                  "too many sources for exhaustive permutation insights",
                  {{"k", k}, {"limit", config.max_exhaustive_k}});
    }
    Permutation p = Permutation::Identity(k);
    do {
      evaluated.push_back(p);
    } while (std::next_permutation(p.order.begin(), p.order.end()));
  }

  std::map<Permutation, std::size_t> slot;
  std::vector<Perturbation> distinct;
  for (const auto& p : evaluated) {
    if (slot.emplace(p, distinct.size()).second) distinct.emplace_back(p);
  }
  if (distinct.size() > static_cast<std::size_t>(config.max_perturbations) + 2) {
    throw Error(ErrorCode::kBudgetExhausted,
                "insight evaluation set exceeds the perturbation budget",
                {{"evaluations", distinct.size()},
                 {"max_perturbations", config.max_perturbations}});
  }
  const auto answers = gateway.EvaluateBatch(ctx, distinct);

  PerturbationInsight insight;
  std::map<std::string, std::vector<Permutation>> by_answer;
  for (const auto& p : evaluated) {
    const std::string& answer = answers[slot.at(p)].normalized;
    insight.groups[answer].push_back(p);
    by_answer[answer].push_back(p);
  }
  insight.total_evaluated = static_cast<int>(evaluated.size());
  for (const auto& [answer, perms] : by_answer) {
    insight.proportions[answer] =
        static_cast<double>(perms.size()) / static_cast<double>(insight.total_evaluated);
    AnswerRule rule = MinePermutationRule(answer, perms, ctx);
    if (!rule.empty()) insight.rules.push_back(std::move(rule));
  }
  return insight;
}

AnswerRule MinePermutationRule(const std::string& answer, std::span<const Permutation> perms,
                               const ContextSequence& ctx) {
  if (perms.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "rule mining needs at least one permutation");
  }
  for (const auto& p : perms) {
    if (p.size() != ctx.k() || !p.IsBijection()) {
      throw Error(ErrorCode::kInvalidArgument, "permutation does not match the context");
    }
  }
  AnswerRule rule;
  rule.answer = answer;
  rule.kind = RuleKind::kFixedPositions;
  for (int pos = 0; pos < ctx.k(); ++pos) {
    const int source = perms.front().order[pos];
    const bool fixed = std::all_of(perms.begin(), perms.end(),
                                   [&](const Permutation& p) { return p.order[pos] == source; });
    if (fixed) rule.fixed_positions[pos] = ctx.sources()[source].doc_id;
  }
  return rule;
}

}  // namespace rage::permutation
