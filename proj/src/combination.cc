#include "rage/combination.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>

#include "rage/retrieval.hpp"

namespace rage::combination {

namespace {

using Mask = std::uint64_t;

constexpr int kMaxMaskBits = 62;

Mask FullMask(int k) { return (Mask{1} << k) - 1; }

// Relevance sums are compared on a fixed grid so that mathematically equal
// sums reached in different summation orders tie exactly.
long long ScoreKey(Mask mask, std::span<const double> normalized) {
  double sum = 0.0;
  for (int i = 0; mask; ++i, mask >>= 1) {
    if (mask & 1) sum += normalized[i];
  }
  return std::llround(sum * 1e12);
}

// Lexicographic comparison of the members' doc id sequences (context order).
bool DocIdSequenceLess(const ContextSequence& ctx, Mask a, Mask b) {
  const auto& docs = ctx.sources();
  int i = 0;
  int j = 0;
  const int k = ctx.k();
  while (true) {
    while (i < k && !(a >> i & 1)) ++i;
    while (j < k && !(b >> j & 1)) ++j;
    if (i == k || j == k) return i == k && j != k;
    if (docs[i].doc_id != docs[j].doc_id) return docs[i].doc_id < docs[j].doc_id;
    ++i;
    ++j;
  }
}

// Size first, then lexicographic member index sequence.
bool CanonicalLess(Mask a, Mask b) {
  const int pa = std::popcount(a);
  const int pb = std::popcount(b);
  if (pa != pb) return pa < pb;
  // The lowest differing bit decides: the mask holding it has the smaller
  // index at the first difference.
  const Mask diff = a ^ b;
  if (diff == 0) return false;
  return (a & diff & (~diff + 1)) != 0;
}

std::vector<double> Normalized(std::vector<double> scores) {
  double total = 0.0;
  for (double s : scores) total += s;
  if (total > 0.0) {
    for (double& s : scores) s /= total;
  }
  return scores;
}

void CheckMaskable(const ContextSequence& ctx, int limit) {
  if (ctx.k() > limit) {
    throw Error(ErrorCode::kContextTooLarge,
                "too many sources for exhaustive combination search",
                {{"k", ctx.k()}, {"limit", limit}});
  }
}

bool IsFlip(const AnswerRecord& baseline, const AnswerRecord& candidate,
            const std::optional<std::string>& target) {
  if (candidate.normalized == baseline.normalized) return false;
  return !target || candidate.normalized == NormalizeAnswer(*target);
}

}  // namespace

std::vector<Mask> OrderedMasksOfSize(const ContextSequence& ctx,
                                     std::span<const double> relevance, int size) {
  const int k = ctx.k();
  if (static_cast<int>(relevance.size()) != k) {
    throw Error(ErrorCode::kInvalidArgument, "relevance must cover every source");
  }
  if (k > kMaxMaskBits) {
    throw Error(ErrorCode::kContextTooLarge, "context too large for subset enumeration",
                {{"k", k}});
  }
  std::vector<Mask> masks;
  if (size < 0 || size > k) return masks;
  if (size == 0) return {Mask{0}};
  // Gosper's hack: next mask with the same popcount.
  const Mask limit = Mask{1} << k;
  for (Mask m = (Mask{1} << size) - 1; m < limit;) {
    masks.push_back(m);
    const Mask c = m & (~m + 1);
    const Mask r = m + c;
    m = (((r ^ m) >> 2) / c) | r;
  }
  const auto normalized = Normalized({relevance.begin(), relevance.end()});
  std::vector<std::pair<long long, Mask>> keyed;
  keyed.reserve(masks.size());
  for (Mask m : masks) keyed.emplace_back(ScoreKey(m, normalized), m);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return DocIdSequenceLess(ctx, a.second, b.second);
  });
  for (std::size_t i = 0; i < keyed.size(); ++i) masks[i] = keyed[i].second;
  return masks;
}

std::vector<Combination> EnumerateCombinationsOrdered(const ContextSequence& ctx,
                                                      const RelevanceVector& relevance,
                                                      int max_k) {
  CheckMaskable(ctx, std::min(max_k, kMaxMaskBits));
  const auto scores = relevance.InContextOrder(ctx);
  std::vector<Combination> out;
  out.reserve(std::size_t{1} << ctx.k());
  for (int size = 0; size <= ctx.k(); ++size) {
    for (Mask m : OrderedMasksOfSize(ctx, scores, size)) {
      out.push_back(Combination::FromMask(ctx, m));
    }
  }
  return out;
}

RelevanceVector ScoreSources(const ContextSequence& ctx, oracle::Gateway& gateway,
                             ScoringMethod method) {
  if (method == ScoringMethod::kRetrievalScore) return retrieval::RelativeRelevance(ctx);
  return gateway.AttentionSalience(ctx.query(), ctx.sources());
}

CounterfactualOutcome FindCombinationCounterfactual(const ContextSequence& ctx,
                                                    oracle::Gateway& gateway,
                                                    const SearchConfig& config) {
  CheckMaskable(ctx, std::min(config.max_exhaustive_k, kMaxMaskBits));
  if (config.max_perturbations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_perturbations must be positive");
  }
  const int k = ctx.k();
  const Mask full = FullMask(k);
  const bool top_down = config.direction == Direction::kTopDown;
  const auto scores = ScoreSources(ctx, gateway, config.scoring).InContextOrder(ctx);

  CounterfactualOutcome outcome;
  outcome.baseline = gateway.Evaluate(ctx, Combination::FromMask(ctx, top_down ? full : 0));

  const std::uint64_t total_candidates = full;  // every nonempty subset
  int tested = 0;
  for (int size = 1; size <= k; ++size) {
    for (Mask candidate : OrderedMasksOfSize(ctx, scores, size)) {
      if (tested == config.max_perturbations) {
        outcome.status = SearchStatus::kBudgetExhausted;
        outcome.perturbations_tested = tested;
        return outcome;
      }
      const Mask retained = top_down ? (full & ~candidate) : candidate;
      AnswerRecord answer = gateway.Evaluate(ctx, Combination::FromMask(ctx, retained));
      ++tested;
      if (IsFlip(outcome.baseline, answer, config.target_answer)) {
        Counterfactual cf;
        cf.kind = top_down ? CounterfactualKind::kTopDownRemoval
                           : CounterfactualKind::kBottomUpRetention;
        cf.perturbation = Combination::FromMask(ctx, candidate);
        cf.original_answer = outcome.baseline;
        cf.new_answer = std::move(answer);
        cf.perturbations_tested = tested;
        outcome.status = SearchStatus::kFound;
        outcome.perturbations_tested = tested;
        outcome.counterfactual = std::move(cf);
        return outcome;
      }
    }
  }
  outcome.status = static_cast<std::uint64_t>(tested) == total_candidates
                       ? SearchStatus::kNotFound
                       : SearchStatus::kBudgetExhausted;
  outcome.perturbations_tested = tested;
  return outcome;
}

namespace {

std::vector<Mask> SampleMasks(int k, std::uint64_t sample_size, std::uint64_t seed) {
  const Mask full = FullMask(k);
  std::mt19937_64 rng(seed);
  std::set<Mask> chosen{0};
  if (sample_size >= 2) chosen.insert(full);
  const std::uint64_t others_wanted = sample_size > chosen.size() ? sample_size - chosen.size() : 0;
  if (k <= kDefaultMaxExhaustiveK) {
    // Partial Fisher-Yates over the proper nonempty subsets.
    std::vector<Mask> pool;
    pool.reserve(full - 1);
    for (Mask m = 1; m < full; ++m) pool.push_back(m);
    const std::uint64_t take = std::min<std::uint64_t>(others_wanted, pool.size());
    for (std::uint64_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen.insert(pool[i]);
    }
  } else {
    std::uniform_int_distribution<Mask> pick(1, full - 1);
    while (chosen.size() < sample_size) chosen.insert(pick(rng));
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace

PerturbationInsight CombinationInsights(const ContextSequence& ctx, oracle::Gateway& gateway,
                                        const SearchConfig& config) {
  const int k = ctx.k();
  if (k > kMaxMaskBits) {
    throw Error(ErrorCode::kContextTooLarge, "context too large for subset sampling",
                {{"k", k}});
  }
  const std::uint64_t space = std::uint64_t{1} << k;
  std::vector<Mask> masks;
  if (config.sample_size && *config.sample_size < space) {
    if (*config.sample_size < 1) {
      throw Error(ErrorCode::kInvalidArgument, "sample_size must be positive");
    }
    masks = SampleMasks(k, *config.sample_size, config.seed);
  } else {
    CheckMaskable(ctx, std::min(config.max_exhaustive_k, kMaxMaskBits));
    masks.reserve(space);
    for (Mask m = 0; m < space; ++m) masks.push_back(m);
  }
  if (masks.size() > static_cast<std::size_t>(config.max_perturbations) + 2) {
    throw Error(ErrorCode::kBudgetExhausted,
                "insight evaluation set exceeds the perturbation budget",
                {{"evaluations", masks.size()}, {"max_perturbations", config.max_perturbations}});
  }
  std::sort(masks.begin(), masks.end(), CanonicalLess);

  std::vector<Perturbation> perturbations;
  perturbations.reserve(masks.size());
  for (Mask m : masks) perturbations.emplace_back(Combination::FromMask(ctx, m));
  const auto answers = gateway.EvaluateBatch(ctx, perturbations);

  PerturbationInsight insight;
  std::map<std::string, std::vector<Combination>> by_answer;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    insight.groups[answers[i].normalized].push_back(perturbations[i]);
    by_answer[answers[i].normalized].push_back(std::get<Combination>(perturbations[i]));
  }
  insight.total_evaluated = static_cast<int>(answers.size());
  for (const auto& [answer, combos] : by_answer) {
    insight.proportions[answer] =
        static_cast<double>(combos.size()) / static_cast<double>(insight.total_evaluated);
    AnswerRule rule = MineCombinationRule(answer, combos);
    if (!rule.empty()) insight.rules.push_back(std::move(rule));
  }
  return insight;
}

AnswerRule MineCombinationRule(const std::string& answer, std::span<const Combination> combos) {
  if (combos.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "rule mining needs at least one combination");
  }
  AnswerRule rule;
  rule.answer = answer;
  rule.kind = RuleKind::kRequiredSources;
  for (const auto& id : combos.front().member_ids) {
    const bool everywhere = std::all_of(combos.begin() + 1, combos.end(),
                                        [&](const Combination& c) { return c.Contains(id); });
    if (everywhere) rule.required_ids.push_back(id);
  }
  return rule;
}

}  // namespace rage::combination
