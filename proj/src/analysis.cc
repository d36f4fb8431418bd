#include "rage/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include "rage/assignment.hpp"
#include "rage/combination.hpp"
#include "rage/permutation.hpp"

namespace rage::analysis {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

// Lowercase with separators removed, so "Top-Down", "top_down" and "TopDown"
// compare equal.
std::string Squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::uint64_t Factorial(int k) {
  std::uint64_t f = 1;
  for (int i = 2; i <= k; ++i) {
    if (f > kSaturated / static_cast<std::uint64_t>(i)) return kSaturated;
    f *= static_cast<std::uint64_t>(i);
  }
  return f;
}

std::uint64_t SubsetCount(int k) { return k >= 64 ? kSaturated : std::uint64_t{1} << k; }

std::uint64_t SaturatingAdd(std::uint64_t a, std::uint64_t b) {
  return a > kSaturated - b ? kSaturated : a + b;
}

Error BadConfig(const std::string& message, const std::string& key) {
  return Error(ErrorCode::kInvalidArgument, message, {{"key", key}});
}

std::uint64_t PositiveInteger(const json& v, const std::string& key) {
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > 0) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() > 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw BadConfig(key + " must be a positive integer", key);
}

ScoringMethod ParseScoring(std::string_view s) {
  const std::string q = Squash(s);
  if (q == "retrievalscore" || q == "retrieval") return ScoringMethod::kRetrievalScore;
  if (q == "attentionsalience" || q == "attention") return ScoringMethod::kAttentionSalience;
  throw Error(ErrorCode::kInvalidArgument, "unknown scoring method: " + std::string(s),
              {{"key", "scoring"}});
}

json DocIds(const ContextSequence& ctx) { return ctx.DocIds(); }

}  // namespace

Family ParseFamily(std::string_view s) {
  const std::string q = Squash(s);
  if (q == "combination" || q == "combinations") return Family::kCombination;
  if (q == "permutation" || q == "permutations") return Family::kPermutation;
  if (q == "optimalpermutation" || q == "optimalpermutations" || q == "optimal") {
    return Family::kOptimalPermutation;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown analysis family: " + std::string(s),
              {{"family", std::string(s)}});
}

std::string_view ToString(Family f) {
  switch (f) {
    case Family::kCombination: return "Combination";
    case Family::kPermutation: return "Permutation";
    case Family::kOptimalPermutation: return "OptimalPermutation";
  }
  return "?";
}

CounterfactualKind ParseKind(std::string_view s) {
  const std::string q = Squash(s);
  if (q == "topdown" || q == "topdownremoval") return CounterfactualKind::kTopDownRemoval;
  if (q == "bottomup" || q == "bottomupretention") return CounterfactualKind::kBottomUpRetention;
  if (q == "reordering" || q == "reorder") return CounterfactualKind::kReordering;
  throw Error(ErrorCode::kInvalidArgument, "unknown counterfactual kind: " + std::string(s),
              {{"kind", std::string(s)}});
}

std::string_view KindName(CounterfactualKind k) {
  switch (k) {
    case CounterfactualKind::kTopDownRemoval: return "top_down";
    case CounterfactualKind::kBottomUpRetention: return "bottom_up";
    case CounterfactualKind::kReordering: return "reordering";
  }
  return "?";
}

Limits Limits::FromJson(const json& j, const Limits& defaults) {
  Limits l = defaults;
  if (j.is_null()) return l;
  l.default_max_perturbations = j.value("default_max_perturbations", l.default_max_perturbations);
  l.max_perturbations = j.value("max_perturbations", l.max_perturbations);
  l.combination_max_k = j.value("combination_max_k", l.combination_max_k);
  l.permutation_max_k = j.value("permutation_max_k", l.permutation_max_k);
  l.max_s = j.value("max_s", l.max_s);
  l.max_top_k = j.value("max_top_k", l.max_top_k);
  if (l.default_max_perturbations < 1 || l.max_perturbations < l.default_max_perturbations ||
      l.combination_max_k < 1 || l.permutation_max_k < 1 || l.max_s < 1 || l.max_top_k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "inconsistent limits", l.ToJson());
  }
  return l;
}

json Limits::ToJson() const {
  return {{"default_max_perturbations", default_max_perturbations},
          {"max_perturbations", max_perturbations},
          {"combination_max_k", combination_max_k},
          {"permutation_max_k", permutation_max_k},
          {"max_s", max_s},
          {"max_top_k", max_top_k}};
}

AnalysisConfig AnalysisConfig::FromJson(const json& j, const Limits& limits) {
  AnalysisConfig c;
  c.max_perturbations = limits.default_max_perturbations;
  if (j.is_null()) return c;
  if (!j.is_object()) throw BadConfig("config must be a JSON object", "config");
  bool exhaustive = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "sample_size") {
      if (!v.is_null()) c.sample_size = PositiveInteger(v, key);
    } else if (key == "exhaustive") {
      if (!v.is_boolean()) throw BadConfig("exhaustive must be a boolean", key);
      exhaustive = v.get<bool>();
    } else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw BadConfig("seed must be a non-negative integer", key);
      }
      c.seed = v.get<std::uint64_t>();
    } else if (key == "max_perturbations") {
      const std::uint64_t m = PositiveInteger(v, key);
      if (m > static_cast<std::uint64_t>(limits.max_perturbations)) {
        throw Error(ErrorCode::kInvalidArgument, "max_perturbations exceeds the configured limit",
                    {{"key", key}, {"limit", limits.max_perturbations}});
      }
      c.max_perturbations = static_cast<int>(m);
    } else if (key == "scoring") {
      if (!v.is_string()) throw BadConfig("scoring must be a string", key);
      c.scoring = ParseScoring(v.get<std::string>());
    } else if (key == "target_answer") {
      if (v.is_null()) continue;
      if (!v.is_string()) throw BadConfig("target_answer must be a string", key);
      c.target_answer = v.get<std::string>();
    } else if (key == "s") {
      c.s = PositiveInteger(v, key);
      if (c.s > limits.max_s) {
        throw Error(ErrorCode::kInvalidArgument, "s exceeds the configured limit",
                    {{"key", key}, {"limit", limits.max_s}});
      }
    } else if (key == "profile") {
      if (v.is_string()) {
        if (Squash(v.get<std::string>()) != "vshaped") {
          throw BadConfig("unknown attention profile: " + v.get<std::string>(), key);
        }
        c.profile.clear();
      } else if (v.is_array()) {
        for (const auto& w : v) {
          if (!w.is_number() || !(w.get<double>() > 0.0)) {
            throw BadConfig("profile weights must be positive numbers", key);
          }
          c.profile.push_back(w.get<double>());
        }
      } else {
        throw BadConfig("profile must be \"v_shaped\" or an array of weights", key);
      }
    } else {
      throw BadConfig("unknown config key: " + key, key);
    }
  }
  if (exhaustive && c.sample_size) {
    throw BadConfig("exhaustive and sample_size are mutually exclusive", "exhaustive");
  }
  return c;
}

json AnalysisConfig::ToJson() const {
  json j;
  j["sample_size"] = sample_size ? json(*sample_size) : json(nullptr);
  j["seed"] = seed;
  j["max_perturbations"] = max_perturbations;
  j["scoring"] = rage::ToString(scoring);
  j["target_answer"] = target_answer ? json(*target_answer) : json(nullptr);
  j["s"] = s;
  j["profile"] = profile.empty() ? json("v_shaped") : json(profile);
  return j;
}

std::uint64_t PlannedEvaluations(const ContextSequence& ctx, Family family,
                                 const AnalysisConfig& config) {
  const int k = ctx.k();
  switch (family) {
    case Family::kCombination: {
      const std::uint64_t space = SubsetCount(k);
      return config.sample_size ? std::min(*config.sample_size, space) : space;
    }
    case Family::kPermutation:
      return config.sample_size ? *config.sample_size : Factorial(k);
    case Family::kOptimalPermutation:
      return std::min(config.s, Factorial(k));
  }
  return 0;
}

std::uint64_t PlannedEvaluations(const ContextSequence& ctx, CounterfactualKind kind,
                                 const AnalysisConfig& config) {
  const std::uint64_t candidates = kind == CounterfactualKind::kReordering
                                       ? Factorial(ctx.k()) - 1
                                       : SubsetCount(ctx.k()) - 1;
  return SaturatingAdd(
      1, std::min(candidates, static_cast<std::uint64_t>(config.max_perturbations)));
}

json ContextPayload(const ContextSequence& ctx, const AnswerRecord& full,
                    const AnswerRecord& empty) {
  return {{"query", ctx.query()},
          {"k", ctx.k()},
          {"sources", ctx.sources()},
          {"baselines", {{"full", full}, {"empty", empty}}}};
}

std::pair<AnswerRecord, AnswerRecord> EvaluateBaselines(const ContextSequence& ctx,
                                                        oracle::Gateway& gateway) {
  AnswerRecord full = gateway.Evaluate(ctx, Combination{ctx.DocIds()});
  AnswerRecord empty = gateway.Evaluate(ctx, Combination{});
  return {std::move(full), std::move(empty)};
}

json RunInsight(const ContextSequence& ctx, oracle::Gateway& gateway, Family family,
                const AnalysisConfig& config, const Limits& limits) {
  json payload = {{"family", ToString(family)},
                  {"config", config.ToJson()},
                  {"query", ctx.query()},
                  {"context", DocIds(ctx)}};
  switch (family) {
    case Family::kCombination: {
      combination::SearchConfig sc;
      sc.max_perturbations = config.max_perturbations;
      sc.scoring = config.scoring;
      sc.sample_size = config.sample_size;
      sc.seed = config.seed;
      sc.max_exhaustive_k = limits.combination_max_k;
      payload["insight"] = combination::CombinationInsights(ctx, gateway, sc);
      break;
    }
    case Family::kPermutation: {
      permutation::SearchConfig pc;
      pc.max_perturbations = config.max_perturbations;
      pc.sample_size = config.sample_size;
      pc.seed = config.seed;
      pc.max_exhaustive_k = limits.permutation_max_k;
      payload["insight"] = permutation::PermutationInsights(ctx, gateway, pc);
      break;
    }
    case Family::kOptimalPermutation: {
      const RelevanceVector rv = combination::ScoreSources(ctx, gateway, config.scoring);
      const assignment::AttentionProfile profile =
          config.profile.empty() ? assignment::VShapedProfile(ctx.k())
                                 : assignment::AttentionProfile{config.profile};
      const auto ranked = assignment::OptimalPermutations(ctx, rv, profile, config.s);
      if (ranked.size() > static_cast<std::size_t>(config.max_perturbations)) {
        throw Error(ErrorCode::kBudgetExhausted,
                    "ranked permutations exceed the perturbation budget",
                    {{"evaluations", ranked.size()},
                     {"max_perturbations", config.max_perturbations}});
      }
      std::vector<Perturbation> perms;
      perms.reserve(ranked.size());
      for (const auto& r : ranked) perms.emplace_back(r.permutation);
      const auto answers = gateway.EvaluateBatch(ctx, perms);
      json list = json::array();
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        json item = assignment::ToJson(ranked[i], &ctx);
        item["answer"] = answers[i];
        list.push_back(std::move(item));
      }
      payload["relevance"] = rv;
      payload["profile"] = profile.weights;
      payload["permutations"] = std::move(list);
      break;
    }
  }
  return payload;
}

json RunCounterfactual(const ContextSequence& ctx, oracle::Gateway& gateway,
                       CounterfactualKind kind, const AnalysisConfig& config,
                       const Limits& limits) {
  CounterfactualOutcome outcome;
  if (kind == CounterfactualKind::kReordering) {
    if (config.target_answer) {
      throw BadConfig("target_answer applies to combination searches only", "target_answer");
    }
    permutation::SearchConfig pc;
    pc.max_perturbations = config.max_perturbations;
    pc.max_exhaustive_k = limits.permutation_max_k;
    outcome = permutation::FindPermutationCounterfactual(ctx, gateway, pc);
  } else {
    combination::SearchConfig sc;
    sc.direction = kind == CounterfactualKind::kTopDownRemoval ? combination::Direction::kTopDown
                                                               : combination::Direction::kBottomUp;
    sc.target_answer = config.target_answer;
    sc.max_perturbations = config.max_perturbations;
    sc.scoring = config.scoring;
    sc.max_exhaustive_k = limits.combination_max_k;
    outcome = combination::FindCombinationCounterfactual(ctx, gateway, sc);
  }
  return {{"kind", KindName(kind)},
          {"config", config.ToJson()},
          {"query", ctx.query()},
          {"context", DocIds(ctx)},
          {"outcome", outcome}};
}

}  // namespace rage::analysis
