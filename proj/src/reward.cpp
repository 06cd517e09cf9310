// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/reward.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "genrec/check.hpp"
#include "genrec/corpus.hpp"

namespace genrec {
namespace {

// Candidates must carry resolved items and a 1..G rank permutation before
// any reward is computed; both come from the constrained samplers.
void check_group(const GenerationGroup& group) {
  size_t g = group.candidates.size();
  check(g > 0, "reward: empty candidate group");
  std::vector<bool> seen(g, false);
  for (const Candidate& c : group.candidates) {
    check(c.item_id >= 0, "reward: candidate without an item id");
    check(c.rank >= 1 && static_cast<size_t>(c.rank) <= g,
          "reward: rank ", c.rank, " outside 1..", g);
    check(!seen[static_cast<size_t>(c.rank - 1)],
          "reward: duplicate rank ", c.rank);
    seen[static_cast<size_t>(c.rank - 1)] = true;
  }
}

// (x - mean) / population std, or all zeros when the spread is below the
// floor. Shared by advantage normalization and the collaborative scores.
std::vector<double> standardize(const std::vector<double>& x,
                                double std_floor) {
  size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double sd = std::sqrt(var);
  std::vector<double> out(n, 0.0);
  if (sd < std_floor) return out;
  for (size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

}  // namespace

double rule_reward(int32_t candidate_item, int32_t target_item) {
  return candidate_item == target_item ? 1.0 : 0.0;
}

std::vector<double> ranking_reward(const GenerationGroup& group,
                                   int32_t target_item) {
  check_group(group);
  size_t g = group.candidates.size();
  std::vector<double> raw(g, 0.0);
  double sum = 0.0;
  for (size_t i = 0; i < g; ++i) {
    const Candidate& c = group.candidates[i];
    if (c.item_id == target_item) continue;
    raw[i] = -1.0 / std::log(static_cast<double>(c.rank) + 1.0);
    sum += raw[i];
  }
  std::vector<double> out(g, 0.0);
  if (sum == 0.0) return out;  // every candidate hit the target
  for (size_t i = 0; i < g; ++i) out[i] = -raw[i] / sum;
  return out;
}

std::vector<double> collaborative_reward(const GenerationGroup& group,
                                         const CfBaseline& cf,
                                         const std::vector<int32_t>& history) {
  check_group(group);
  std::vector<double> raw;
  raw.reserve(group.candidates.size());
  for (const Candidate& c : group.candidates)
    raw.push_back(cf.score_history(history, c.item_id));
  return standardize(raw, 1e-6);
}

std::vector<double> semantic_reward(const GenerationGroup& group,
                                    const Catalog& catalog,
                                    int32_t target_item) {
  check_group(group);
  const std::vector<double>& t = item_by_id(catalog, target_item).embedding;
  double t_norm = 0.0;
  for (double v : t) t_norm += v * v;
  t_norm = std::sqrt(t_norm);
  std::vector<double> out;
  out.reserve(group.candidates.size());
  for (const Candidate& c : group.candidates) {
    const std::vector<double>& e = item_by_id(catalog, c.item_id).embedding;
    check(e.size() == t.size(), "reward: embedding size ", e.size(),
          " does not match target's ", t.size());
    double dot = 0.0;
    double e_norm = 0.0;
    for (size_t i = 0; i < e.size(); ++i) {
      dot += e[i] * t[i];
      e_norm += e[i] * e[i];
    }
    e_norm = std::sqrt(e_norm);
    out.push_back(e_norm == 0.0 || t_norm == 0.0 ? 0.0
                                                 : dot / (e_norm * t_norm));
  }
  return out;
}

RewardVector combined_reward(const GenerationGroup& group, int32_t target_item,
                             const RewardRecipe& recipe,
                             const RewardContext& ctx) {
  check_group(group);
  size_t g = group.candidates.size();
  RewardVector r;
  r.target_item = target_item;
  r.total.assign(g, 0.0);
  if (recipe.rule) {
    r.rule.reserve(g);
    for (const Candidate& c : group.candidates)
      r.rule.push_back(rule_reward(c.item_id, target_item));
    for (size_t i = 0; i < g; ++i) r.total[i] += r.rule[i];
  }
  if (recipe.rank) {
    r.rank = ranking_reward(group, target_item);
    for (size_t i = 0; i < g; ++i) r.total[i] += r.rank[i];
  }
  if (recipe.collaborative) {
    check(ctx.cf != nullptr && ctx.history != nullptr,
          "reward: collaborative component needs a trained scorer and a "
          "user history");
    r.collaborative = collaborative_reward(group, *ctx.cf, *ctx.history);
    for (size_t i = 0; i < g; ++i) r.total[i] += r.collaborative[i];
  }
  if (recipe.semantic) {
    check(ctx.catalog != nullptr,
          "reward: semantic component needs the item catalog");
    r.semantic = semantic_reward(group, *ctx.catalog, target_item);
    for (size_t i = 0; i < g; ++i) r.total[i] += r.semantic[i];
  }
  return r;
}

std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double std_floor) {
  check(rewards.size() >= 2, "advantages: need at least 2 rewards, got ",
        rewards.size());
  check(std_floor > 0.0, "advantages: std floor must be positive, got ",
        std_floor);
  return standardize(rewards, std_floor);
}

}  // namespace genrec
