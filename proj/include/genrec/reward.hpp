// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/sampler.hpp"

namespace genrec {

// Which components enter a candidate's total reward. Rule and rank are the
// default pairing; the dense signals are opt-in extras.
struct RewardRecipe {
  bool rule = true;
  bool rank = true;
  bool collaborative = false;
  bool semantic = false;
};

// External inputs the dense components read. Only consulted when the
// matching recipe flag is set.
struct RewardContext {
  const CfBaseline* cf = nullptr;                 // collaborative
  const std::vector<int32_t>* history = nullptr;  // collaborative, item ids
  const Catalog* catalog = nullptr;               // semantic
};

// Per-candidate reward breakdown for one generation group. Component
// vectors are parallel to the group's candidates; disabled dense
// components stay empty.
struct RewardVector {
  int32_t target_item = -1;
  std::vector<double> rule;
  std::vector<double> rank;
  std::vector<double> collaborative;
  std::vector<double> semantic;
  std::vector<double> total;
};

// 1.0 iff the candidate is exactly the target item.
double rule_reward(int32_t candidate_item, int32_t target_item);

// Rank-shaped penalties. A candidate matching the target gets 0; a negative
// at generation rank p gets -1/ln(p+1) before normalization, so negatives
// the model ranked higher are punished harder. The vector is rescaled so
// the penalties sum to -1; when the group holds no negative everything is
// 0. The logarithm base cancels in the normalization.
std::vector<double> ranking_reward(const GenerationGroup& group,
                                   int32_t target_item);

// Each candidate scored by the matrix-factorization baseline against the
// user history, then standardized within the group (mean 0, unit population
// std). A flat score vector standardizes to all zeros.
std::vector<double> collaborative_reward(const GenerationGroup& group,
                                         const CfBaseline& cf,
                                         const std::vector<int32_t>& history);

// Cosine similarity between each candidate's catalog embedding and the
// target's. A zero-norm embedding on either side scores 0.
std::vector<double> semantic_reward(const GenerationGroup& group,
                                    const Catalog& catalog,
                                    int32_t target_item);

// Sum of the enabled components per candidate.
RewardVector combined_reward(const GenerationGroup& group, int32_t target_item,
                             const RewardRecipe& recipe,
                             const RewardContext& ctx = {});

// Groupwise normalization (R - mean) / std with the population std. When
// the spread falls below std_floor the whole vector is zeroed, so a
// degenerate group contributes no policy gradient instead of a blowup.
std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double std_floor = 1e-6);

}  // namespace genrec
