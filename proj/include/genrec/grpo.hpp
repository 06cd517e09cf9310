// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/dataset.hpp"
#include "genrec/optimizer.hpp"
#include "genrec/policy.hpp"
#include "genrec/reward.hpp"
#include "genrec/sampler.hpp"
#include "genrec/tape.hpp"
#include "genrec/trie.hpp"

namespace genrec {

enum class SamplerKind : int32_t { kBeam = 0, kTopK = 1, kDynamic = 2 };

const char* sampler_name(SamplerKind kind);
SamplerKind sampler_from_name(const std::string& name);

// Knobs of the reinforcement stage. group_size doubles as the beam width,
// so the group is the beam's ranked output when the beam sampler is active.
struct RLConfig {
  int64_t group_size = 16;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  double std_floor = 1e-6;
  int64_t epochs = 2;
  int64_t prompts_per_epoch = 1024;
  uint64_t seed = 0;
  double temperature = 1.0;  // sampling-based rollouts only
  SamplerKind sampler = SamplerKind::kBeam;
  RewardRecipe recipe;
  TaskMix mix;        // retrieval vs alignment interleaving
  AdamWConfig optim;  // one step per rollout group

  RLConfig() { optim.lr = 1e-5; }
};

void validate_rl_config(const RLConfig& cfg);

// One completion with everything the update step needs, recorded at
// rollout time against the then-current (behavior) policy and the frozen
// reference.
struct RolloutCandidate {
  std::vector<int32_t> tokens;   // response tokens, EOS last
  std::vector<double> old_logp;  // per token, behavior policy
  std::vector<double> ref_logp;  // per token, frozen reference
  int32_t item_id = -1;
  int32_t rank = 0;
  double score = 0.0;
};

struct RolloutGroup {
  std::vector<int32_t> prompt;
  int32_t target_item = -1;
  int32_t task = 0;  // TaskFamily value
  std::vector<RolloutCandidate> candidates;
  RewardVector rewards;
  std::vector<double> advantages;  // parallel to candidates
  DiversityStat diversity;
  bool informative = false;  // at least one nonzero advantage
};

// Flat next-token layout over every (prompt + completion) segment of the
// given groups, in group then candidate order. completion_rows picks out
// the logit rows that predict completion tokens; lengths holds each
// candidate's completion length for unflattening.
struct PackedRollouts {
  std::vector<int32_t> tokens;
  std::vector<int32_t> seq_ids;
  std::vector<int32_t> targets;
  std::vector<int32_t> completion_rows;
  std::vector<int64_t> lengths;
};
PackedRollouts pack_rollouts(const std::vector<RolloutGroup>& groups,
                             int64_t max_len);

// Log-prob of every completion token, concatenated in pack order. This is
// a value-only pass of exactly the update-step graph, so scoring a rollout
// under unchanged parameters reproduces the update pass bit for bit.
std::vector<double> completion_log_probs(const ParamSet& params,
                                         const PolicyConfig& cfg,
                                         const PackedRollouts& pack);

// Samples one group for the prompt, scores it under both policies, and
// attaches rewards plus normalized advantages. Retrieval prompts use the
// configured recipe; alignment prompts keep the rule reward only, since no
// ranked negative set is defined for them.
RolloutGroup rollout_group(const ParamSet& params, const ParamSet& ref_params,
                           const PolicyConfig& cfg, const RLConfig& rlcfg,
                           const std::vector<int32_t>& prompt,
                           int32_t target_item, TaskFamily task,
                           const TokenTrie& trie, uint64_t sample_seed,
                           const RewardContext& ctx = {});

struct GrpoLossResult {
  double loss = 0.0;
  GrpoStats stats;
  std::vector<Tensor> grads;  // pairs with params
};

// Clipped-surrogate loss with the KL penalty over the groups' completion
// tokens. Each token carries weight 1 / (n_groups * group size * completion
// length), so the loss is the group mean of per-candidate token means.
GrpoLossResult grpo_loss(const ParamSet& params, const PolicyConfig& cfg,
                         const std::vector<RolloutGroup>& groups,
                         double clip_eps, double kl_beta);

struct RlStepMetrics {
  int64_t step = 0;
  double mean_reward = 0.0;
  double diversity = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;
};

struct RlResult {
  ParamSet params;
  std::vector<RlStepMetrics> history;
  int64_t groups_total = 0;
  int64_t groups_informative = 0;
  std::vector<std::string> warnings;
};

// The reinforcement loop. Per step: draw a task family from the mix and an
// instance for it, roll out one group with the configured sampler against
// the current parameters, and take one AdamW step on the surrogate. The
// reference policy stays frozen at the given starting point. An epoch that
// produces no informative group leaves a warning and training continues.
//
// cf is only required when the recipe enables the collaborative component.
// Non-empty paths stream per-step metrics as CSV and rollout traces as
// line-delimited JSON.
RlResult rl_train(const ParamSet& sft_params, const PolicyConfig& cfg,
                  const Catalog& catalog, const DatasetSplit& split,
                  const SidTokenMap& sids, const VocabLayout& layout,
                  const CatalogTries& tries, const RLConfig& rlcfg,
                  const CfBaseline* cf = nullptr,
                  const std::string& metrics_csv_path = "",
                  const std::string& trace_jsonl_path = "");

}  // namespace genrec
